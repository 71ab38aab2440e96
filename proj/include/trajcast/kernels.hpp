#pragma once

// Compute kernels for the layer set. Every kernel comes in two forms:
//   *_serial  — straightforward reference loops, kept as the golden path for tests
//   *_omp     — OpenMP version with the same per-output-element reduction order
// Because each output element is produced by exactly one thread running the same
// inner loop as the serial version, parallel results are bit-identical to serial
// ones for any thread count. Backward kernels accumulate (+=) into their target.

#include <cstdint>

#include "trajcast/ndarray.hpp"

namespace traj::kern {

bool parallel_enabled();
void set_parallel(bool on);

// work threshold below which the omp dispatch falls back to serial
inline constexpr int64_t kMinParallelWork = 1 << 14;

struct Conv1dDims {
    int64_t B, Cin, L, Cout, k, p;
    int64_t Lo() const { return L + 2 * p - k + 1; }
};

struct Conv2dDims {
    int64_t B, Cin, H, W, Cout, kh, kw, ph, pw;
    int64_t Ho() const { return H + 2 * ph - kh + 1; }
    int64_t Wo() const { return W + 2 * pw - kw + 1; }
};

// transpose conv; weight layout is (Cin, Cout, k), the adjoint pairing of conv1d
struct TConv1dDims {
    int64_t B, Cin, L, Cout, k, s, p;
    int64_t Lo() const { return (L - 1) * s - 2 * p + k; }
};

// ---- fully connected: x[N,Din] w[Dout,Din] b[Dout] -> y[N,Dout] -----------

template <class Real>
void fc_forward_serial(const Real* x, const Real* w, const Real* b, Real* y, int64_t N,
                       int64_t Din, int64_t Dout);
template <class Real>
void fc_forward_omp(const Real* x, const Real* w, const Real* b, Real* y, int64_t N, int64_t Din,
                    int64_t Dout);
template <class Real>
void fc_grad_input_serial(const Real* dy, const Real* w, Real* dx, int64_t N, int64_t Din,
                          int64_t Dout);
template <class Real>
void fc_grad_input_omp(const Real* dy, const Real* w, Real* dx, int64_t N, int64_t Din,
                       int64_t Dout);
template <class Real>
void fc_grad_weight_serial(const Real* dy, const Real* x, Real* dw, Real* db, int64_t N,
                           int64_t Din, int64_t Dout);
template <class Real>
void fc_grad_weight_omp(const Real* dy, const Real* x, Real* dw, Real* db, int64_t N, int64_t Din,
                        int64_t Dout);

// ---- conv1d: x[B,Cin,L] w[Cout,Cin,k] -> y[B,Cout,Lo]; cross-correlation ---

template <class Real>
void conv1d_forward_serial(const Real* x, const Real* w, const Real* b, Real* y,
                           const Conv1dDims& d);
template <class Real>
void conv1d_forward_omp(const Real* x, const Real* w, const Real* b, Real* y, const Conv1dDims& d);
template <class Real>
void conv1d_grad_input_serial(const Real* dy, const Real* w, Real* dx, const Conv1dDims& d);
template <class Real>
void conv1d_grad_input_omp(const Real* dy, const Real* w, Real* dx, const Conv1dDims& d);
template <class Real>
void conv1d_grad_weight_serial(const Real* dy, const Real* x, Real* dw, Real* db,
                               const Conv1dDims& d);
template <class Real>
void conv1d_grad_weight_omp(const Real* dy, const Real* x, Real* dw, Real* db,
                            const Conv1dDims& d);

// ---- conv2d: x[B,Cin,H,W] w[Cout,Cin,kh,kw] -> y[B,Cout,Ho,Wo] -------------

template <class Real>
void conv2d_forward_serial(const Real* x, const Real* w, const Real* b, Real* y,
                           const Conv2dDims& d);
template <class Real>
void conv2d_forward_omp(const Real* x, const Real* w, const Real* b, Real* y, const Conv2dDims& d);
template <class Real>
void conv2d_grad_input_serial(const Real* dy, const Real* w, Real* dx, const Conv2dDims& d);
template <class Real>
void conv2d_grad_input_omp(const Real* dy, const Real* w, Real* dx, const Conv2dDims& d);
template <class Real>
void conv2d_grad_weight_serial(const Real* dy, const Real* x, Real* dw, Real* db,
                               const Conv2dDims& d);
template <class Real>
void conv2d_grad_weight_omp(const Real* dy, const Real* x, Real* dw, Real* db,
                            const Conv2dDims& d);

// ---- transpose conv1d: x[B,Cin,L] w[Cin,Cout,k] -> y[B,Cout,Lo] ------------

template <class Real>
void tconv1d_forward_serial(const Real* x, const Real* w, const Real* b, Real* y,
                            const TConv1dDims& d);
template <class Real>
void tconv1d_forward_omp(const Real* x, const Real* w, const Real* b, Real* y,
                         const TConv1dDims& d);
template <class Real>
void tconv1d_grad_input_serial(const Real* dy, const Real* w, Real* dx, const TConv1dDims& d);
template <class Real>
void tconv1d_grad_input_omp(const Real* dy, const Real* w, Real* dx, const TConv1dDims& d);
template <class Real>
void tconv1d_grad_weight_serial(const Real* dy, const Real* x, Real* dw, Real* db,
                                const TConv1dDims& d);
template <class Real>
void tconv1d_grad_weight_omp(const Real* dy, const Real* x, Real* dw, Real* db,
                             const TConv1dDims& d);

// ---- dispatchers -----------------------------------------------------------

template <class Real>
void fc_forward(const Real* x, const Real* w, const Real* b, Real* y, int64_t N, int64_t Din,
                int64_t Dout) {
    if (parallel_enabled() && N * Dout * Din >= kMinParallelWork)
        fc_forward_omp(x, w, b, y, N, Din, Dout);
    else
        fc_forward_serial(x, w, b, y, N, Din, Dout);
}
template <class Real>
void fc_grad_input(const Real* dy, const Real* w, Real* dx, int64_t N, int64_t Din, int64_t Dout) {
    if (parallel_enabled() && N * Dout * Din >= kMinParallelWork)
        fc_grad_input_omp(dy, w, dx, N, Din, Dout);
    else
        fc_grad_input_serial(dy, w, dx, N, Din, Dout);
}
template <class Real>
void fc_grad_weight(const Real* dy, const Real* x, Real* dw, Real* db, int64_t N, int64_t Din,
                    int64_t Dout) {
    if (parallel_enabled() && N * Dout * Din >= kMinParallelWork)
        fc_grad_weight_omp(dy, x, dw, db, N, Din, Dout);
    else
        fc_grad_weight_serial(dy, x, dw, db, N, Din, Dout);
}

template <class Real>
void conv1d_forward(const Real* x, const Real* w, const Real* b, Real* y, const Conv1dDims& d) {
    if (parallel_enabled() && d.B * d.Cout * d.Lo() * d.Cin * d.k >= kMinParallelWork)
        conv1d_forward_omp(x, w, b, y, d);
    else
        conv1d_forward_serial(x, w, b, y, d);
}
template <class Real>
void conv1d_grad_input(const Real* dy, const Real* w, Real* dx, const Conv1dDims& d) {
    if (parallel_enabled() && d.B * d.Cin * d.L * d.Cout * d.k >= kMinParallelWork)
        conv1d_grad_input_omp(dy, w, dx, d);
    else
        conv1d_grad_input_serial(dy, w, dx, d);
}
template <class Real>
void conv1d_grad_weight(const Real* dy, const Real* x, Real* dw, Real* db, const Conv1dDims& d) {
    if (parallel_enabled() && d.Cout * d.Cin * d.k * d.B * d.Lo() >= kMinParallelWork)
        conv1d_grad_weight_omp(dy, x, dw, db, d);
    else
        conv1d_grad_weight_serial(dy, x, dw, db, d);
}

template <class Real>
void conv2d_forward(const Real* x, const Real* w, const Real* b, Real* y, const Conv2dDims& d) {
    if (parallel_enabled() && d.B * d.Cout * d.Ho() * d.Wo() * d.Cin * d.kh * d.kw >= kMinParallelWork)
        conv2d_forward_omp(x, w, b, y, d);
    else
        conv2d_forward_serial(x, w, b, y, d);
}
template <class Real>
void conv2d_grad_input(const Real* dy, const Real* w, Real* dx, const Conv2dDims& d) {
    if (parallel_enabled() && d.B * d.Cin * d.H * d.W * d.Cout * d.kh * d.kw >= kMinParallelWork)
        conv2d_grad_input_omp(dy, w, dx, d);
    else
        conv2d_grad_input_serial(dy, w, dx, d);
}
template <class Real>
void conv2d_grad_weight(const Real* dy, const Real* x, Real* dw, Real* db, const Conv2dDims& d) {
    if (parallel_enabled() && d.Cout * d.Cin * d.kh * d.kw * d.B * d.Ho() * d.Wo() >= kMinParallelWork)
        conv2d_grad_weight_omp(dy, x, dw, db, d);
    else
        conv2d_grad_weight_serial(dy, x, dw, db, d);
}

template <class Real>
void tconv1d_forward(const Real* x, const Real* w, const Real* b, Real* y, const TConv1dDims& d) {
    if (parallel_enabled() && d.B * d.Cout * d.Lo() * d.Cin * d.k >= kMinParallelWork)
        tconv1d_forward_omp(x, w, b, y, d);
    else
        tconv1d_forward_serial(x, w, b, y, d);
}
template <class Real>
void tconv1d_grad_input(const Real* dy, const Real* w, Real* dx, const TConv1dDims& d) {
    if (parallel_enabled() && d.B * d.Cin * d.L * d.Cout * d.k >= kMinParallelWork)
        tconv1d_grad_input_omp(dy, w, dx, d);
    else
        tconv1d_grad_input_serial(dy, w, dx, d);
}
template <class Real>
void tconv1d_grad_weight(const Real* dy, const Real* x, Real* dw, Real* db, const TConv1dDims& d) {
    if (parallel_enabled() && d.Cin * d.Cout * d.k * d.B * d.L >= kMinParallelWork)
        tconv1d_grad_weight_omp(dy, x, dw, db, d);
    else
        tconv1d_grad_weight_serial(dy, x, dw, db, d);
}

// ---- implementations -------------------------------------------------------

template <class Real>
void fc_forward_serial(const Real* x, const Real* w, const Real* b, Real* y, int64_t N,
                       int64_t Din, int64_t Dout) {
    for (int64_t n = 0; n < N; ++n) {
        const Real* xn = x + n * Din;
        for (int64_t j = 0; j < Dout; ++j) {
            Real acc = b ? b[j] : Real(0);
            const Real* wj = w + j * Din;
            for (int64_t i = 0; i < Din; ++i) acc += wj[i] * xn[i];
            y[n * Dout + j] = acc;
        }
    }
}

template <class Real>
void fc_forward_omp(const Real* x, const Real* w, const Real* b, Real* y, int64_t N, int64_t Din,
                    int64_t Dout) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t j = 0; j < Dout; ++j) {
            const Real* xn = x + n * Din;
            const Real* wj = w + j * Din;
            Real acc = b ? b[j] : Real(0);
            for (int64_t i = 0; i < Din; ++i) acc += wj[i] * xn[i];
            y[n * Dout + j] = acc;
        }
    }
}

template <class Real>
void fc_grad_input_serial(const Real* dy, const Real* w, Real* dx, int64_t N, int64_t Din,
                          int64_t Dout) {
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < Din; ++i) {
            Real acc = Real(0);
            for (int64_t j = 0; j < Dout; ++j) acc += dy[n * Dout + j] * w[j * Din + i];
            dx[n * Din + i] += acc;
        }
}

template <class Real>
void fc_grad_input_omp(const Real* dy, const Real* w, Real* dx, int64_t N, int64_t Din,
                       int64_t Dout) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t n = 0; n < N; ++n)
        for (int64_t i = 0; i < Din; ++i) {
            Real acc = Real(0);
            for (int64_t j = 0; j < Dout; ++j) acc += dy[n * Dout + j] * w[j * Din + i];
            dx[n * Din + i] += acc;
        }
}

template <class Real>
void fc_grad_weight_serial(const Real* dy, const Real* x, Real* dw, Real* db, int64_t N,
                           int64_t Din, int64_t Dout) {
    for (int64_t j = 0; j < Dout; ++j) {
        for (int64_t i = 0; i < Din; ++i) {
            Real acc = Real(0);
            for (int64_t n = 0; n < N; ++n) acc += dy[n * Dout + j] * x[n * Din + i];
            dw[j * Din + i] += acc;
        }
        if (db) {
            Real acc = Real(0);
            for (int64_t n = 0; n < N; ++n) acc += dy[n * Dout + j];
            db[j] += acc;
        }
    }
}

template <class Real>
void fc_grad_weight_omp(const Real* dy, const Real* x, Real* dw, Real* db, int64_t N, int64_t Din,
                        int64_t Dout) {
#pragma omp parallel for schedule(static)
    for (int64_t j = 0; j < Dout; ++j) {
        for (int64_t i = 0; i < Din; ++i) {
            Real acc = Real(0);
            for (int64_t n = 0; n < N; ++n) acc += dy[n * Dout + j] * x[n * Din + i];
            dw[j * Din + i] += acc;
        }
        if (db) {
            Real acc = Real(0);
            for (int64_t n = 0; n < N; ++n) acc += dy[n * Dout + j];
            db[j] += acc;
        }
    }
}

// One output row y[b,co,:] accumulated kernel-tap by kernel-tap over contiguous
// spans; the (ci, k) contribution order matches the textbook triple loop.
template <class Real>
inline void conv1d_row(const Real* x, const Real* w, const Real* b, Real* y,
                       const Conv1dDims& d, int64_t bb, int64_t co) {
    const int64_t Lo = d.Lo();
    Real* yr = y + (bb * d.Cout + co) * Lo;
    const Real bias = b ? b[co] : Real(0);
    for (int64_t ol = 0; ol < Lo; ++ol) yr[ol] = bias;
    for (int64_t ci = 0; ci < d.Cin; ++ci) {
        const Real* xc = x + (bb * d.Cin + ci) * d.L;
        const Real* wc = w + (co * d.Cin + ci) * d.k;
        for (int64_t kk = 0; kk < d.k; ++kk) {
            const Real wv = wc[kk];
            const int64_t lo = std::max<int64_t>(0, d.p - kk);
            const int64_t hi = std::min(Lo, d.L + d.p - kk);
            const Real* xs = xc + kk - d.p;
            for (int64_t ol = lo; ol < hi; ++ol) yr[ol] += wv * xs[ol];
        }
    }
}

template <class Real>
void conv1d_forward_serial(const Real* x, const Real* w, const Real* b, Real* y,
                           const Conv1dDims& d) {
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t co = 0; co < d.Cout; ++co) conv1d_row(x, w, b, y, d, bb, co);
}

template <class Real>
void conv1d_forward_omp(const Real* x, const Real* w, const Real* b, Real* y,
                        const Conv1dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t co = 0; co < d.Cout; ++co) conv1d_row(x, w, b, y, d, bb, co);
}

template <class Real>
inline void conv1d_dx_row(const Real* dy, const Real* w, Real* dx, const Conv1dDims& d, int64_t bb,
                          int64_t ci) {
    const int64_t Lo = d.Lo();
    Real* dxr = dx + (bb * d.Cin + ci) * d.L;
    for (int64_t co = 0; co < d.Cout; ++co) {
        const Real* dyc = dy + (bb * d.Cout + co) * Lo;
        const Real* wc = w + (co * d.Cin + ci) * d.k;
        for (int64_t kk = 0; kk < d.k; ++kk) {
            const Real wv = wc[kk];
            const int64_t lo = std::max<int64_t>(0, kk - d.p);
            const int64_t hi = std::min(d.L, Lo + kk - d.p);
            const Real* dys = dyc - kk + d.p;
            for (int64_t il = lo; il < hi; ++il) dxr[il] += wv * dys[il];
        }
    }
}

template <class Real>
void conv1d_grad_input_serial(const Real* dy, const Real* w, Real* dx, const Conv1dDims& d) {
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t ci = 0; ci < d.Cin; ++ci) conv1d_dx_row(dy, w, dx, d, bb, ci);
}

template <class Real>
void conv1d_grad_input_omp(const Real* dy, const Real* w, Real* dx, const Conv1dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t ci = 0; ci < d.Cin; ++ci) conv1d_dx_row(dy, w, dx, d, bb, ci);
}

template <class Real>
inline void conv1d_dw_cell(const Real* dy, const Real* x, Real* dw, Real* db, const Conv1dDims& d,
                           int64_t co, int64_t ci, bool do_bias) {
    const int64_t Lo = d.Lo();
    for (int64_t kk = 0; kk < d.k; ++kk) {
        Real acc = Real(0);
        const int64_t lo = std::max<int64_t>(0, d.p - kk);
        const int64_t hi = std::min(Lo, d.L + d.p - kk);
        for (int64_t bb = 0; bb < d.B; ++bb) {
            const Real* dyc = dy + (bb * d.Cout + co) * Lo;
            const Real* xs = x + (bb * d.Cin + ci) * d.L + kk - d.p;
            for (int64_t ol = lo; ol < hi; ++ol) acc += dyc[ol] * xs[ol];
        }
        dw[(co * d.Cin + ci) * d.k + kk] += acc;
    }
    if (do_bias && db) {
        Real acc = Real(0);
        for (int64_t bb = 0; bb < d.B; ++bb) {
            const Real* dyc = dy + (bb * d.Cout + co) * Lo;
            for (int64_t ol = 0; ol < Lo; ++ol) acc += dyc[ol];
        }
        db[co] += acc;
    }
}

template <class Real>
void conv1d_grad_weight_serial(const Real* dy, const Real* x, Real* dw, Real* db,
                               const Conv1dDims& d) {
    for (int64_t co = 0; co < d.Cout; ++co)
        for (int64_t ci = 0; ci < d.Cin; ++ci)
            conv1d_dw_cell(dy, x, dw, db, d, co, ci, ci == 0);
}

template <class Real>
void conv1d_grad_weight_omp(const Real* dy, const Real* x, Real* dw, Real* db,
                            const Conv1dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t co = 0; co < d.Cout; ++co)
        for (int64_t ci = 0; ci < d.Cin; ++ci)
            conv1d_dw_cell(dy, x, dw, db, d, co, ci, ci == 0);
}

// One output plane y[b,co,:,:]: every (ci,kh,kw) tap adds a shifted x row onto a
// contiguous y row. Per output element the contribution order is the textbook
// (ci, kh, kw) order, so serial and omp agree bit for bit.
template <class Real>
inline void conv2d_plane(const Real* x, const Real* w, const Real* b, Real* y,
                         const Conv2dDims& d, int64_t bb, int64_t co) {
    const int64_t Ho = d.Ho(), Wo = d.Wo();
    Real* yp = y + ((bb * d.Cout + co) * Ho) * Wo;
    const Real bias = b ? b[co] : Real(0);
    for (int64_t i = 0; i < Ho * Wo; ++i) yp[i] = bias;
    for (int64_t ci = 0; ci < d.Cin; ++ci) {
        const Real* xc = x + ((bb * d.Cin + ci) * d.H) * d.W;
        const Real* wc = w + ((co * d.Cin + ci) * d.kh) * d.kw;
        for (int64_t oh = 0; oh < Ho; ++oh) {
            Real* yr = yp + oh * Wo;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
                const int64_t ih = oh + kh - d.ph;
                if (ih < 0 || ih >= d.H) continue;
                const Real* xr = xc + ih * d.W;
                const Real* wr = wc + kh * d.kw;
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                    const Real wv = wr[kw];
                    const int64_t lo = std::max<int64_t>(0, d.pw - kw);
                    const int64_t hi = std::min(Wo, d.W + d.pw - kw);
                    const Real* xs = xr + kw - d.pw;
                    for (int64_t ow = lo; ow < hi; ++ow) yr[ow] += wv * xs[ow];
                }
            }
        }
    }
}

template <class Real>
void conv2d_forward_serial(const Real* x, const Real* w, const Real* b, Real* y,
                           const Conv2dDims& d) {
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t co = 0; co < d.Cout; ++co) conv2d_plane(x, w, b, y, d, bb, co);
}

template <class Real>
void conv2d_forward_omp(const Real* x, const Real* w, const Real* b, Real* y,
                        const Conv2dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t co = 0; co < d.Cout; ++co) conv2d_plane(x, w, b, y, d, bb, co);
}

template <class Real>
inline void conv2d_dx_plane(const Real* dy, const Real* w, Real* dx, const Conv2dDims& d,
                            int64_t bb, int64_t ci) {
    const int64_t Ho = d.Ho(), Wo = d.Wo();
    Real* dxp = dx + ((bb * d.Cin + ci) * d.H) * d.W;
    for (int64_t co = 0; co < d.Cout; ++co) {
        const Real* dyc = dy + ((bb * d.Cout + co) * Ho) * Wo;
        const Real* wc = w + ((co * d.Cin + ci) * d.kh) * d.kw;
        for (int64_t ih = 0; ih < d.H; ++ih) {
            Real* dxr = dxp + ih * d.W;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
                const int64_t oh = ih - kh + d.ph;
                if (oh < 0 || oh >= Ho) continue;
                const Real* dyr = dyc + oh * Wo;
                const Real* wr = wc + kh * d.kw;
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                    const Real wv = wr[kw];
                    const int64_t lo = std::max<int64_t>(0, kw - d.pw);
                    const int64_t hi = std::min(d.W, Wo + kw - d.pw);
                    const Real* dys = dyr - kw + d.pw;
                    for (int64_t iw = lo; iw < hi; ++iw) dxr[iw] += wv * dys[iw];
                }
            }
        }
    }
}

template <class Real>
void conv2d_grad_input_serial(const Real* dy, const Real* w, Real* dx, const Conv2dDims& d) {
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t ci = 0; ci < d.Cin; ++ci) conv2d_dx_plane(dy, w, dx, d, bb, ci);
}

template <class Real>
void conv2d_grad_input_omp(const Real* dy, const Real* w, Real* dx, const Conv2dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t ci = 0; ci < d.Cin; ++ci) conv2d_dx_plane(dy, w, dx, d, bb, ci);
}

template <class Real>
inline void conv2d_dw_cell(const Real* dy, const Real* x, Real* dw, Real* db, const Conv2dDims& d,
                           int64_t co, int64_t ci, bool do_bias) {
    const int64_t Ho = d.Ho(), Wo = d.Wo();
    for (int64_t kh = 0; kh < d.kh; ++kh)
        for (int64_t kw = 0; kw < d.kw; ++kw) {
            Real acc = Real(0);
            const int64_t wlo = std::max<int64_t>(0, d.pw - kw);
            const int64_t whi = std::min(Wo, d.W + d.pw - kw);
            for (int64_t bb = 0; bb < d.B; ++bb) {
                const Real* dyc = dy + ((bb * d.Cout + co) * Ho) * Wo;
                const Real* xc = x + ((bb * d.Cin + ci) * d.H) * d.W;
                for (int64_t oh = 0; oh < Ho; ++oh) {
                    const int64_t ih = oh + kh - d.ph;
                    if (ih < 0 || ih >= d.H) continue;
                    const Real* dyr = dyc + oh * Wo;
                    const Real* xs = xc + ih * d.W + kw - d.pw;
                    for (int64_t ow = wlo; ow < whi; ++ow) acc += dyr[ow] * xs[ow];
                }
            }
            dw[((co * d.Cin + ci) * d.kh + kh) * d.kw + kw] += acc;
        }
    if (do_bias && db) {
        Real acc = Real(0);
        for (int64_t bb = 0; bb < d.B; ++bb) {
            const Real* dyc = dy + ((bb * d.Cout + co) * Ho) * Wo;
            for (int64_t i = 0; i < Ho * Wo; ++i) acc += dyc[i];
        }
        db[co] += acc;
    }
}

template <class Real>
void conv2d_grad_weight_serial(const Real* dy, const Real* x, Real* dw, Real* db,
                               const Conv2dDims& d) {
    for (int64_t co = 0; co < d.Cout; ++co)
        for (int64_t ci = 0; ci < d.Cin; ++ci)
            conv2d_dw_cell(dy, x, dw, db, d, co, ci, ci == 0);
}

template <class Real>
void conv2d_grad_weight_omp(const Real* dy, const Real* x, Real* dw, Real* db,
                            const Conv2dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t co = 0; co < d.Cout; ++co)
        for (int64_t ci = 0; ci < d.Cin; ++ci)
            conv2d_dw_cell(dy, x, dw, db, d, co, ci, ci == 0);
}

// transpose conv output element: y[b,co,ol] = sum over (ci,k,il) with il*s - p + k == ol
template <class Real>
inline Real tconv1d_cell(const Real* x, const Real* w, const TConv1dDims& d, int64_t b, int64_t co,
                         int64_t ol) {
    Real acc = Real(0);
    for (int64_t ci = 0; ci < d.Cin; ++ci) {
        const Real* xc = x + (b * d.Cin + ci) * d.L;
        const Real* wc = w + (ci * d.Cout + co) * d.k;
        for (int64_t kk = 0; kk < d.k; ++kk) {
            const int64_t num = ol + d.p - kk;
            if (num < 0 || num % d.s != 0) continue;
            const int64_t il = num / d.s;
            if (il < d.L) acc += xc[il] * wc[kk];
        }
    }
    return acc;
}

template <class Real>
void tconv1d_forward_serial(const Real* x, const Real* w, const Real* b, Real* y,
                            const TConv1dDims& d) {
    const int64_t Lo = d.Lo();
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t co = 0; co < d.Cout; ++co)
            for (int64_t ol = 0; ol < Lo; ++ol)
                y[(bb * d.Cout + co) * Lo + ol] =
                    (b ? b[co] : Real(0)) + tconv1d_cell(x, w, d, bb, co, ol);
}

template <class Real>
void tconv1d_forward_omp(const Real* x, const Real* w, const Real* b, Real* y,
                         const TConv1dDims& d) {
    const int64_t Lo = d.Lo();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t co = 0; co < d.Cout; ++co)
            for (int64_t ol = 0; ol < Lo; ++ol)
                y[(bb * d.Cout + co) * Lo + ol] =
                    (b ? b[co] : Real(0)) + tconv1d_cell(x, w, d, bb, co, ol);
}

template <class Real>
inline Real tconv1d_dx_cell(const Real* dy, const Real* w, const TConv1dDims& d, int64_t b,
                            int64_t ci, int64_t il) {
    const int64_t Lo = d.Lo();
    Real acc = Real(0);
    for (int64_t co = 0; co < d.Cout; ++co) {
        const Real* dyc = dy + (b * d.Cout + co) * Lo;
        const Real* wc = w + (ci * d.Cout + co) * d.k;
        for (int64_t kk = 0; kk < d.k; ++kk) {
            const int64_t ol = il * d.s - d.p + kk;
            if (ol >= 0 && ol < Lo) acc += dyc[ol] * wc[kk];
        }
    }
    return acc;
}

template <class Real>
void tconv1d_grad_input_serial(const Real* dy, const Real* w, Real* dx, const TConv1dDims& d) {
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t ci = 0; ci < d.Cin; ++ci)
            for (int64_t il = 0; il < d.L; ++il)
                dx[(bb * d.Cin + ci) * d.L + il] += tconv1d_dx_cell(dy, w, d, bb, ci, il);
}

template <class Real>
void tconv1d_grad_input_omp(const Real* dy, const Real* w, Real* dx, const TConv1dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t bb = 0; bb < d.B; ++bb)
        for (int64_t ci = 0; ci < d.Cin; ++ci)
            for (int64_t il = 0; il < d.L; ++il)
                dx[(bb * d.Cin + ci) * d.L + il] += tconv1d_dx_cell(dy, w, d, bb, ci, il);
}

template <class Real>
inline void tconv1d_dw_cell(const Real* dy, const Real* x, Real* dw, Real* db,
                            const TConv1dDims& d, int64_t ci, int64_t co, bool do_bias) {
    const int64_t Lo = d.Lo();
    for (int64_t kk = 0; kk < d.k; ++kk) {
        Real acc = Real(0);
        for (int64_t bb = 0; bb < d.B; ++bb) {
            const Real* dyc = dy + (bb * d.Cout + co) * Lo;
            const Real* xc = x + (bb * d.Cin + ci) * d.L;
            for (int64_t il = 0; il < d.L; ++il) {
                const int64_t ol = il * d.s - d.p + kk;
                if (ol >= 0 && ol < Lo) acc += dyc[ol] * xc[il];
            }
        }
        dw[(ci * d.Cout + co) * d.k + kk] += acc;
    }
    if (do_bias && db) {
        Real acc = Real(0);
        for (int64_t bb = 0; bb < d.B; ++bb) {
            const Real* dyc = dy + (bb * d.Cout + co) * Lo;
            for (int64_t ol = 0; ol < Lo; ++ol) acc += dyc[ol];
        }
        db[co] += acc;
    }
}

template <class Real>
void tconv1d_grad_weight_serial(const Real* dy, const Real* x, Real* dw, Real* db,
                                const TConv1dDims& d) {
    for (int64_t ci = 0; ci < d.Cin; ++ci)
        for (int64_t co = 0; co < d.Cout; ++co)
            tconv1d_dw_cell(dy, x, dw, db, d, ci, co, ci == 0);
}

template <class Real>
void tconv1d_grad_weight_omp(const Real* dy, const Real* x, Real* dw, Real* db,
                             const TConv1dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t ci = 0; ci < d.Cin; ++ci)
        for (int64_t co = 0; co < d.Cout; ++co)
            tconv1d_dw_cell(dy, x, dw, db, d, ci, co, ci == 0);
}

}  // namespace traj::kern
