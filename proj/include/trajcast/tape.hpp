#pragma once

// Reverse-mode differentiation over a flat tape. Each recorded node keeps its
// operation kind, input node ids and output value, so a finished tape is a
// topologically ordered graph that can be replayed forward bit-exactly.
// The op set is exactly what the predictors need; this is not a general engine.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "trajcast/kernels.hpp"
#include "trajcast/ndarray.hpp"
#include "trajcast/util.hpp"

namespace traj {

using NodeId = int32_t;

enum class Op : uint8_t {
    Leaf,
    Fc,
    Conv1d,
    Conv2d,
    TConv1d,
    BatchNorm,
    Relu,
    Sigmoid,
    Tanh,
    Add,
    Sub,
    Mul,
    AddRows,
    TransposeLast2,
    Reshape,
    Upsample2xTime,
    CumsumTime,
    SliceLast,
    StackAxis1,
    SumLast,
    SqrtEps,
    MeanAll,
};

template <class Real>
class Tape {
public:
    struct Node {
        Op op = Op::Leaf;
        std::vector<NodeId> inputs;
        NdArray<Real> value;
        std::vector<Real> grad;
        bool requires_grad = false;

        // op attributes (only the fields the op uses are meaningful)
        kern::Conv1dDims c1{};
        kern::Conv2dDims c2{};
        kern::TConv1dDims tc{};
        int64_t a0 = 0, a1 = 0;   // slice lo/len, etc.
        Real r0 = Real(0);        // eps / momentum
        Real r1 = Real(0);
        bool flag = false;        // batchnorm train mode
        Real* ptr0 = nullptr;     // batchnorm running mean
        Real* ptr1 = nullptr;     // batchnorm running var
        std::vector<Real> saved;  // batchnorm per-channel mean + invstd
    };

    std::vector<Node>& nodes() { return nodes_; }
    const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
    const NdArray<Real>& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    const std::vector<Real>& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }
    size_t size() const { return nodes_.size(); }

    NodeId leaf(NdArray<Real> v) {
        Node n;
        n.op = Op::Leaf;
        n.requires_grad = v.requires_grad;
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    NodeId fc(NodeId x, NodeId w, NodeId b) {
        const auto& xv = value(x);
        const auto& wv = value(w);
        if (xv.ndim() < 2 || wv.ndim() != 2 || xv.dim(-1) != wv.dim(1))
            throw DimensionError("fc: input " + shape_str(xv.shape) + " incompatible with weight " +
                                 shape_str(wv.shape));
        if (b >= 0) {
            const auto& bv = value(b);
            if (bv.ndim() != 1 || bv.dim(0) != wv.dim(0))
                throw DimensionError("fc: bias " + shape_str(bv.shape) +
                                     " incompatible with weight " + shape_str(wv.shape));
        }
        Node n = make_node(Op::Fc, b >= 0 ? std::vector<NodeId>{x, w, b} : std::vector<NodeId>{x, w});
        auto shape = xv.shape;
        shape.back() = wv.dim(0);
        n.value = NdArray<Real>::zeros(shape);
        return push_eval(std::move(n));
    }

    NodeId conv1d(NodeId x, NodeId w, NodeId b, int64_t pad) {
        const auto& xv = value(x);
        const auto& wv = value(w);
        if (xv.ndim() != 3 || wv.ndim() != 3 || xv.dim(1) != wv.dim(1))
            throw DimensionError("conv1d: input " + shape_str(xv.shape) + " vs kernels " +
                                 shape_str(wv.shape));
        kern::Conv1dDims d{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(0), wv.dim(2), pad};
        if (d.k > d.L + 2 * d.p || d.Lo() < 1)
            throw DimensionError("conv1d: kernel length " + std::to_string(d.k) +
                                 " exceeds padded input " + std::to_string(d.L + 2 * d.p));
        Node n = make_node(Op::Conv1d,
                           b >= 0 ? std::vector<NodeId>{x, w, b} : std::vector<NodeId>{x, w});
        n.c1 = d;
        n.value = NdArray<Real>::zeros({d.B, d.Cout, d.Lo()});
        return push_eval(std::move(n));
    }

    NodeId conv2d(NodeId x, NodeId w, NodeId b, int64_t ph, int64_t pw) {
        const auto& xv = value(x);
        const auto& wv = value(w);
        if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(1))
            throw DimensionError("conv2d: input " + shape_str(xv.shape) + " vs kernels " +
                                 shape_str(wv.shape));
        kern::Conv2dDims d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3),
                           wv.dim(0), wv.dim(2), wv.dim(3), ph, pw};
        if (d.kh > d.H + 2 * d.ph || d.kw > d.W + 2 * d.pw)
            throw DimensionError("conv2d: kernel " + shape_str(wv.shape) +
                                 " exceeds padded input " + shape_str(xv.shape));
        Node n = make_node(Op::Conv2d,
                           b >= 0 ? std::vector<NodeId>{x, w, b} : std::vector<NodeId>{x, w});
        n.c2 = d;
        n.value = NdArray<Real>::zeros({d.B, d.Cout, d.Ho(), d.Wo()});
        return push_eval(std::move(n));
    }

    NodeId tconv1d(NodeId x, NodeId w, NodeId b, int64_t stride, int64_t pad) {
        const auto& xv = value(x);
        const auto& wv = value(w);
        if (xv.ndim() != 3 || wv.ndim() != 3 || xv.dim(1) != wv.dim(0))
            throw DimensionError("tconv1d: input " + shape_str(xv.shape) + " vs kernels " +
                                 shape_str(wv.shape));
        kern::TConv1dDims d{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(1), wv.dim(2), stride, pad};
        if (d.Lo() < 1)
            throw DimensionError("tconv1d: output length " + std::to_string(d.Lo()) +
                                 " is not positive for input " + shape_str(xv.shape));
        Node n = make_node(Op::TConv1d,
                           b >= 0 ? std::vector<NodeId>{x, w, b} : std::vector<NodeId>{x, w});
        n.tc = d;
        n.value = NdArray<Real>::zeros({d.B, d.Cout, d.Lo()});
        return push_eval(std::move(n));
    }

    // x is (B, C, ...), normalized per channel over batch and trailing dims.
    // Running stats are written through in train mode and read in eval mode.
    NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, Real* run_mean, Real* run_var, bool train,
                     Real eps, Real momentum) {
        const auto& xv = value(x);
        if (xv.ndim() < 2)
            throw DimensionError("batchnorm: input " + shape_str(xv.shape) + " needs rank >= 2");
        const int64_t C = xv.dim(1);
        if (value(gamma).numel() != C || value(beta).numel() != C)
            throw DimensionError("batchnorm: affine params do not match " +
                                 std::to_string(C) + " channels");
        if (train && xv.dim(0) < 2)
            throw InvalidBatchError("batchnorm: train mode requires batch size >= 2, got " +
                                    std::to_string(xv.dim(0)));
        Node n = make_node(Op::BatchNorm, {x, gamma, beta});
        n.flag = train;
        n.r0 = eps;
        n.r1 = momentum;
        n.ptr0 = run_mean;
        n.ptr1 = run_var;
        n.value = NdArray<Real>::zeros(xv.shape);
        return push_eval(std::move(n));
    }

    NodeId relu(NodeId x) { return unary(Op::Relu, x); }
    NodeId sigmoid(NodeId x) { return unary(Op::Sigmoid, x); }
    NodeId tanh(NodeId x) { return unary(Op::Tanh, x); }

    NodeId add(NodeId a, NodeId b) { return binary(Op::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(Op::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(Op::Mul, a, b); }

    // x (B, T, F) + p (T, F), broadcast over the batch
    NodeId add_rows(NodeId x, NodeId p) {
        const auto& xv = value(x);
        const auto& pv = value(p);
        if (xv.ndim() != 3 || pv.ndim() != 2 || xv.dim(1) != pv.dim(0) || xv.dim(2) != pv.dim(1))
            throw DimensionError("add_rows: " + shape_str(xv.shape) + " vs " + shape_str(pv.shape));
        Node n = make_node(Op::AddRows, {x, p});
        n.value = NdArray<Real>::zeros(xv.shape);
        return push_eval(std::move(n));
    }

    NodeId transpose_last2(NodeId x) {
        const auto& xv = value(x);
        if (xv.ndim() < 2)
            throw DimensionError("transpose_last2: input " + shape_str(xv.shape) +
                                 " needs rank >= 2");
        Node n = make_node(Op::TransposeLast2, {x});
        auto shape = xv.shape;
        std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
        n.value = NdArray<Real>::zeros(shape);
        return push_eval(std::move(n));
    }

    NodeId reshape(NodeId x, std::vector<int64_t> shape) {
        const auto& xv = value(x);
        if (numel_of(shape) != xv.numel())
            throw DimensionError("reshape: " + shape_str(xv.shape) + " to " + shape_str(shape));
        Node n = make_node(Op::Reshape, {x});
        n.value = NdArray<Real>::zeros(std::move(shape));
        return push_eval(std::move(n));
    }

    // nearest-neighbor repetition along the last (time) axis
    NodeId upsample2x_time(NodeId x) {
        const auto& xv = value(x);
        if (xv.ndim() < 1 || xv.dim(-1) < 1)
            throw DimensionError("upsample2x_time: input " + shape_str(xv.shape));
        Node n = make_node(Op::Upsample2xTime, {x});
        auto shape = xv.shape;
        shape.back() *= 2;
        n.value = NdArray<Real>::zeros(shape);
        return push_eval(std::move(n));
    }

    // running sum along axis 1 of (B, T, F)
    NodeId cumsum_time(NodeId x) {
        const auto& xv = value(x);
        if (xv.ndim() != 3)
            throw DimensionError("cumsum_time: input " + shape_str(xv.shape) + " needs rank 3");
        Node n = make_node(Op::CumsumTime, {x});
        n.value = NdArray<Real>::zeros(xv.shape);
        return push_eval(std::move(n));
    }

    NodeId slice_last(NodeId x, int64_t lo, int64_t len) {
        const auto& xv = value(x);
        if (lo < 0 || len < 1 || lo + len > xv.dim(-1))
            throw DimensionError("slice_last: [" + std::to_string(lo) + "," +
                                 std::to_string(lo + len) + ") out of " + shape_str(xv.shape));
        Node n = make_node(Op::SliceLast, {x});
        n.a0 = lo;
        n.a1 = len;
        auto shape = xv.shape;
        shape.back() = len;
        n.value = NdArray<Real>::zeros(shape);
        return push_eval(std::move(n));
    }

    // stack N inputs of shape (B, F) into (B, N, F)
    NodeId stack_axis1(const std::vector<NodeId>& xs) {
        if (xs.empty()) throw ContractError("stack_axis1: no inputs");
        const auto& first = value(xs[0]);
        if (first.ndim() != 2)
            throw DimensionError("stack_axis1: inputs must be rank 2, got " +
                                 shape_str(first.shape));
        for (NodeId id : xs)
            if (value(id).shape != first.shape)
                throw DimensionError("stack_axis1: mismatched input " + shape_str(value(id).shape) +
                                     " vs " + shape_str(first.shape));
        Node n = make_node(Op::StackAxis1, xs);
        n.value = NdArray<Real>::zeros({first.dim(0), static_cast<int64_t>(xs.size()), first.dim(1)});
        return push_eval(std::move(n));
    }

    NodeId sum_last(NodeId x) {
        const auto& xv = value(x);
        if (xv.ndim() < 1) throw DimensionError("sum_last: scalar input");
        Node n = make_node(Op::SumLast, {x});
        auto shape = xv.shape;
        shape.pop_back();
        if (shape.empty()) shape = {1};
        n.value = NdArray<Real>::zeros(shape);
        return push_eval(std::move(n));
    }

    // sqrt(x + eps) elementwise; the small eps keeps the distance loss
    // differentiable at exactly coincident points
    NodeId sqrt_eps(NodeId x, Real eps) {
        Node n = make_node(Op::SqrtEps, {x});
        n.r0 = eps;
        n.value = NdArray<Real>::zeros(value(x).shape);
        return push_eval(std::move(n));
    }

    NodeId mean_all(NodeId x) {
        Node n = make_node(Op::MeanAll, {x});
        n.value = NdArray<Real>::zeros({1});
        return push_eval(std::move(n));
    }

    // Reverse accumulation from a scalar loss. Tracked leaves that do not
    // contribute to the loss end with a zero gradient buffer.
    void backward(NodeId loss) {
        auto& ln = nodes_[static_cast<size_t>(loss)];
        if (ln.value.numel() != 1)
            throw ContractError("backward: loss must be scalar, got " + shape_str(ln.value.shape));
        for (auto& n : nodes_)
            if (n.requires_grad) n.grad.assign(n.value.data.size(), Real(0));
        if (!ln.requires_grad) return;  // loss does not depend on any tracked leaf
        ln.grad[0] = Real(1);
        for (NodeId id = loss; id >= 0; --id) {
            Node& n = nodes_[static_cast<size_t>(id)];
            if (!n.requires_grad || n.op == Op::Leaf || n.grad.empty()) continue;
            backprop_node(id);
        }
    }

    // Recompute every non-leaf value from the leaves with side effects off.
    void replay() {
        for (size_t id = 0; id < nodes_.size(); ++id)
            if (nodes_[id].op != Op::Leaf) eval_node(static_cast<NodeId>(id), false);
    }

private:
    std::vector<Node> nodes_;

    Node make_node(Op op, std::vector<NodeId> inputs) {
        Node n;
        n.op = op;
        n.inputs = std::move(inputs);
        for (NodeId id : n.inputs)
            if (nodes_[static_cast<size_t>(id)].requires_grad) n.requires_grad = true;
        return n;
    }

    NodeId push_eval(Node n) {
        nodes_.push_back(std::move(n));
        const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
        eval_node(id, true);
        return id;
    }

    NodeId unary(Op op, NodeId x) {
        Node n = make_node(op, {x});
        n.value = NdArray<Real>::zeros(value(x).shape);
        return push_eval(std::move(n));
    }

    NodeId binary(Op op, NodeId a, NodeId b) {
        const auto& av = value(a);
        const auto& bv = value(b);
        if (av.shape != bv.shape)
            throw DimensionError("elementwise: " + shape_str(av.shape) + " vs " +
                                 shape_str(bv.shape));
        Node n = make_node(op, {a, b});
        n.value = NdArray<Real>::zeros(av.shape);
        return push_eval(std::move(n));
    }

    void eval_node(NodeId id, bool side_effects) {
        Node& n = nodes_[static_cast<size_t>(id)];
        const auto in = [&](size_t i) -> const NdArray<Real>& {
            return nodes_[static_cast<size_t>(n.inputs[i])].value;
        };
        Real* out = n.value.data.data();
        const int64_t n_out = n.value.numel();
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Fc: {
                const auto& x = in(0);
                const auto& w = in(1);
                const Real* b = n.inputs.size() > 2 ? in(2).data.data() : nullptr;
                const int64_t Din = w.dim(1), Dout = w.dim(0);
                kern::fc_forward(x.data.data(), w.data.data(), b, out, x.numel() / Din, Din, Dout);
                break;
            }
            case Op::Conv1d: {
                const Real* b = n.inputs.size() > 2 ? in(2).data.data() : nullptr;
                kern::conv1d_forward(in(0).data.data(), in(1).data.data(), b, out, n.c1);
                break;
            }
            case Op::Conv2d: {
                const Real* b = n.inputs.size() > 2 ? in(2).data.data() : nullptr;
                kern::conv2d_forward(in(0).data.data(), in(1).data.data(), b, out, n.c2);
                break;
            }
            case Op::TConv1d: {
                const Real* b = n.inputs.size() > 2 ? in(2).data.data() : nullptr;
                kern::tconv1d_forward(in(0).data.data(), in(1).data.data(), b, out, n.tc);
                break;
            }
            case Op::BatchNorm:
                eval_batchnorm(n, side_effects);
                break;
            case Op::Relu: {
                const auto& x = in(0).data;
                for (int64_t i = 0; i < n_out; ++i) out[i] = x[i] > Real(0) ? x[i] : Real(0);
                break;
            }
            case Op::Sigmoid: {
                const auto& x = in(0).data;
                for (int64_t i = 0; i < n_out; ++i) out[i] = Real(1) / (Real(1) + std::exp(-x[i]));
                break;
            }
            case Op::Tanh: {
                const auto& x = in(0).data;
                for (int64_t i = 0; i < n_out; ++i) out[i] = std::tanh(x[i]);
                break;
            }
            case Op::Add: {
                const auto& a = in(0).data;
                const auto& b = in(1).data;
                for (int64_t i = 0; i < n_out; ++i) out[i] = a[i] + b[i];
                break;
            }
            case Op::Sub: {
                const auto& a = in(0).data;
                const auto& b = in(1).data;
                for (int64_t i = 0; i < n_out; ++i) out[i] = a[i] - b[i];
                break;
            }
            case Op::Mul: {
                const auto& a = in(0).data;
                const auto& b = in(1).data;
                for (int64_t i = 0; i < n_out; ++i) out[i] = a[i] * b[i];
                break;
            }
            case Op::AddRows: {
                const auto& x = in(0);
                const auto& p = in(1).data;
                const int64_t rows = p.size();
                for (int64_t i = 0; i < n_out; ++i) out[i] = x.data[i] + p[i % rows];
                break;
            }
            case Op::TransposeLast2: {
                const auto& x = in(0);
                const int64_t A = x.dim(-2), B2 = x.dim(-1), outer = x.numel() / (A * B2);
                for (int64_t o = 0; o < outer; ++o) {
                    const Real* xs = x.data.data() + o * A * B2;
                    Real* ys = out + o * A * B2;
                    for (int64_t i = 0; i < A; ++i)
                        for (int64_t j = 0; j < B2; ++j) ys[j * A + i] = xs[i * B2 + j];
                }
                break;
            }
            case Op::Reshape:
                std::copy(in(0).data.begin(), in(0).data.end(), out);
                break;
            case Op::Upsample2xTime: {
                const auto& x = in(0);
                const int64_t L = x.dim(-1), outer = x.numel() / L;
                for (int64_t o = 0; o < outer; ++o)
                    for (int64_t l = 0; l < L; ++l) {
                        const Real v = x.data[o * L + l];
                        out[o * 2 * L + 2 * l] = v;
                        out[o * 2 * L + 2 * l + 1] = v;
                    }
                break;
            }
            case Op::CumsumTime: {
                const auto& x = in(0);
                const int64_t B = x.dim(0), T = x.dim(1), F = x.dim(2);
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t f = 0; f < F; ++f) {
                        Real acc = Real(0);
                        for (int64_t t = 0; t < T; ++t) {
                            acc += x.data[(b * T + t) * F + f];
                            out[(b * T + t) * F + f] = acc;
                        }
                    }
                break;
            }
            case Op::SliceLast: {
                const auto& x = in(0);
                const int64_t M = x.dim(-1), outer = x.numel() / M;
                for (int64_t o = 0; o < outer; ++o)
                    std::copy_n(x.data.data() + o * M + n.a0, n.a1, out + o * n.a1);
                break;
            }
            case Op::StackAxis1: {
                const auto& first = in(0);
                const int64_t B = first.dim(0), F = first.dim(1),
                              N = static_cast<int64_t>(n.inputs.size());
                for (int64_t t = 0; t < N; ++t) {
                    const auto& x = in(static_cast<size_t>(t));
                    for (int64_t b = 0; b < B; ++b)
                        std::copy_n(x.data.data() + b * F, F, out + (b * N + t) * F);
                }
                break;
            }
            case Op::SumLast: {
                const auto& x = in(0);
                const int64_t M = x.dim(-1);
                for (int64_t o = 0; o < n_out; ++o) {
                    Real acc = Real(0);
                    for (int64_t j = 0; j < M; ++j) acc += x.data[o * M + j];
                    out[o] = acc;
                }
                break;
            }
            case Op::SqrtEps: {
                const auto& x = in(0).data;
                for (int64_t i = 0; i < n_out; ++i) out[i] = std::sqrt(x[i] + n.r0);
                break;
            }
            case Op::MeanAll: {
                const auto& x = in(0).data;
                Real acc = Real(0);
                for (Real v : x) acc += v;
                out[0] = acc / static_cast<Real>(x.size());
                break;
            }
        }
    }

    void eval_batchnorm(Node& n, bool side_effects) {
        const auto& x = nodes_[static_cast<size_t>(n.inputs[0])].value;
        const auto& gamma = nodes_[static_cast<size_t>(n.inputs[1])].value.data;
        const auto& beta = nodes_[static_cast<size_t>(n.inputs[2])].value.data;
        const int64_t B = x.dim(0), C = x.dim(1), S = x.numel() / (B * C);
        const int64_t N = B * S;
        n.saved.assign(static_cast<size_t>(2 * C), Real(0));
        Real* mean = n.saved.data();
        Real* invstd = n.saved.data() + C;
        if (n.flag) {
            for (int64_t c = 0; c < C; ++c) {
                Real sum = Real(0);
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t s = 0; s < S; ++s) sum += x.data[(b * C + c) * S + s];
                const Real mu = sum / static_cast<Real>(N);
                Real sq = Real(0);
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t s = 0; s < S; ++s) {
                        const Real d = x.data[(b * C + c) * S + s] - mu;
                        sq += d * d;
                    }
                const Real var = sq / static_cast<Real>(N);
                mean[c] = mu;
                invstd[c] = Real(1) / std::sqrt(var + n.r0);
                if (side_effects && n.ptr0 && n.ptr1) {
                    const Real unbiased = N > 1 ? sq / static_cast<Real>(N - 1) : var;
                    n.ptr0[c] = (Real(1) - n.r1) * n.ptr0[c] + n.r1 * mu;
                    n.ptr1[c] = (Real(1) - n.r1) * n.ptr1[c] + n.r1 * unbiased;
                }
            }
        } else {
            for (int64_t c = 0; c < C; ++c) {
                mean[c] = n.ptr0 ? n.ptr0[c] : Real(0);
                const Real var = n.ptr1 ? n.ptr1[c] : Real(1);
                invstd[c] = Real(1) / std::sqrt(var + n.r0);
            }
        }
        Real* out = n.value.data.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t s = 0; s < S; ++s) {
                    const int64_t i = (b * C + c) * S + s;
                    out[i] = gamma[c] * (x.data[i] - mean[c]) * invstd[c] + beta[c];
                }
    }

    void backprop_node(NodeId id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        const std::vector<Real>& dy = n.grad;
        const auto inv = [&](size_t i) -> const NdArray<Real>& {
            return nodes_[static_cast<size_t>(n.inputs[i])].value;
        };
        const auto ing = [&](size_t i) -> Real* {
            Node& m = nodes_[static_cast<size_t>(n.inputs[i])];
            return m.requires_grad ? m.grad.data() : nullptr;
        };
        const int64_t n_out = n.value.numel();
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Fc: {
                const auto& x = inv(0);
                const auto& w = inv(1);
                const int64_t Din = w.dim(1), Dout = w.dim(0), N = x.numel() / Din;
                if (Real* dx = ing(0)) kern::fc_grad_input(dy.data(), w.data.data(), dx, N, Din, Dout);
                if (Real* dw = ing(1)) {
                    Real* db = n.inputs.size() > 2 ? ing(2) : nullptr;
                    kern::fc_grad_weight(dy.data(), x.data.data(), dw, db, N, Din, Dout);
                } else if (n.inputs.size() > 2 && ing(2)) {
                    // bias tracked without the weight: accumulate column sums
                    Real* db = ing(2);
                    for (int64_t nn = 0; nn < N; ++nn)
                        for (int64_t j = 0; j < Dout; ++j) db[j] += dy[nn * Dout + j];
                }
                break;
            }
            case Op::Conv1d: {
                if (Real* dx = ing(0)) kern::conv1d_grad_input(dy.data(), inv(1).data.data(), dx, n.c1);
                if (Real* dw = ing(1)) {
                    Real* db = n.inputs.size() > 2 ? ing(2) : nullptr;
                    kern::conv1d_grad_weight(dy.data(), inv(0).data.data(), dw, db, n.c1);
                }
                break;
            }
            case Op::Conv2d: {
                if (Real* dx = ing(0)) kern::conv2d_grad_input(dy.data(), inv(1).data.data(), dx, n.c2);
                if (Real* dw = ing(1)) {
                    Real* db = n.inputs.size() > 2 ? ing(2) : nullptr;
                    kern::conv2d_grad_weight(dy.data(), inv(0).data.data(), dw, db, n.c2);
                }
                break;
            }
            case Op::TConv1d: {
                if (Real* dx = ing(0)) kern::tconv1d_grad_input(dy.data(), inv(1).data.data(), dx, n.tc);
                if (Real* dw = ing(1)) {
                    Real* db = n.inputs.size() > 2 ? ing(2) : nullptr;
                    kern::tconv1d_grad_weight(dy.data(), inv(0).data.data(), dw, db, n.tc);
                }
                break;
            }
            case Op::BatchNorm:
                backprop_batchnorm(n);
                break;
            case Op::Relu: {
                const auto& x = inv(0).data;
                if (Real* dx = ing(0))
                    for (int64_t i = 0; i < n_out; ++i)
                        if (x[i] > Real(0)) dx[i] += dy[i];
                break;
            }
            case Op::Sigmoid: {
                const auto& y = n.value.data;
                if (Real* dx = ing(0))
                    for (int64_t i = 0; i < n_out; ++i) dx[i] += dy[i] * y[i] * (Real(1) - y[i]);
                break;
            }
            case Op::Tanh: {
                const auto& y = n.value.data;
                if (Real* dx = ing(0))
                    for (int64_t i = 0; i < n_out; ++i) dx[i] += dy[i] * (Real(1) - y[i] * y[i]);
                break;
            }
            case Op::Add: {
                if (Real* da = ing(0))
                    for (int64_t i = 0; i < n_out; ++i) da[i] += dy[i];
                if (Real* db = ing(1))
                    for (int64_t i = 0; i < n_out; ++i) db[i] += dy[i];
                break;
            }
            case Op::Sub: {
                if (Real* da = ing(0))
                    for (int64_t i = 0; i < n_out; ++i) da[i] += dy[i];
                if (Real* db = ing(1))
                    for (int64_t i = 0; i < n_out; ++i) db[i] -= dy[i];
                break;
            }
            case Op::Mul: {
                const auto& a = inv(0).data;
                const auto& b = inv(1).data;
                if (Real* da = ing(0))
                    for (int64_t i = 0; i < n_out; ++i) da[i] += dy[i] * b[i];
                if (Real* db = ing(1))
                    for (int64_t i = 0; i < n_out; ++i) db[i] += dy[i] * a[i];
                break;
            }
            case Op::AddRows: {
                const int64_t rows = inv(1).numel();
                if (Real* dx = ing(0))
                    for (int64_t i = 0; i < n_out; ++i) dx[i] += dy[i];
                if (Real* dp = ing(1))
                    for (int64_t r = 0; r < rows; ++r) {
                        Real acc = Real(0);
                        for (int64_t i = r; i < n_out; i += rows) acc += dy[i];
                        dp[r] += acc;
                    }
                break;
            }
            case Op::TransposeLast2: {
                const auto& x = inv(0);
                const int64_t A = x.dim(-2), B2 = x.dim(-1), outer = x.numel() / (A * B2);
                if (Real* dx = ing(0))
                    for (int64_t o = 0; o < outer; ++o)
                        for (int64_t i = 0; i < A; ++i)
                            for (int64_t j = 0; j < B2; ++j)
                                dx[o * A * B2 + i * B2 + j] += dy[o * A * B2 + j * A + i];
                break;
            }
            case Op::Reshape: {
                if (Real* dx = ing(0))
                    for (int64_t i = 0; i < n_out; ++i) dx[i] += dy[i];
                break;
            }
            case Op::Upsample2xTime: {
                const auto& x = inv(0);
                const int64_t L = x.dim(-1), outer = x.numel() / L;
                if (Real* dx = ing(0))
                    for (int64_t o = 0; o < outer; ++o)
                        for (int64_t l = 0; l < L; ++l)
                            dx[o * L + l] += dy[o * 2 * L + 2 * l] + dy[o * 2 * L + 2 * l + 1];
                break;
            }
            case Op::CumsumTime: {
                const auto& x = inv(0);
                const int64_t B = x.dim(0), T = x.dim(1), F = x.dim(2);
                if (Real* dx = ing(0))
                    for (int64_t b = 0; b < B; ++b)
                        for (int64_t f = 0; f < F; ++f) {
                            Real acc = Real(0);
                            for (int64_t t = T - 1; t >= 0; --t) {
                                acc += dy[(b * T + t) * F + f];
                                dx[(b * T + t) * F + f] += acc;
                            }
                        }
                break;
            }
            case Op::SliceLast: {
                const auto& x = inv(0);
                const int64_t M = x.dim(-1), outer = x.numel() / M;
                if (Real* dx = ing(0))
                    for (int64_t o = 0; o < outer; ++o)
                        for (int64_t j = 0; j < n.a1; ++j)
                            dx[o * M + n.a0 + j] += dy[o * n.a1 + j];
                break;
            }
            case Op::StackAxis1: {
                const int64_t N = static_cast<int64_t>(n.inputs.size());
                const int64_t B = n.value.dim(0), F = n.value.dim(2);
                for (int64_t t = 0; t < N; ++t)
                    if (Real* dx = ing(static_cast<size_t>(t)))
                        for (int64_t b = 0; b < B; ++b)
                            for (int64_t f = 0; f < F; ++f) dx[b * F + f] += dy[(b * N + t) * F + f];
                break;
            }
            case Op::SumLast: {
                const auto& x = inv(0);
                const int64_t M = x.dim(-1);
                if (Real* dx = ing(0))
                    for (int64_t o = 0; o < n_out; ++o)
                        for (int64_t j = 0; j < M; ++j) dx[o * M + j] += dy[o];
                break;
            }
            case Op::SqrtEps: {
                const auto& y = n.value.data;
                if (Real* dx = ing(0))
                    for (int64_t i = 0; i < n_out; ++i) dx[i] += dy[i] * Real(0.5) / y[i];
                break;
            }
            case Op::MeanAll: {
                const auto& x = inv(0);
                const Real g = dy[0] / static_cast<Real>(x.numel());
                if (Real* dx = ing(0))
                    for (int64_t i = 0; i < x.numel(); ++i) dx[i] += g;
                break;
            }
        }
    }

    void backprop_batchnorm(Node& n) {
        const auto& x = nodes_[static_cast<size_t>(n.inputs[0])].value;
        const auto& gamma = nodes_[static_cast<size_t>(n.inputs[1])].value.data;
        const int64_t B = x.dim(0), C = x.dim(1), S = x.numel() / (B * C);
        const int64_t N = B * S;
        const Real* mean = n.saved.data();
        const Real* invstd = n.saved.data() + C;
        const std::vector<Real>& dy = n.grad;
        Node& xn = nodes_[static_cast<size_t>(n.inputs[0])];
        Node& gn = nodes_[static_cast<size_t>(n.inputs[1])];
        Node& bn = nodes_[static_cast<size_t>(n.inputs[2])];
        for (int64_t c = 0; c < C; ++c) {
            Real sum_dy = Real(0), sum_dy_xhat = Real(0);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t s = 0; s < S; ++s) {
                    const int64_t i = (b * C + c) * S + s;
                    const Real xhat = (x.data[i] - mean[c]) * invstd[c];
                    sum_dy += dy[i];
                    sum_dy_xhat += dy[i] * xhat;
                }
            if (gn.requires_grad) gn.grad[c] += sum_dy_xhat;
            if (bn.requires_grad) bn.grad[c] += sum_dy;
            if (!xn.requires_grad) continue;
            if (n.flag) {
                const Real inv_n = Real(1) / static_cast<Real>(N);
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t s = 0; s < S; ++s) {
                        const int64_t i = (b * C + c) * S + s;
                        const Real xhat = (x.data[i] - mean[c]) * invstd[c];
                        xn.grad[i] += gamma[c] * invstd[c] *
                                      (dy[i] - sum_dy * inv_n - xhat * sum_dy_xhat * inv_n);
                    }
            } else {
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t s = 0; s < S; ++s) {
                        const int64_t i = (b * C + c) * S + s;
                        xn.grad[i] += dy[i] * gamma[c] * invstd[c];
                    }
            }
        }
    }
};

// One step of the standard LSTM gating, built out of tape primitives so the
// whole sequence backpropagates through time automatically.
// wx: (4H, Din), wh: (4H, H), b: (4H), gate order i|f|g|o.
template <class Real>
struct LstmStepOut {
    NodeId h, c;
};

template <class Real>
LstmStepOut<Real> lstm_step(Tape<Real>& t, NodeId x, NodeId h, NodeId c, NodeId wx, NodeId wh,
                            NodeId b) {
    const int64_t H = t.value(wh).dim(1);
    if (t.value(h).dim(-1) != H || t.value(c).dim(-1) != H)
        throw DimensionError("lstm_step: state " + shape_str(t.value(h).shape) +
                             " does not match hidden size " + std::to_string(H));
    const NodeId z = t.add(t.fc(x, wx, b), t.fc(h, wh, -1));
    const NodeId i = t.sigmoid(t.slice_last(z, 0, H));
    const NodeId f = t.sigmoid(t.slice_last(z, H, H));
    const NodeId g = t.tanh(t.slice_last(z, 2 * H, H));
    const NodeId o = t.sigmoid(t.slice_last(z, 3 * H, H));
    const NodeId c_next = t.add(t.mul(f, c), t.mul(i, g));
    const NodeId h_next = t.mul(o, t.tanh(c_next));
    return {h_next, c_next};
}

}  // namespace traj
