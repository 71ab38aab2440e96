// Times the serial reference kernels against their OpenMP versions on
// model-realistic shapes and verifies that both produce identical bits.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "trajcast/kernels.hpp"
#include "trajcast/util.hpp"

using namespace traj;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<float> rand_vec(size_t n, RngStream& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

template <class F>
double time_best_of(F&& fn, int reps) {
    double best = 1e30;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = Clock::now();
        fn();
        const auto t1 = Clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

void report(const std::string& name, double serial_s, double omp_s, bool identical) {
    std::printf("%-22s %10.3f ms %10.3f ms   x%-6.2f %s\n", name.c_str(), serial_s * 1e3,
                omp_s * 1e3, serial_s / omp_s, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
    const int reps = 5;
    RngStream rng(123);
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (compiled without OpenMP)\n");
#endif
    std::printf("%-22s %13s %13s   %-8s\n", "kernel", "serial", "openmp", "speedup");

    {
        // the heaviest 2D stage: 48 -> 48 channels on the 64x16 feature map
        const kern::Conv2dDims d{64, 48, 64, 16, 48, 5, 5, 2, 1};
        const auto x = rand_vec(static_cast<size_t>(d.B * d.Cin * d.H * d.W), rng);
        const auto w = rand_vec(static_cast<size_t>(d.Cout * d.Cin * d.kh * d.kw), rng);
        const auto b = rand_vec(static_cast<size_t>(d.Cout), rng);
        std::vector<float> y1(static_cast<size_t>(d.B * d.Cout * d.Ho() * d.Wo())), y2 = y1;
        const double ts = time_best_of(
            [&] { kern::conv2d_forward_serial(x.data(), w.data(), b.data(), y1.data(), d); }, reps);
        const double tp = time_best_of(
            [&] { kern::conv2d_forward_omp(x.data(), w.data(), b.data(), y2.data(), d); }, reps);
        report("conv2d forward", ts, tp, y1 == y2);

        const auto dy = rand_vec(y1.size(), rng);
        std::vector<float> dx1(x.size(), 0.0f), dx2(x.size(), 0.0f);
        const double gs = time_best_of(
            [&] { kern::conv2d_grad_input_serial(dy.data(), w.data(), dx1.data(), d); }, reps);
        const double gp = time_best_of(
            [&] { kern::conv2d_grad_input_omp(dy.data(), w.data(), dx2.data(), d); }, reps);
        report("conv2d grad input", gs, gp, dx1 == dx2);

        std::vector<float> dw1(w.size(), 0.0f), dw2(w.size(), 0.0f);
        std::vector<float> db1(b.size(), 0.0f), db2(b.size(), 0.0f);
        const double ws = time_best_of(
            [&] { kern::conv2d_grad_weight_serial(dy.data(), x.data(), dw1.data(), db1.data(), d); },
            reps);
        const double wp = time_best_of(
            [&] { kern::conv2d_grad_weight_omp(dy.data(), x.data(), dw2.data(), db2.data(), d); },
            reps);
        report("conv2d grad weight", ws, wp, dw1 == dw2 && db1 == db2);
    }

    {
        const kern::Conv1dDims d{64, 64, 16, 64, 7, 3};
        const auto x = rand_vec(static_cast<size_t>(d.B * d.Cin * d.L), rng);
        const auto w = rand_vec(static_cast<size_t>(d.Cout * d.Cin * d.k), rng);
        const auto b = rand_vec(static_cast<size_t>(d.Cout), rng);
        std::vector<float> y1(static_cast<size_t>(d.B * d.Cout * d.Lo())), y2 = y1;
        const double ts = time_best_of(
            [&] { kern::conv1d_forward_serial(x.data(), w.data(), b.data(), y1.data(), d); }, reps);
        const double tp = time_best_of(
            [&] { kern::conv1d_forward_omp(x.data(), w.data(), b.data(), y2.data(), d); }, reps);
        report("conv1d forward", ts, tp, y1 == y2);
    }

    {
        const kern::TConv1dDims d{64, 64, 8, 64, 5, 1, 0};
        const auto x = rand_vec(static_cast<size_t>(d.B * d.Cin * d.L), rng);
        const auto w = rand_vec(static_cast<size_t>(d.Cin * d.Cout * d.k), rng);
        const auto b = rand_vec(static_cast<size_t>(d.Cout), rng);
        std::vector<float> y1(static_cast<size_t>(d.B * d.Cout * d.Lo())), y2 = y1;
        const double ts = time_best_of(
            [&] { kern::tconv1d_forward_serial(x.data(), w.data(), b.data(), y1.data(), d); },
            reps);
        const double tp = time_best_of(
            [&] { kern::tconv1d_forward_omp(x.data(), w.data(), b.data(), y2.data(), d); }, reps);
        report("tconv1d forward", ts, tp, y1 == y2);
    }

    {
        // LSTM-shaped gate matmul: 512 rows through a 512x192 weight
        const int64_t N = 512, Din = 192, Dout = 512;
        const auto x = rand_vec(static_cast<size_t>(N * Din), rng);
        const auto w = rand_vec(static_cast<size_t>(Dout * Din), rng);
        const auto b = rand_vec(static_cast<size_t>(Dout), rng);
        std::vector<float> y1(static_cast<size_t>(N * Dout)), y2 = y1;
        const double ts = time_best_of(
            [&] { kern::fc_forward_serial(x.data(), w.data(), b.data(), y1.data(), N, Din, Dout); },
            reps);
        const double tp = time_best_of(
            [&] { kern::fc_forward_omp(x.data(), w.data(), b.data(), y2.data(), N, Din, Dout); },
            reps);
        report("fc forward", ts, tp, y1 == y2);
    }

    return 0;
}
