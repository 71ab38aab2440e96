// The OpenMP kernels distribute the same per-output-element reductions that the
// serial references run, so their results must be bit-identical.

#include <vector>

#include "doctest.h"
#include "support/fd_check.hpp"
#include "trajcast/kernels.hpp"

using namespace traj;
using traj::test::random_array;

namespace {

std::vector<double> rand_vec(size_t n, RngStream& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

}  // namespace

TEST_CASE("fc kernels: omp matches serial bit-exactly") {
    RngStream rng(1);
    const int64_t N = 37, Din = 19, Dout = 23;
    const auto x = rand_vec(static_cast<size_t>(N * Din), rng);
    const auto w = rand_vec(static_cast<size_t>(Dout * Din), rng);
    const auto b = rand_vec(static_cast<size_t>(Dout), rng);

    std::vector<double> y1(static_cast<size_t>(N * Dout)), y2 = y1;
    kern::fc_forward_serial(x.data(), w.data(), b.data(), y1.data(), N, Din, Dout);
    kern::fc_forward_omp(x.data(), w.data(), b.data(), y2.data(), N, Din, Dout);
    CHECK(y1 == y2);

    const auto dy = rand_vec(static_cast<size_t>(N * Dout), rng);
    std::vector<double> dx1(static_cast<size_t>(N * Din), 0.1), dx2 = dx1;
    kern::fc_grad_input_serial(dy.data(), w.data(), dx1.data(), N, Din, Dout);
    kern::fc_grad_input_omp(dy.data(), w.data(), dx2.data(), N, Din, Dout);
    CHECK(dx1 == dx2);

    std::vector<double> dw1(static_cast<size_t>(Dout * Din), 0.0), dw2 = dw1;
    std::vector<double> db1(static_cast<size_t>(Dout), 0.0), db2 = db1;
    kern::fc_grad_weight_serial(dy.data(), x.data(), dw1.data(), db1.data(), N, Din, Dout);
    kern::fc_grad_weight_omp(dy.data(), x.data(), dw2.data(), db2.data(), N, Din, Dout);
    CHECK(dw1 == dw2);
    CHECK(db1 == db2);
}

TEST_CASE("conv1d kernels: omp matches serial bit-exactly") {
    RngStream rng(2);
    const kern::Conv1dDims d{5, 3, 21, 4, 5, 2};
    const auto x = rand_vec(static_cast<size_t>(d.B * d.Cin * d.L), rng);
    const auto w = rand_vec(static_cast<size_t>(d.Cout * d.Cin * d.k), rng);
    const auto b = rand_vec(static_cast<size_t>(d.Cout), rng);

    std::vector<double> y1(static_cast<size_t>(d.B * d.Cout * d.Lo())), y2 = y1;
    kern::conv1d_forward_serial(x.data(), w.data(), b.data(), y1.data(), d);
    kern::conv1d_forward_omp(x.data(), w.data(), b.data(), y2.data(), d);
    CHECK(y1 == y2);

    const auto dy = rand_vec(y1.size(), rng);
    std::vector<double> dx1(x.size(), 0.0), dx2 = dx1;
    kern::conv1d_grad_input_serial(dy.data(), w.data(), dx1.data(), d);
    kern::conv1d_grad_input_omp(dy.data(), w.data(), dx2.data(), d);
    CHECK(dx1 == dx2);

    std::vector<double> dw1(w.size(), 0.0), dw2 = dw1, db1(b.size(), 0.0), db2 = db1;
    kern::conv1d_grad_weight_serial(dy.data(), x.data(), dw1.data(), db1.data(), d);
    kern::conv1d_grad_weight_omp(dy.data(), x.data(), dw2.data(), db2.data(), d);
    CHECK(dw1 == dw2);
    CHECK(db1 == db2);
}

TEST_CASE("conv2d kernels: omp matches serial bit-exactly") {
    RngStream rng(3);
    const kern::Conv2dDims d{3, 2, 11, 9, 4, 3, 5, 1, 2};
    const auto x = rand_vec(static_cast<size_t>(d.B * d.Cin * d.H * d.W), rng);
    const auto w = rand_vec(static_cast<size_t>(d.Cout * d.Cin * d.kh * d.kw), rng);
    const auto b = rand_vec(static_cast<size_t>(d.Cout), rng);

    std::vector<double> y1(static_cast<size_t>(d.B * d.Cout * d.Ho() * d.Wo())), y2 = y1;
    kern::conv2d_forward_serial(x.data(), w.data(), b.data(), y1.data(), d);
    kern::conv2d_forward_omp(x.data(), w.data(), b.data(), y2.data(), d);
    CHECK(y1 == y2);

    const auto dy = rand_vec(y1.size(), rng);
    std::vector<double> dx1(x.size(), 0.0), dx2 = dx1;
    kern::conv2d_grad_input_serial(dy.data(), w.data(), dx1.data(), d);
    kern::conv2d_grad_input_omp(dy.data(), w.data(), dx2.data(), d);
    CHECK(dx1 == dx2);

    std::vector<double> dw1(w.size(), 0.0), dw2 = dw1, db1(b.size(), 0.0), db2 = db1;
    kern::conv2d_grad_weight_serial(dy.data(), x.data(), dw1.data(), db1.data(), d);
    kern::conv2d_grad_weight_omp(dy.data(), x.data(), dw2.data(), db2.data(), d);
    CHECK(dw1 == dw2);
    CHECK(db1 == db2);
}

TEST_CASE("tconv1d kernels: omp matches serial bit-exactly") {
    RngStream rng(4);
    const kern::TConv1dDims d{4, 3, 9, 2, 5, 2, 1};
    const auto x = rand_vec(static_cast<size_t>(d.B * d.Cin * d.L), rng);
    const auto w = rand_vec(static_cast<size_t>(d.Cin * d.Cout * d.k), rng);
    const auto b = rand_vec(static_cast<size_t>(d.Cout), rng);

    std::vector<double> y1(static_cast<size_t>(d.B * d.Cout * d.Lo())), y2 = y1;
    kern::tconv1d_forward_serial(x.data(), w.data(), b.data(), y1.data(), d);
    kern::tconv1d_forward_omp(x.data(), w.data(), b.data(), y2.data(), d);
    CHECK(y1 == y2);

    const auto dy = rand_vec(y1.size(), rng);
    std::vector<double> dx1(x.size(), 0.0), dx2 = dx1;
    kern::tconv1d_grad_input_serial(dy.data(), w.data(), dx1.data(), d);
    kern::tconv1d_grad_input_omp(dy.data(), w.data(), dx2.data(), d);
    CHECK(dx1 == dx2);

    std::vector<double> dw1(w.size(), 0.0), dw2 = dw1, db1(b.size(), 0.0), db2 = db1;
    kern::tconv1d_grad_weight_serial(dy.data(), x.data(), dw1.data(), db1.data(), d);
    kern::tconv1d_grad_weight_omp(dy.data(), x.data(), dw2.data(), db2.data(), d);
    CHECK(dw1 == dw2);
    CHECK(db1 == db2);
}

TEST_CASE("parallel toggle is honored by dispatchers") {
    const bool was = kern::parallel_enabled();
    kern::set_parallel(false);
    CHECK_FALSE(kern::parallel_enabled());
    kern::set_parallel(true);
    CHECK(kern::parallel_enabled());
    kern::set_parallel(was);
}
