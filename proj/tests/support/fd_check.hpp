#pragma once

// Central finite-difference gradient checking in double precision. The FD side
// re-evaluates the forward pass from scratch, so it stays independent of the
// backward implementation it verifies.

#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "trajcast/tape.hpp"

namespace traj::test {

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / denom;
}

// Builds a graph from tracked leaves and returns the scalar loss node.
using GraphBuilder = std::function<NodeId(Tape<double>&, const std::vector<NodeId>&)>;

// Checks every coordinate of every tracked input against central differences.
inline void check_gradients(std::vector<NdArray<double>>& inputs, const GraphBuilder& build,
                            double tol = 1e-4, double h = 1e-5) {
    auto eval = [&]() {
        Tape<double> tape;
        std::vector<NodeId> ids;
        for (auto& a : inputs) {
            NdArray<double> copy = a;
            copy.requires_grad = true;
            ids.push_back(tape.leaf(std::move(copy)));
        }
        const NodeId loss = build(tape, ids);
        return tape.value(loss).data[0];
    };

    Tape<double> tape;
    std::vector<NodeId> ids;
    for (auto& a : inputs) {
        NdArray<double> copy = a;
        copy.requires_grad = true;
        ids.push_back(tape.leaf(std::move(copy)));
    }
    const NodeId loss = build(tape, ids);
    tape.backward(loss);

    for (size_t i = 0; i < inputs.size(); ++i) {
        const auto& analytic = tape.grad(ids[i]);
        REQUIRE(analytic.size() == inputs[i].data.size());
        for (size_t j = 0; j < inputs[i].data.size(); ++j) {
            const double v = inputs[i].data[j];
            inputs[i].data[j] = v + h;
            const double fp = eval();
            inputs[i].data[j] = v - h;
            const double fm = eval();
            inputs[i].data[j] = v;
            const double fd = (fp - fm) / (2.0 * h);
            INFO("input ", i, " coord ", j, " analytic ", analytic[j], " fd ", fd);
            CHECK(rel_err(analytic[j], fd) <= tol);
        }
    }
}

inline NdArray<double> random_array(std::vector<int64_t> shape, RngStream& rng, double lo = -1.0,
                                    double hi = 1.0) {
    auto a = NdArray<double>::zeros(std::move(shape));
    for (auto& v : a.data) v = rng.uniform(lo, hi);
    return a;
}

}  // namespace traj::test
