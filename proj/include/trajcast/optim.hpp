#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trajcast/ndarray.hpp"
#include "trajcast/util.hpp"

namespace traj {

// lr = base_lr * gamma^floor(epoch / step_size)
inline double lr_schedule(int64_t epoch, double base_lr, double gamma, int64_t step_size) {
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step_size));
}

template <class Real>
struct AdamState {
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);
    int64_t t = 0;
    std::vector<std::vector<Real>> m;  // first moments, one buffer per parameter
    std::vector<std::vector<Real>> v;  // second moments
};

// Bias-corrected Adam update over an ordered parameter list. Moment buffers are
// allocated on first use and must stay aligned with the parameter order.
template <class Real>
void adam_step(const std::vector<NdArray<Real>*>& params,
               const std::vector<const std::vector<Real>*>& grads,
               const std::vector<std::string>& names, AdamState<Real>& st, Real lr) {
    if (params.size() != grads.size())
        throw ContractError("adam_step: parameter/gradient count mismatch");
    if (st.m.empty()) {
        st.m.resize(params.size());
        st.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            st.m[i].assign(params[i]->data.size(), Real(0));
            st.v[i].assign(params[i]->data.size(), Real(0));
        }
    }
    st.t += 1;
    const Real bc1 = Real(1) - std::pow(st.beta1, static_cast<Real>(st.t));
    const Real bc2 = Real(1) - std::pow(st.beta2, static_cast<Real>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i]->data;
        const auto& g = *grads[i];
        if (g.size() != p.size())
            throw ContractError("adam_step: gradient shape mismatch for " +
                                (i < names.size() ? names[i] : std::to_string(i)));
        auto& m = st.m[i];
        auto& v = st.v[i];
        for (size_t j = 0; j < p.size(); ++j) {
            if (!std::isfinite(static_cast<double>(g[j])))
                throw OptimizerError("adam_step: non-finite gradient in " +
                                     (i < names.size() ? names[i] : std::to_string(i)));
            m[j] = st.beta1 * m[j] + (Real(1) - st.beta1) * g[j];
            v[j] = st.beta2 * v[j] + (Real(1) - st.beta2) * g[j] * g[j];
            const Real mhat = m[j] / bc1;
            const Real vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + st.eps);
        }
    }
}

}  // namespace traj
