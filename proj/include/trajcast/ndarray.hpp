#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "trajcast/util.hpp"

namespace traj {

inline int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ')';
    return os.str();
}

// Dense row-major array of reals with an optional gradient buffer.
// Real is float in training/inference and double in gradient-check mode.
template <class Real>
struct NdArray {
    std::vector<int64_t> shape;
    std::vector<Real> data;
    bool requires_grad = false;
    std::vector<Real> grad;  // same length as data when tracked

    NdArray() = default;
    NdArray(std::vector<int64_t> s, std::vector<Real> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != static_cast<int64_t>(data.size()))
            throw DimensionError("NdArray: data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
    }

    static NdArray zeros(std::vector<int64_t> s) {
        NdArray a;
        a.shape = std::move(s);
        a.data.assign(static_cast<size_t>(numel_of(a.shape)), Real(0));
        return a;
    }

    static NdArray full(std::vector<int64_t> s, Real v) {
        NdArray a = zeros(std::move(s));
        std::fill(a.data.begin(), a.data.end(), v);
        return a;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t ndim() const { return static_cast<int64_t>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i < 0 ? shape.size() + i : i)]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
    }
    void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }

    bool all_finite() const {
        for (Real v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <class Other>
    NdArray<Other> cast() const {
        NdArray<Other> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<Other>(data[i]);
        out.requires_grad = requires_grad;
        return out;
    }
};

}  // namespace traj
