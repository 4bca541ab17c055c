#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "relight/errors.hpp"

namespace relight {

// Dense row-major double tensor. Rank is dynamic; most of the codebase uses
// rank 1..3 ([N], [rows, cols], [H, W, C]).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        if (static_cast<int64_t>(v.size()) != numel_of(shape))
            throw DimensionError("tensor data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw DimensionError("tensor dims must be positive");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double value) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = value;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& operator()(int i) { return v[static_cast<size_t>(i)]; }
    double operator()(int i) const { return v[static_cast<size_t>(i)]; }
    double& operator()(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
    double operator()(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }
    double& operator()(int r, int c, int k) {
        return v[(static_cast<size_t>(r) * shape[1] + c) * shape[2] + k];
    }
    double operator()(int r, int c, int k) const {
        return v[(static_cast<size_t>(r) * shape[1] + c) * shape[2] + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double value) {
        for (auto& x : v) x = value;
    }
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

} // namespace relight
