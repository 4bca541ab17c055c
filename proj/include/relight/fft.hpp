#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "relight/errors.hpp"
#include "relight/tensor.hpp"

namespace relight {

using cplx = std::complex<double>;

// rows×cols complex spectrum, row-major, one plane per channel.
struct ComplexGrid {
    int rows = 0;
    int cols = 0;
    std::vector<cplx> data;

    ComplexGrid() = default;
    ComplexGrid(int r, int c) : rows(r), cols(c) {
        if (r < 1 || c < 1) throw DimensionError("ComplexGrid: dims must be >= 1");
        data.assign(static_cast<size_t>(r) * c, cplx{0.0, 0.0});
    }
    cplx& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    cplx at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

namespace fft_detail {

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline bool is_pow2(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey; n must be a power of two.
inline void fft_pow2(std::vector<cplx>& a, bool inverse) {
    size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = kTwoPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        cplx wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                cplx u = a[i + j];
                cplx t = a[i + j + len / 2] * w;
                a[i + j] = u + t;
                a[i + j + len / 2] = u - t;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

// Bluestein chirp-z transform for arbitrary n (handles non-power-of-two sizes
// by embedding into a power-of-two convolution). Unnormalized forward.
inline void fft_any(std::vector<cplx>& a, bool inverse) {
    size_t n = a.size();
    if (n == 1) return;
    if (is_pow2(n)) {
        fft_pow2(a, inverse);
        return;
    }
    double sign = inverse ? 1.0 : -1.0;
    std::vector<cplx> chirp(n);
    for (size_t k = 0; k < n; ++k) {
        // angle uses k^2 mod 2n to avoid precision loss for large k
        size_t k2 = (k * k) % (2 * n);
        double ang = sign * kTwoPi * static_cast<double>(k2) / (2.0 * static_cast<double>(n));
        chirp[k] = cplx(std::cos(ang), std::sin(ang));
    }
    size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;
    std::vector<cplx> x(m, cplx{0, 0}), y(m, cplx{0, 0});
    for (size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    y[0] = std::conj(chirp[0]);
    for (size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);
    fft_pow2(x, false);
    fft_pow2(y, false);
    for (size_t k = 0; k < m; ++k) x[k] *= y[k];
    fft_pow2(x, true);
    for (size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    if (inverse)
        for (auto& v : a) v /= static_cast<double>(n);
}

inline void transform_2d(ComplexGrid& g, bool inverse) {
    std::vector<cplx> line;
    line.resize(static_cast<size_t>(g.cols));
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) line[static_cast<size_t>(c)] = g.at(r, c);
        fft_any(line, inverse);
        for (int c = 0; c < g.cols; ++c) g.at(r, c) = line[static_cast<size_t>(c)];
    }
    line.resize(static_cast<size_t>(g.rows));
    for (int c = 0; c < g.cols; ++c) {
        for (int r = 0; r < g.rows; ++r) line[static_cast<size_t>(r)] = g.at(r, c);
        fft_any(line, inverse);
        for (int r = 0; r < g.rows; ++r) g.at(r, c) = line[static_cast<size_t>(r)];
    }
}

} // namespace fft_detail

// Unnormalized forward 2-D DFT; non-power-of-two sizes go through Bluestein.
inline ComplexGrid fft2(const ComplexGrid& plane) {
    if (plane.rows < 1 || plane.cols < 1) throw DimensionError("fft2: zero-sized plane");
    ComplexGrid out = plane;
    fft_detail::transform_2d(out, false);
    return out;
}

inline ComplexGrid fft2(const Tensor& plane) {
    if (plane.shape.size() != 2) throw DimensionError("fft2: expected a 2-D real plane");
    ComplexGrid g(plane.dim(0), plane.dim(1));
    for (size_t i = 0; i < plane.v.size(); ++i) g.data[i] = cplx(plane.v[i], 0.0);
    fft_detail::transform_2d(g, false);
    return g;
}

// Inverse transform carries the full 1/(rows·cols) normalization.
inline ComplexGrid ifft2(const ComplexGrid& spectrum) {
    if (spectrum.rows < 1 || spectrum.cols < 1) throw DimensionError("ifft2: zero-sized plane");
    ComplexGrid out = spectrum;
    fft_detail::transform_2d(out, true);
    return out;
}

} // namespace relight
