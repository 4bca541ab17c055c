#pragma once

// Test-only brute-force references. These stay independent of the library's
// transform and attention paths so they remain valid oracles.

#include <cmath>
#include <complex>
#include <vector>

#include "relight/tensor.hpp"

namespace oracle {

using relight::Tensor;
using cplx = std::complex<double>;

// O(N^4) direct 2-D DFT. sign = -1 forward (unnormalized), +1 inverse
// (normalized by 1/(H·W)).
inline std::vector<cplx> dft2(const std::vector<cplx>& in, int h, int w, int sign) {
    std::vector<cplx> out(static_cast<size_t>(h) * w);
    const double two_pi = 6.283185307179586476925286766559;
    for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
            cplx acc{0, 0};
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    double ang = sign * two_pi * (static_cast<double>(u) * r / h +
                                                  static_cast<double>(v) * c / w);
                    acc += in[static_cast<size_t>(r) * w + c] * cplx(std::cos(ang), std::sin(ang));
                }
            if (sign > 0) acc /= static_cast<double>(h) * w;
            out[static_cast<size_t>(u) * w + v] = acc;
        }
    return out;
}

// Softmax of one row of logits.
inline std::vector<double> softmax(const std::vector<double>& logits) {
    double m = logits[0];
    for (double x : logits) m = std::max(m, x);
    std::vector<double> p(logits.size());
    double s = 0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        s += p[i];
    }
    for (auto& x : p) x /= s;
    return p;
}

// Explicit-loop single-head attention with a post-softmax multiplicative mask
// and row renormalization. q: [nq][d], k,v: [nk][d], mask: [nq][nk].
inline std::vector<std::vector<double>> masked_attention(
    const std::vector<std::vector<double>>& q, const std::vector<std::vector<double>>& k,
    const std::vector<std::vector<double>>& v, const std::vector<std::vector<double>>& mask) {
    size_t nq = q.size(), nk = k.size(), d = q[0].size();
    double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<std::vector<double>> out(nq, std::vector<double>(v[0].size(), 0.0));
    for (size_t i = 0; i < nq; ++i) {
        std::vector<double> logits(nk);
        for (size_t j = 0; j < nk; ++j) {
            double dot = 0;
            for (size_t t = 0; t < d; ++t) dot += q[i][t] * k[j][t];
            logits[j] = dot * inv_sqrt_d;
        }
        std::vector<double> p = softmax(logits);
        double s = 0;
        for (size_t j = 0; j < nk; ++j) {
            p[j] *= mask[i][j];
            s += p[j];
        }
        for (size_t j = 0; j < nk; ++j) p[j] /= s;
        for (size_t j = 0; j < nk; ++j)
            for (size_t t = 0; t < v[0].size(); ++t) out[i][t] += p[j] * v[j][t];
    }
    return out;
}

// Direct-loop 2-D convolution, HWC layout, zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    int h = x.dim(0), ww = x.dim(1), cin = x.dim(2);
    int kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
    int ho = (h + 2 * pad - kh) / stride + 1;
    int wo = (ww + 2 * pad - kw) / stride + 1;
    Tensor y({ho, wo, cout});
    for (int r = 0; r < ho; ++r)
        for (int c = 0; c < wo; ++c)
            for (int o = 0; o < cout; ++o) {
                double acc = b(o);
                for (int i = 0; i < kh; ++i)
                    for (int j = 0; j < kw; ++j) {
                        int rr = r * stride + i - pad, cc = c * stride + j - pad;
                        if (rr < 0 || rr >= h || cc < 0 || cc >= ww) continue;
                        for (int ci = 0; ci < cin; ++ci) acc += x(rr, cc, ci) * w.v[((static_cast<size_t>(i) * kw + j) * cin + ci) * cout + o];
                    }
                y(r, c, o) = acc;
            }
    return y;
}

// Per-window SSIM with a uniform window, mean over valid windows and channels.
inline double ssim(const Tensor& a, const Tensor& b, int win, double c1, double c2) {
    int h = a.dim(0), w = a.dim(1), ch = a.dim(2);
    double total = 0;
    long count = 0;
    for (int k = 0; k < ch; ++k)
        for (int r = 0; r + win <= h; ++r)
            for (int c = 0; c + win <= w; ++c) {
                double ma = 0, mb = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        ma += a(r + i, c + j, k);
                        mb += b(r + i, c + j, k);
                    }
                double n = win * win;
                ma /= n;
                mb /= n;
                double va = 0, vb = 0, cov = 0;
                for (int i = 0; i < win; ++i)
                    for (int j = 0; j < win; ++j) {
                        double da = a(r + i, c + j, k) - ma, db = b(r + i, c + j, k) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                va /= n;
                vb /= n;
                cov /= n;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

} // namespace oracle
