#pragma once

// PSNR, windowed SSIM, and the directional consistency score (DCS). DCS is a
// project-local proxy: it checks that the lit half of the foreground, split
// by the in-plane light direction through the mask centroid, is brighter than
// the dark half. It is not a published metric.

#include <cmath>
#include <limits>

#include "relight/errors.hpp"
#include "relight/image.hpp"

namespace relight {

inline constexpr double kPsnrCap = 99.0;

inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
    if (!a.same_shape(b)) throw DimensionError("psnr: shape mismatch");
    check_image(a, "psnr");
    double mse = 0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        double d = a.v[i] - b.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

// Uniform-window SSIM over valid window positions, averaged over channels.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) {
    if (!a.same_shape(b)) throw DimensionError("ssim: shape mismatch");
    check_image(a, "ssim");
    int h = a.dim(0), w = a.dim(1), ch = a.dim(2);
    if (h < kSsimWindow || w < kSsimWindow)
        throw ParameterError("ssim: image smaller than the 7x7 window");
    double total = 0;
    long count = 0;
    const double n = static_cast<double>(kSsimWindow) * kSsimWindow;
    for (int k = 0; k < ch; ++k)
        for (int r = 0; r + kSsimWindow <= h; ++r)
            for (int c = 0; c + kSsimWindow <= w; ++c) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int i = 0; i < kSsimWindow; ++i)
                    for (int j = 0; j < kSsimWindow; ++j) {
                        double xa = a(r + i, c + j, k), xb = b(r + i, c + j, k);
                        sa += xa;
                        sb += xb;
                        saa += xa * xa;
                        sbb += xb * xb;
                        sab += xa * xb;
                    }
                double ma = sa / n, mb = sb / n;
                double va = saa / n - ma * ma, vb = sbb / n - mb * mb;
                double cov = sab / n - ma * mb;
                total += ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                         ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
                ++count;
            }
    return total / static_cast<double>(count);
}

// DCS in [-1, 1]: ratio form is invariant to uniform luminance scaling.
inline double directional_consistency(const ImageBuffer& relit, const Tensor& fg_mask,
                                      const std::array<double, 3>& light_dir) {
    check_image(relit, "directional_consistency");
    if (fg_mask.dim(0) != relit.dim(0) || fg_mask.dim(1) != relit.dim(1))
        throw DimensionError("directional_consistency: mask dims mismatch");
    double lx = light_dir[0], ly = light_dir[1];
    if (std::sqrt(lx * lx + ly * ly) < 1e-9)
        throw ParameterError("directional_consistency: light has no in-plane component");
    int h = relit.dim(0), w = relit.dim(1), ch = relit.dim(2);

    double cr = 0, cc = 0, count = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (fg_mask(r, c) > 0.5) {
                cr += r;
                cc += c;
                count += 1;
            }
    if (count == 0) throw ParameterError("directional_consistency: empty mask");
    cr /= count;
    cc /= count;

    double lit_sum = 0, lit_n = 0, dark_sum = 0, dark_n = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (fg_mask(r, c) <= 0.5) continue;
            double lum = 0;
            for (int k = 0; k < ch; ++k) lum += relit(r, c, k);
            lum /= ch;
            // lit side: offset from centroid aligned with the direction
            // toward the light (x right, y down, same frame as the renderer)
            double proj = (c - cc) * lx + (r - cr) * ly;
            if (proj > 0) {
                lit_sum += lum;
                lit_n += 1;
            } else if (proj < 0) {
                dark_sum += lum;
                dark_n += 1;
            }
        }
    double lit = lit_n > 0 ? lit_sum / lit_n : 0.0;
    double dark = dark_n > 0 ? dark_sum / dark_n : 0.0;
    return (lit - dark) / (lit + dark + 1e-6);
}

} // namespace relight
