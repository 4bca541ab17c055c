#pragma once

#include <cmath>
#include <vector>

#include "relight/errors.hpp"
#include "relight/fft.hpp"
#include "relight/image.hpp"
#include "relight/tensor.hpp"

namespace relight {

// Gaussian low-pass coefficient map, parameterized over centered frequency
// offsets. sigma is in frequency-index units.
struct SpectralFilter {
    double sigma = 0.0;
    Tensor map; // H×W, values in (0,1], 1.0 at the centered DC bin
};

inline SpectralFilter gaussian_lowpass_map(int h, int w, double sigma) {
    if (h < 1 || w < 1) throw DimensionError("gaussian_lowpass_map: dims must be >= 1");
    if (!(sigma > 0.0)) throw ParameterError("gaussian_lowpass_map: sigma must be > 0");
    SpectralFilter f;
    f.sigma = sigma;
    f.map = Tensor({h, w});
    int ch = h / 2, cw = w / 2;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double du = r - ch, dv = c - cw;
            f.map(r, c) = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
        }
    return f;
}

// Filter coefficient for an unshifted spectrum index (u, v): the map is stored
// centered, so index with the fftshift offset.
inline double filter_at(const SpectralFilter& f, int u, int v) {
    int h = f.map.dim(0), w = f.map.dim(1);
    return f.map((u + h / 2) % h, (v + w / 2) % w);
}

// 1×1 spectral-domain mixing: real and imaginary parts of the D-channel
// spectrum are stacked into 2D channels and mixed by a single weight matrix.
struct EnhanceParams {
    Tensor weight; // [2D, 2D], output = input · weight
    Tensor bias;   // [2D]
};

inline EnhanceParams zero_enhance_params(int feature_dim) {
    EnhanceParams p;
    p.weight = Tensor({2 * feature_dim, 2 * feature_dim});
    p.bias = Tensor({2 * feature_dim});
    return p;
}

// f_bl = IFFT(ReLU(Conv(FFT(f_b) * g))) + f_b. The residual term makes the
// zero-weight case an exact identity.
inline FeatureGrid low_freq_enhance(const FeatureGrid& f_b, const SpectralFilter& filter,
                                    const EnhanceParams& params) {
    check_image(f_b, "low_freq_enhance");
    int h = f_b.dim(0), w = f_b.dim(1), d = f_b.dim(2);
    if (filter.map.dim(0) != h || filter.map.dim(1) != w)
        throw DimensionError("low_freq_enhance: filter dims do not match feature grid");
    if (filter.map.numel() == 0) throw DimensionError("low_freq_enhance: empty filter");
    if (params.weight.dim(0) != 2 * d || params.weight.dim(1) != 2 * d || params.bias.dim(0) != 2 * d)
        throw DimensionError("low_freq_enhance: params sized for a different channel depth");

    // Filtered spectrum, re/im stacked as channels: [H, W, 2D]
    Tensor spec({h, w, 2 * d});
    Tensor plane({h, w});
    for (int ch = 0; ch < d; ++ch) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) plane(r, c) = f_b(r, c, ch);
        ComplexGrid s = fft2(plane);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                cplx z = s.at(r, c) * filter_at(filter, r, c);
                spec(r, c, ch) = z.real();
                spec(r, c, d + ch) = z.imag();
            }
    }

    // ReLU(1×1 conv) across the 2D channels, shared over frequencies.
    Tensor mixed({h, w, 2 * d});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int o = 0; o < 2 * d; ++o) {
                double acc = params.bias(o);
                for (int i = 0; i < 2 * d; ++i) acc += spec(r, c, i) * params.weight(i, o);
                mixed(r, c, o) = acc > 0.0 ? acc : 0.0;
            }

    // Inverse transform per channel, real part, plus the residual.
    FeatureGrid out = f_b;
    ComplexGrid back(h, w);
    for (int ch = 0; ch < d; ++ch) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                back.at(r, c) = cplx(mixed(r, c, ch), mixed(r, c, d + ch));
        ComplexGrid rec = ifft2(back);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) out(r, c, ch) += rec.at(r, c).real();
    }
    return out;
}

// Additive wavelet split: lq is the single-level Haar LL reconstruction and
// hq the residual, so lq + hq = img holds by construction.
struct SubbandSplit {
    ImageBuffer lq;
    ImageBuffer hq;
};

inline SubbandSplit haar_analyze(const ImageBuffer& img) {
    check_image(img, "haar_analyze");
    int h = img.dim(0), w = img.dim(1), ch = img.dim(2);
    int hp = h + (h % 2), wp = w + (w % 2);

    // reflect-pad odd dims by one row/col
    auto px = [&](int r, int c, int k) {
        if (r >= h) r = 2 * h - 1 - r;
        if (c >= w) c = 2 * w - 1 - c;
        return img(r, c, k);
    };

    SubbandSplit s;
    s.lq = make_image(h, w, ch);
    s.hq = make_image(h, w, ch);
    for (int k = 0; k < ch; ++k)
        for (int br = 0; br < hp / 2; ++br)
            for (int bc = 0; bc < wp / 2; ++bc) {
                // orthonormal LL = (a+b+c+d)/2; LL-only synthesis puts LL/2 in
                // each of the four pixels
                double ll = 0.5 * (px(2 * br, 2 * bc, k) + px(2 * br, 2 * bc + 1, k) +
                                   px(2 * br + 1, 2 * bc, k) + px(2 * br + 1, 2 * bc + 1, k));
                double rec = 0.5 * ll;
                for (int dr = 0; dr < 2; ++dr)
                    for (int dc = 0; dc < 2; ++dc) {
                        int r = 2 * br + dr, c = 2 * bc + dc;
                        if (r < h && c < w) s.lq(r, c, k) = rec;
                    }
            }
    for (size_t i = 0; i < img.v.size(); ++i) s.hq.v[i] = img.v[i] - s.lq.v[i];
    return s;
}

inline ImageBuffer haar_synthesize(const SubbandSplit& s) {
    if (!s.lq.same_shape(s.hq)) throw DimensionError("haar_synthesize: subband shape mismatch");
    ImageBuffer out = s.lq;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += s.hq.v[i];
    return out;
}

} // namespace relight
