#pragma once

// Spectral Foreground Fixer: wavelet split of input foreground and relit
// output, a small modulator predicting per-pixel (α, β), and the additive
// recomposition I' = (HQ_in·α + β) + LQ_out, with its self-supervised
// color-transform training loop.

#include <cmath>
#include <string>
#include <vector>

#include "relight/autodiff.hpp"
#include "relight/image.hpp"
#include "relight/rng.hpp"
#include "relight/spectral.hpp"
#include "relight/tensor.hpp"

namespace relight {

struct ModulationField {
    Tensor alpha; // H×W×3
    Tensor beta;  // H×W×3
};

struct ColorTransform {
    double gain[3] = {1.0, 1.0, 1.0}; // per-channel, in [0.5, 2.0]
    double gamma = 1.0;               // in [0.6, 1.6]
    double offset = 0.0;              // brightness, in [-0.2, 0.2]
    double hue_angle = 0.0;           // rotation about the gray axis, radians
};

inline ImageBuffer apply_color_transform(const ImageBuffer& img, const ColorTransform& ct) {
    check_image(img, "apply_color_transform");
    if (img.dim(2) != 3) throw DimensionError("apply_color_transform: expected RGB");
    int h = img.dim(0), w = img.dim(1);
    // Rodrigues rotation about the gray axis a = (1,1,1)/sqrt(3)
    double cosa = std::cos(ct.hue_angle), sina = std::sin(ct.hue_angle);
    double third = 1.0 / 3.0, rs = 1.0 / std::sqrt(3.0);
    double skew[3][3] = {{0, -rs, rs}, {rs, 0, -rs}, {-rs, rs, 0}};
    double rot[3][3];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            rot[i][j] = cosa * (i == j ? 1.0 : 0.0) + (1.0 - cosa) * third + sina * skew[i][j];
    ImageBuffer out = make_image(h, w, 3);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double px[3];
            for (int k = 0; k < 3; ++k) {
                double x = clamp01(img(r, c, k)) * ct.gain[k];
                if (ct.gamma != 1.0) x = std::pow(std::max(x, 0.0), ct.gamma);
                px[k] = x + ct.offset;
            }
            for (int k = 0; k < 3; ++k) {
                double y = rot[k][0] * px[0] + rot[k][1] * px[1] + rot[k][2] * px[2];
                out(r, c, k) = clamp01(y);
            }
        }
    return out;
}

inline std::pair<ImageBuffer, ColorTransform> random_color_transform(const ImageBuffer& img,
                                                                     uint64_t seed) {
    Rng rng(seed);
    ColorTransform ct;
    for (int k = 0; k < 3; ++k) ct.gain[k] = rng.uniform(0.5, 2.0);
    ct.gamma = rng.uniform(0.6, 1.6);
    ct.offset = rng.uniform(-0.2, 0.2);
    ct.hue_angle = rng.uniform(-0.35, 0.35);
    return {apply_color_transform(img, ct), ct};
}

// Modulator: 4 conv layers 3×3, widths 6→32→32→32→6, final layer
// zero-initialized so α ≡ 1, β ≡ 0 at the start (identity recomposition).
inline constexpr int kFixerWidth = 32;

inline void init_fixer_params(ad::ParamStore& ps, uint64_t seed) {
    Rng rng = Rng::derive(seed, 0xf1 / 1);
    int widths[5] = {6, kFixerWidth, kFixerWidth, kFixerWidth, 6};
    for (int l = 0; l < 4; ++l) {
        Tensor w({3, 3, widths[l], widths[l + 1]});
        if (l < 3) {
            double he = std::sqrt(2.0 / (9.0 * widths[l]));
            for (auto& x : w.v) x = he * rng.normal();
        }
        ps.add("fixer.conv" + std::to_string(l) + ".w", std::move(w));
        ps.add("fixer.conv" + std::to_string(l) + ".b", Tensor::zeros({widths[l + 1]}));
    }
}

// Builds the modulator graph. hq_in/lq_out are constants; returns (alpha,
// beta, i_prime) nodes. Used for both inference and training.
struct ModulateNodes {
    ad::Var alpha;
    ad::Var beta;
    ad::Var hq_prime;
    ad::Var i_prime;
};

inline ModulateNodes modulate_graph(ad::Tape& t, const Tensor& hq_in, const Tensor& lq_out,
                                    ad::ParamStore& ps) {
    if (!hq_in.same_shape(lq_out)) throw DimensionError("modulate: subband shape mismatch");
    if (hq_in.shape.size() != 3 || hq_in.dim(2) != 3)
        throw DimensionError("modulate: expected H×W×3 subbands");
    ad::Var x = t.constant(hq_in);
    ad::Var y = t.constant(lq_out);
    ad::Var z = ad::concat_channels(t, x, y);
    for (int l = 0; l < 4; ++l) {
        z = ad::conv2d(t, z, t.param(ps.at("fixer.conv" + std::to_string(l) + ".w")),
                       t.param(ps.at("fixer.conv" + std::to_string(l) + ".b")), 1, 1);
        if (l < 3) z = ad::relu(t, z);
    }
    ModulateNodes out;
    out.alpha = ad::add_scalar(t, ad::slice_channels(t, z, 0, 3), 1.0);
    out.beta = ad::slice_channels(t, z, 3, 6);
    out.hq_prime = ad::add(t, ad::mul_const(t, out.alpha, hq_in), out.beta);
    out.i_prime = ad::add_const(t, out.hq_prime, lq_out);
    return out;
}

inline std::pair<ModulationField, ImageBuffer> modulate(const Tensor& hq_in, const Tensor& lq_out,
                                                        ad::ParamStore& ps) {
    ad::Tape t;
    ModulateNodes n = modulate_graph(t, hq_in, lq_out, ps);
    ModulationField field{n.alpha->val, n.beta->val};
    return {field, n.i_prime->val};
}

// Frozen random-weight 3-layer conv feature extractor used as the desk-scale
// perceptual proxy. Weights derive from a fixed seed and never train.
struct PerceptualProxy {
    Tensor w0, b0, w1, b1, w2, b2;

    static PerceptualProxy make() {
        PerceptualProxy p;
        Rng rng(0x9e7cee75a11ULL);
        auto init = [&rng](std::vector<int> shape) {
            Tensor t(std::move(shape));
            double he = std::sqrt(2.0 / (9.0 * t.dim(2)));
            for (auto& x : t.v) x = he * rng.normal();
            return t;
        };
        p.w0 = init({3, 3, 3, 8});
        p.b0 = Tensor::zeros({8});
        p.w1 = init({3, 3, 8, 8});
        p.b1 = Tensor::zeros({8});
        p.w2 = init({3, 3, 8, 8});
        p.b2 = Tensor::zeros({8});
        return p;
    }

    ad::Var features(ad::Tape& t, ad::Var img) const {
        ad::Var z = ad::relu(t, ad::conv2d(t, img, t.constant(w0), t.constant(b0), 1, 1));
        z = ad::relu(t, ad::conv2d(t, z, t.constant(w1), t.constant(b1), 2, 1));
        return ad::conv2d(t, z, t.constant(w2), t.constant(b2), 1, 1);
    }

    Tensor features_plain(const Tensor& img) const {
        ad::Tape t;
        return features(t, t.constant(img))->val;
    }
};

inline constexpr double kPerceptualWeight = 0.1;

// One optimizer step on a batch of (original, transformed) pairs. Loss is
// MSE(I', original) + MSE(HQ', HQ(original)) + 0.1·Perc(I', original).
inline double fixer_train_step(const std::vector<std::pair<ImageBuffer, ImageBuffer>>& batch,
                               ad::ParamStore& ps, const PerceptualProxy& proxy, double lr,
                               int64_t step) {
    if (batch.empty()) throw ParameterError("fixer_train_step: empty batch");
    ps.zero_grad();
    double total = 0.0;
    double inv_b = 1.0 / static_cast<double>(batch.size());
    for (const auto& [original, transformed] : batch) {
        ad::Tape t;
        Tensor hq_in = haar_analyze(transformed).hq;
        Tensor lq_out = haar_analyze(original).lq;
        Tensor hq_target = haar_analyze(original).hq;
        ModulateNodes n = modulate_graph(t, hq_in, lq_out, ps);
        ad::Var loss = ad::add(t, ad::mse(t, n.i_prime, original), ad::mse(t, n.hq_prime, hq_target));
        ad::Var pf = proxy.features(t, n.i_prime);
        Tensor target_feat = proxy.features_plain(original);
        loss = ad::add(t, loss, ad::scale(t, ad::mse(t, pf, target_feat), kPerceptualWeight));
        loss = ad::scale(t, loss, inv_b);
        t.backward(loss);
        total += loss->val.v[0];
    }
    ps.clip_grad_norm(ad::kGradClipNorm);
    ps.adam_step(lr, step);
    return total;
}

// Replace foreground pixels of the relit image by the fixer recomposition of
// (input-foreground high band, relit low band). Background stays bit-equal.
inline ImageBuffer apply_fixer(const ImageBuffer& relit, const ImageBuffer& fg_input,
                               const Tensor& fg_mask, ad::ParamStore& ps) {
    if (!relit.same_shape(fg_input)) throw DimensionError("apply_fixer: image dims mismatch");
    if (fg_mask.dim(0) != relit.dim(0) || fg_mask.dim(1) != relit.dim(1))
        throw DimensionError("apply_fixer: mask dims mismatch");
    Tensor hq_in = haar_analyze(fg_input).hq;
    Tensor lq_out = haar_analyze(relit).lq;
    auto [field, i_prime] = modulate(hq_in, lq_out, ps);
    ImageBuffer out = relit;
    int h = relit.dim(0), w = relit.dim(1), c = relit.dim(2);
    for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc)
            if (fg_mask(r, cc) > 0.5)
                for (int k = 0; k < c; ++k) out(r, cc, k) = clamp01(i_prime(r, cc, k));
    return out;
}

} // namespace relight
