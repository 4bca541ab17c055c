#pragma once

// Latent-denoising relighting pipeline: a lossless patchify codec, input
// assembly, a small encoder-decoder noise predictor with cross-attention
// condition slots, light-query injection at the mid and up blocks, a cosine
// noise schedule, and the training/sampling loops.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "relight/attention.hpp"
#include "relight/autodiff.hpp"
#include "relight/config.hpp"
#include "relight/errors.hpp"
#include "relight/image.hpp"
#include "relight/rng.hpp"
#include "relight/spectral.hpp"
#include "relight/synth.hpp"
#include "relight/vocab.hpp"

namespace relight {

enum class RelightMode { image_based, text_based, both };

struct RelightInput {
    ImageBuffer fg;      // foreground under neutral light
    Tensor fg_mask;      // H×W in {0,1}
    ImageBuffer bg;      // all-black in text_based mode
    std::vector<int> prompt_tokens;
    RelightMode mode = RelightMode::image_based;
};

using LatentGrid = Tensor; // [h, w, d] reals

// ---- latent codec: 4×4 space-to-depth + fixed orthonormal channel mix ----

inline constexpr int kPatch = 4;

namespace pipe_detail {

// Deterministic orthonormal dz×dz matrix (modified Gram-Schmidt over a seeded
// Gaussian matrix, with one re-orthogonalization pass).
inline Tensor orthonormal_basis(int dz, uint64_t seed) {
    Rng rng(seed);
    Tensor m({dz, dz});
    for (auto& x : m.v) x = rng.normal();
    for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i < dz; ++i) {
            for (int j = 0; j < i; ++j) {
                double dot = 0;
                for (int k = 0; k < dz; ++k) dot += m(i, k) * m(j, k);
                for (int k = 0; k < dz; ++k) m(i, k) -= dot * m(j, k);
            }
            double norm = 0;
            for (int k = 0; k < dz; ++k) norm += m(i, k) * m(i, k);
            norm = std::sqrt(norm);
            if (norm < 1e-12) throw StateError("orthonormal_basis: degenerate seed draw");
            for (int k = 0; k < dz; ++k) m(i, k) /= norm;
        }
    return m;
}

inline const Tensor& latent_rotation(int dz) {
    static Tensor cached;
    if (cached.shape.empty() || cached.dim(0) != dz)
        cached = orthonormal_basis(dz, 0xC0DEC0DEULL);
    return cached;
}

} // namespace pipe_detail

inline int latent_depth(int channels) { return kPatch * kPatch * channels; }

inline LatentGrid encode_latent(const ImageBuffer& img) {
    check_image(img, "encode_latent");
    int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (h % kPatch != 0 || w % kPatch != 0)
        throw DimensionError("encode_latent: dims must be divisible by 4");
    int lh = h / kPatch, lw = w / kPatch, dz = latent_depth(c);
    const Tensor& rot = pipe_detail::latent_rotation(dz);
    LatentGrid z({lh, lw, dz});
    std::vector<double> patch(static_cast<size_t>(dz));
    for (int r = 0; r < lh; ++r)
        for (int cc = 0; cc < lw; ++cc) {
            int i = 0;
            for (int pr = 0; pr < kPatch; ++pr)
                for (int pc = 0; pc < kPatch; ++pc)
                    for (int k = 0; k < c; ++k)
                        patch[static_cast<size_t>(i++)] = img(r * kPatch + pr, cc * kPatch + pc, k);
            for (int k = 0; k < dz; ++k) {
                double acc = 0;
                for (int j = 0; j < dz; ++j) acc += rot(k, j) * patch[static_cast<size_t>(j)];
                z(r, cc, k) = acc;
            }
        }
    return z;
}

inline ImageBuffer decode_latent(const LatentGrid& z, int channels = 3) {
    if (z.shape.size() != 3) throw DimensionError("decode_latent: expected h×w×d latent");
    int lh = z.dim(0), lw = z.dim(1), dz = z.dim(2);
    if (dz != latent_depth(channels))
        throw DimensionError("decode_latent: channel depth does not match the codec");
    const Tensor& rot = pipe_detail::latent_rotation(dz);
    ImageBuffer img = make_image(lh * kPatch, lw * kPatch, channels);
    std::vector<double> patch(static_cast<size_t>(dz));
    for (int r = 0; r < lh; ++r)
        for (int cc = 0; cc < lw; ++cc) {
            for (int j = 0; j < dz; ++j) {
                double acc = 0;
                for (int k = 0; k < dz; ++k) acc += rot(k, j) * z(r, cc, k); // transpose = inverse
                patch[static_cast<size_t>(j)] = acc;
            }
            int i = 0;
            for (int pr = 0; pr < kPatch; ++pr)
                for (int pc = 0; pc < kPatch; ++pc)
                    for (int k = 0; k < channels; ++k)
                        img(r * kPatch + pr, cc * kPatch + pc, k) = patch[static_cast<size_t>(i++)];
        }
    return img;
}

// ---- input assembly ----

inline LatentGrid assemble_input(const RelightInput& inp, const LatentGrid& noise) {
    check_image(inp.fg, "assemble_input");
    check_image(inp.bg, "assemble_input");
    int h = inp.fg.dim(0), w = inp.fg.dim(1);
    if (inp.bg.dim(0) != h || inp.bg.dim(1) != w || inp.fg_mask.dim(0) != h ||
        inp.fg_mask.dim(1) != w)
        throw DimensionError("assemble_input: fg/bg/mask resolution mismatch");
    ImageBuffer fg_masked = inp.fg;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (inp.fg_mask(r, c) < 0.5)
                for (int k = 0; k < inp.fg.dim(2); ++k) fg_masked(r, c, k) = 0.0;
    LatentGrid zf = encode_latent(fg_masked);
    LatentGrid zb = encode_latent(inp.bg);
    if (!noise.same_shape(zf)) throw DimensionError("assemble_input: noise latent shape mismatch");
    int lh = zf.dim(0), lw = zf.dim(1), dz = zf.dim(2);
    LatentGrid out({lh, lw, 3 * dz});
    for (int r = 0; r < lh; ++r)
        for (int c = 0; c < lw; ++c)
            for (int k = 0; k < dz; ++k) {
                out(r, c, k) = noise(r, c, k);
                out(r, c, dz + k) = zf(r, c, k);
                out(r, c, 2 * dz + k) = zb(r, c, k);
            }
    return out;
}

// ---- noise schedule ----

struct NoiseSchedule {
    int T = 0;
    std::vector<double> alpha_bar; // strictly decreasing, in (0,1)
};

inline NoiseSchedule make_cosine_schedule(int T) {
    if (T < 2) throw ParameterError("make_cosine_schedule: T must be >= 2");
    const double s = 0.008;
    auto f = [&](double u) {
        double a = std::cos((u + s) / (1.0 + s) * (std::acos(-1.0) / 2.0));
        return a * a;
    };
    NoiseSchedule sch;
    sch.T = T;
    sch.alpha_bar.resize(static_cast<size_t>(T));
    double f0 = f(0.0);
    for (int t = 0; t < T; ++t) {
        double ab = f(static_cast<double>(t + 1) / T) / f0;
        sch.alpha_bar[static_cast<size_t>(t)] = std::clamp(ab, 1e-5, 1.0 - 1e-12);
    }
    for (int t = 1; t < T; ++t)
        if (sch.alpha_bar[static_cast<size_t>(t)] >= sch.alpha_bar[static_cast<size_t>(t - 1)])
            throw StateError("make_cosine_schedule: alpha_bar not strictly decreasing");
    return sch;
}

// ---- parameters ----

struct PipelineVariant {
    bool use_adapter = true;    // light-query condensation + injection
    bool use_spectral = true;   // low-frequency enhancement of bg features
    bool masked_adapter = true; // direction decay maps on the adapter attentions
};

namespace pipe_detail {

inline Tensor he_conv(int kh, int kw, int cin, int cout, Rng& rng) {
    Tensor w({kh, kw, cin, cout});
    double scl = std::sqrt(2.0 / (kh * kw * cin));
    for (auto& x : w.v) x = scl * rng.normal();
    return w;
}

inline Tensor xavier(int rows, int cols, Rng& rng) {
    Tensor w({rows, cols});
    double scl = std::sqrt(1.0 / rows);
    for (auto& x : w.v) x = scl * rng.normal();
    return w;
}

inline void add_attn(ad::ParamStore& ps, const std::string& prefix, int q_dim, int kv_dim,
                     int attn_dim, int out_dim, Rng& rng, bool zero_out) {
    ps.add(prefix + ".wq", xavier(q_dim, attn_dim, rng));
    ps.add(prefix + ".wk", xavier(kv_dim, attn_dim, rng));
    ps.add(prefix + ".wv", xavier(kv_dim, attn_dim, rng));
    ps.add(prefix + ".wo", zero_out ? Tensor::zeros({attn_dim, out_dim})
                                    : xavier(attn_dim, out_dim, rng));
}

inline void add_block(ad::ParamStore& ps, const std::string& name, int cin, int cout, int dc,
                      Rng& rng) {
    ps.add("pipe." + name + ".w", he_conv(3, 3, cin, cout, rng));
    ps.add("pipe." + name + ".b", Tensor::zeros({cout}));
    ps.add("pipe." + name + ".temb.w", xavier(dc, cout, rng));
    // token cross attention; zero output projection so every block starts as
    // a pure convolution
    add_attn(ps, "pipe." + name + ".xattn", cout, dc, dc, cout, rng, true);
}

} // namespace pipe_detail

// Registers every denoiser/condition parameter under "pipe.*". d = base conv
// width = condition embedding width.
inline void init_pipeline_params(ad::ParamStore& ps, const Config& cfg, uint64_t seed) {
    using namespace pipe_detail;
    if (cfg.d < cfg.heads || cfg.d % cfg.heads != 0)
        throw ParameterError("init_pipeline_params: heads must divide d");
    Rng rng = Rng::derive(seed, 0x717e);
    int d = cfg.d, dz = latent_depth(3);

    Tensor tok({vocab::kSize, d});
    for (auto& x : tok.v) x = 0.3 * rng.normal();
    ps.add("pipe.tok_emb", tok);
    ps.add("pipe.queries", LightQueryBank::init(cfg.n_q, d, rng));

    // background feature encoder: image → latent-resolution feature grid
    ps.add("pipe.bgenc.conv0.w", he_conv(3, 3, 3, d, rng));
    ps.add("pipe.bgenc.conv0.b", Tensor::zeros({d}));
    ps.add("pipe.bgenc.conv1.w", he_conv(3, 3, d, d, rng));
    ps.add("pipe.bgenc.conv1.b", Tensor::zeros({d}));
    ps.add("pipe.bgenc.conv2.w", he_conv(3, 3, d, d, rng));
    ps.add("pipe.bgenc.conv2.b", Tensor::zeros({d}));

    // spectral enhancement: 1×1 mix over stacked re/im channels
    ps.add("pipe.spec.w", he_conv(1, 1, 2 * d, 2 * d, rng));
    ps.add("pipe.spec.b", Tensor::zeros({2 * d}));

    add_attn(ps, "pipe.cond", d, d, d, d, rng, false);

    ps.add("pipe.stem.w", he_conv(3, 3, 3 * dz, d, rng));
    ps.add("pipe.stem.b", Tensor::zeros({d}));
    add_block(ps, "down1", d, 2 * d, d, rng);
    add_block(ps, "down2", 2 * d, 2 * d, d, rng);
    add_block(ps, "mid", 2 * d, 2 * d, d, rng);
    add_block(ps, "up1", 4 * d, 2 * d, d, rng);
    add_block(ps, "up2", 3 * d, d, d, rng);
    for (const char* site : {"mid", "up1", "up2"}) {
        int width = std::string(site) == "up2" ? d : 2 * d;
        add_attn(ps, std::string("pipe.") + site + ".inj", width, d, d, width, rng, true);
    }
    ps.add("pipe.out.w", Tensor::zeros({3, 3, d, dz}));
    ps.add("pipe.out.b", Tensor::zeros({dz}));
    // long skip from the assembled input to the prediction; lets the net pick
    // up the linear-in-z_t component of eps immediately
    ps.add("pipe.skip.w", Tensor::zeros({1, 1, 3 * dz, dz}));
}

// ---- conditions ----

struct ConditionSet {
    ad::Var tokens = nullptr; // [n_tok, d]
    ad::Var light = nullptr;  // [4·n_q, d] condensed bank; null when absent
};

inline Tensor sinusoidal_embedding(int t_step, int dim) {
    if (dim < 2 || dim % 2 != 0) throw ParameterError("sinusoidal_embedding: dim must be even >= 2");
    Tensor e({1, dim});
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
        e(0, i) = std::sin(t_step * freq);
        e(0, half + i) = std::cos(t_step * freq);
    }
    return e;
}

// Max-pool a {0,1} mask down to bh×bw cells.
inline Tensor pool_mask(const Tensor& mask, int bh, int bw) {
    int h = mask.dim(0), w = mask.dim(1);
    Tensor out({bh, bw});
    for (int r = 0; r < bh; ++r)
        for (int c = 0; c < bw; ++c) {
            int r0 = r * h / bh, r1 = std::max(r0 + 1, (r + 1) * h / bh);
            int c0 = c * w / bw, c1 = std::max(c0 + 1, (c + 1) * w / bw);
            double m = 0;
            for (int rr = r0; rr < r1 && rr < h; ++rr)
                for (int cc = c0; cc < c1 && cc < w; ++cc) m = std::max(m, mask(rr, cc));
            out(r, c) = m;
        }
    return out;
}

namespace pipe_detail {

inline AttnVars attn_vars(ad::Tape& t, ad::ParamStore& ps, const std::string& prefix) {
    AttnVars p;
    p.wq = t.param(ps.at(prefix + ".wq"));
    p.wk = t.param(ps.at(prefix + ".wk"));
    p.wv = t.param(ps.at(prefix + ".wv"));
    p.wo = t.param(ps.at(prefix + ".wo"));
    return p;
}

inline ad::Var conv_layer(ad::Tape& t, ad::ParamStore& ps, ad::Var x, const std::string& name,
                          int stride) {
    return ad::conv2d(t, x, t.param(ps.at(name + ".w")), t.param(ps.at(name + ".b")), stride, 1);
}

} // namespace pipe_detail

// Background features at latent resolution, optionally low-frequency enhanced
// in the spectral domain before light condensation.
inline ad::Var bg_features(ad::Tape& t, ad::ParamStore& ps, const ImageBuffer& bg,
                           const Config& cfg, const PipelineVariant& var) {
    using namespace pipe_detail;
    ad::Var x = t.constant(bg);
    x = ad::relu(t, conv_layer(t, ps, x, "pipe.bgenc.conv0", 2));
    x = ad::relu(t, conv_layer(t, ps, x, "pipe.bgenc.conv1", 2));
    x = conv_layer(t, ps, x, "pipe.bgenc.conv2", 1);
    if (var.use_spectral) {
        SpectralFilter filt = gaussian_lowpass_map(x->val.dim(0), x->val.dim(1), cfg.sigma);
        ad::Var spec = ad::fft_filter(t, x, filt);
        spec = ad::relu(t, ad::conv2d(t, spec, t.param(ps.at("pipe.spec.w")),
                                      t.param(ps.at("pipe.spec.b")), 1, 0));
        x = ad::add(t, x, ad::ifft_real(t, spec));
    }
    return x;
}

// drop = condition dropout draw (training) — nulls the prompt and removes the
// light bank so classifier-free guidance has an unconditional mode.
inline ConditionSet build_conditions(ad::Tape& t, ad::ParamStore& ps, const RelightInput& inp,
                                     const Config& cfg, const PipelineVariant& var, bool drop) {
    ConditionSet cond;
    ad::Var tok_emb = t.param(ps.at("pipe.tok_emb"));
    std::vector<int> ids = drop ? std::vector<int>{vocab::kNull} : inp.prompt_tokens;
    if (ids.empty()) throw ParameterError("build_conditions: empty prompt");
    for (int id : ids)
        if (id < 0 || id >= vocab::kSize) throw ParameterError("build_conditions: token out of range");
    cond.tokens = ad::gather_rows(t, tok_emb, ids);

    bool want_light = var.use_adapter && !drop && inp.mode != RelightMode::text_based;
    if (want_light) {
        ad::Var feat = bg_features(t, ps, inp.bg, cfg, var);
        cond.light = condense_light(t, feat, t.param(ps.at("pipe.queries")), cfg.n_q,
                                    pipe_detail::attn_vars(t, ps, "pipe.cond"), cfg.heads,
                                    cfg.mask_mode, var.masked_adapter);
    }
    return cond;
}

// ---- denoiser ----

namespace pipe_detail {

inline ad::Var token_xattn(ad::Tape& t, ad::ParamStore& ps, ad::Var x, ad::Var tokens,
                           const std::string& prefix, int heads, MaskApply apply) {
    int h = x->val.dim(0), w = x->val.dim(1), c = x->val.dim(2);
    AttnVars p = attn_vars(t, ps, prefix);
    ad::Var q = ad::matmul(t, ad::reshape(t, x, {h * w, c}), p.wq);
    ad::Var k = ad::matmul(t, tokens, p.wk);
    ad::Var v = ad::matmul(t, tokens, p.wv);
    Tensor ones = Tensor::full({h * w, tokens->val.dim(0)}, 1.0);
    ad::Var attn = detail::masked_attention(t, q, k, v, ones, heads, apply, nullptr);
    ad::Var upd = ad::reshape(t, ad::matmul(t, attn, p.wo), {h, w, c});
    return ad::add(t, x, upd);
}

struct BlockIo {
    ad::Var x;
    int stride = 1; // stride actually used (down blocks degrade to 1 on tiny grids)
};

inline BlockIo block(ad::Tape& t, ad::ParamStore& ps, ad::Var x, const std::string& name,
                     int t_step, const ConditionSet& cond, const Config& cfg,
                     const PipelineVariant& var, const Tensor& fg_mask_img, bool down,
                     bool inject) {
    BlockIo io;
    io.stride = down && x->val.dim(0) > 1 && x->val.dim(1) > 1 ? 2 : 1;
    ad::Var y = ad::relu(t, conv_layer(t, ps, x, "pipe." + name, io.stride));
    int cout = y->val.dim(2);
    ad::Var temb = t.constant(sinusoidal_embedding(t_step, cfg.d));
    ad::Var tproj = ad::matmul(t, temb, t.param(ps.at("pipe." + name + ".temb.w")));
    y = ad::channel_bias(t, y, ad::reshape(t, tproj, {cout}));
    y = token_xattn(t, ps, y, cond.tokens, "pipe." + name + ".xattn", cfg.heads, cfg.mask_mode);
    if (inject && cond.light != nullptr) {
        Tensor m = pool_mask(fg_mask_img, y->val.dim(0), y->val.dim(1));
        y = inject_light(t, y, cond.light, cfg.n_q, m,
                         attn_vars(t, ps, "pipe." + name + ".inj"), cfg.heads, cfg.mask_mode,
                         var.masked_adapter);
    }
    io.x = y;
    return io;
}

} // namespace pipe_detail

// z: assembled [lh, lw, 3·dz] latent; fg_mask_img at image resolution.
// Returns the predicted noise [lh, lw, dz].
inline ad::Var denoiser_forward(ad::Tape& t, ad::ParamStore& ps, ad::Var z, int t_step,
                                const ConditionSet& cond, const Tensor& fg_mask_img,
                                const Config& cfg, const PipelineVariant& var) {
    using namespace pipe_detail;
    if (t_step < 0 || t_step >= cfg.T) throw ParameterError("denoiser_forward: t out of range");
    ad::Var x0 = ad::relu(t, conv_layer(t, ps, z, "pipe.stem", 1));
    BlockIo d1 = block(t, ps, x0, "down1", t_step, cond, cfg, var, fg_mask_img, true, false);
    BlockIo d2 = block(t, ps, d1.x, "down2", t_step, cond, cfg, var, fg_mask_img, true, false);
    BlockIo m = block(t, ps, d2.x, "mid", t_step, cond, cfg, var, fg_mask_img, false, true);
    ad::Var u = m.x;
    if (d2.stride == 2) u = ad::upsample_nearest2(t, u);
    BlockIo u1 = block(t, ps, ad::concat_channels(t, u, d1.x), "up1", t_step, cond, cfg, var,
                       fg_mask_img, false, true);
    u = u1.x;
    if (d1.stride == 2) u = ad::upsample_nearest2(t, u);
    BlockIo u2 = block(t, ps, ad::concat_channels(t, u, x0), "up2", t_step, cond, cfg, var,
                       fg_mask_img, false, true);
    ad::Var head =
        ad::conv2d(t, u2.x, t.param(ps.at("pipe.out.w")), t.param(ps.at("pipe.out.b")), 1, 1);
    ad::Var skip = ad::conv2d(t, z, t.param(ps.at("pipe.skip.w")),
                              t.constant(Tensor::zeros({latent_depth(3)})), 1, 0);
    return ad::add(t, head, skip);
}

// ---- training ----

// Single-sample ε-prediction loss with t, ε, and the dropout decision fixed by
// the caller (deterministic graph; the gradient check drives this directly).
inline ad::Var denoise_loss(ad::Tape& t, ad::ParamStore& ps, const RelightInput& inp,
                            const ImageBuffer& target, int t_step, const Tensor& eps, bool drop,
                            const NoiseSchedule& sch, const Config& cfg,
                            const PipelineVariant& var) {
    LatentGrid z0 = encode_latent(target);
    if (!eps.same_shape(z0)) throw DimensionError("denoise_loss: eps shape mismatch");
    double ab = sch.alpha_bar[static_cast<size_t>(t_step)];
    LatentGrid zt = z0;
    for (size_t i = 0; i < zt.v.size(); ++i)
        zt.v[i] = std::sqrt(ab) * z0.v[i] + std::sqrt(1.0 - ab) * eps.v[i];
    LatentGrid stacked = assemble_input(inp, zt);
    ConditionSet cond = build_conditions(t, ps, inp, cfg, var, drop);
    ad::Var pred = denoiser_forward(t, ps, t.constant(stacked), t_step, cond, inp.fg_mask, cfg, var);
    return ad::mse(t, pred, eps);
}

inline RelightInput sample_to_input(const RelightSample& s, RelightMode mode) {
    RelightInput inp;
    inp.fg = s.fg;
    inp.fg_mask = s.fg_mask;
    inp.mode = mode == RelightMode::both ? RelightMode::image_based : mode;
    if (inp.mode == RelightMode::image_based) {
        inp.bg = s.bg;
        inp.prompt_tokens = {vocab::kBlend};
    } else {
        inp.bg = make_image(s.bg.dim(0), s.bg.dim(1), 3, 0.0);
        inp.prompt_tokens = s.prompt_tokens;
    }
    return inp;
}

inline constexpr double kCondDropRate = 0.1;
// Bound on clean-latent coordinates during sampling: an orthonormal rotation
// of a 4x4x3 patch with pixel values in [0,1] has norm at most sqrt(48) < 7.
inline constexpr double kLatentClip = 7.0;

// One optimizer step over a batch. step is 1-based and also seeds the RNG
// streams, so a run is fully determined by (seed, data, step sequence).
inline double train_step(const std::vector<RelightSample>& batch, ad::ParamStore& ps,
                         const NoiseSchedule& sch, const Config& cfg, const PipelineVariant& var,
                         RelightMode mode, uint64_t seed, int64_t step) {
    if (batch.empty()) throw ParameterError("train_step: empty batch");
    Rng rng = Rng::derive(seed, 0xdea10000ULL + static_cast<uint64_t>(step));
    ps.zero_grad();
    double total = 0;
    double inv_b = 1.0 / static_cast<double>(batch.size());
    for (size_t bi = 0; bi < batch.size(); ++bi) {
        RelightMode m = mode;
        if (mode == RelightMode::both)
            m = (bi % 2 == 0) ? RelightMode::image_based : RelightMode::text_based;
        RelightInput inp = sample_to_input(batch[bi], m);
        int t_step = rng.index(cfg.T);
        bool drop = rng.uniform() < kCondDropRate;
        LatentGrid z0 = encode_latent(batch[bi].target);
        Tensor eps = Tensor::zeros(z0.shape);
        for (auto& x : eps.v) x = rng.normal();
        ad::Tape tape;
        ad::Var loss = denoise_loss(tape, ps, inp, batch[bi].target, t_step, eps, drop, sch, cfg, var);
        ad::Var scaled = ad::scale(tape, loss, inv_b);
        tape.backward(scaled);
        total += loss->val.v[0];
    }
    ps.clip_grad_norm(ad::kGradClipNorm);
    ps.adam_step(cfg.lr, step);
    return total * inv_b;
}

// ---- sampling ----

// Deterministic DDIM-style loop with classifier-free guidance. Returns the
// decoded image; in image_based mode (with compositing on) background pixels
// are taken verbatim from the input background.
inline ImageBuffer sample(const RelightInput& inp, ad::ParamStore& ps, const NoiseSchedule& sch,
                          const Config& cfg, const PipelineVariant& var, int steps,
                          double guidance, uint64_t seed) {
    if (steps < 1 || steps > sch.T) throw ParameterError("sample: steps must be in [1, T]");
    if (!ps.has("pipe.stem.w")) throw StateError("sample: pipeline parameters not loaded");
    int h = inp.fg.dim(0), w = inp.fg.dim(1);
    int lh = h / kPatch, lw = w / kPatch, dz = latent_depth(3);

    Rng rng = Rng::derive(seed, 0x5a3317ULL);
    LatentGrid zt({lh, lw, dz});
    for (auto& x : zt.v) x = rng.normal();

    auto predict = [&](int t_step, bool drop) {
        ad::Tape tape;
        ConditionSet cond = build_conditions(tape, ps, inp, cfg, var, drop);
        LatentGrid stacked = assemble_input(inp, zt);
        ad::Var pred = denoiser_forward(tape, ps, tape.constant(stacked), t_step, cond,
                                        inp.fg_mask, cfg, var);
        return pred->val;
    };

    for (int i = steps; i >= 1; --i) {
        int t_cur = i * sch.T / steps - 1;
        int t_prev = (i - 1) * sch.T / steps - 1;
        double ab = sch.alpha_bar[static_cast<size_t>(t_cur)];
        double ab_prev = t_prev < 0 ? 1.0 : sch.alpha_bar[static_cast<size_t>(t_prev)];
        Tensor eps_hat = predict(t_cur, false);
        if (guidance != 1.0) {
            Tensor uncond = predict(t_cur, true);
            for (size_t j = 0; j < eps_hat.v.size(); ++j)
                eps_hat.v[j] = uncond.v[j] + guidance * (eps_hat.v[j] - uncond.v[j]);
        }
        for (size_t j = 0; j < zt.v.size(); ++j) {
            double x0 = (zt.v[j] - std::sqrt(1.0 - ab) * eps_hat.v[j]) / std::sqrt(ab);
            // Any decodable latent lies within the rotated image cube, so its
            // coordinates are bounded by the cube diagonal. Clamping the clean
            // estimate keeps guided extrapolation from drifting into regions
            // whose attention logits overflow the masked softmax.
            x0 = std::clamp(x0, -kLatentClip, kLatentClip);
            zt.v[j] = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_hat.v[j];
        }
    }

    ImageBuffer out = decode_latent(zt);
    for (auto& x : out.v) x = clamp01(x);
    if (inp.mode == RelightMode::image_based && cfg.composite) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                if (inp.fg_mask(r, c) < 0.5)
                    for (int k = 0; k < 3; ++k) out(r, c, k) = inp.bg(r, c, k);
    }
    return out;
}

} // namespace relight
