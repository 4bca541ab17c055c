#pragma once

// Position-Guided Light Adapter: directional decay maps, light-query
// condensation over background features, and masked injection into foreground
// positions. Both attentions are built on the autodiff tape so the training
// loop backpropagates through them.

#include <cmath>
#include <string>
#include <vector>

#include "relight/autodiff.hpp"
#include "relight/errors.hpp"
#include "relight/rng.hpp"
#include "relight/tensor.hpp"

namespace relight {

enum class Direction { left = 0, right = 1, top = 2, down = 3 };
inline constexpr int kNumDirections = 4;

inline const char* direction_name(Direction d) {
    switch (d) {
        case Direction::left: return "left";
        case Direction::right: return "right";
        case Direction::top: return "top";
        default: return "down";
    }
}

// Linear 1→0 falloff away from the source edge; a singleton axis is all-ones.
inline Tensor make_decay_map(Direction dir, int h, int w) {
    if (h < 1 || w < 1) throw DimensionError("make_decay_map: dims must be >= 1");
    Tensor m({h, w});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double x = (w > 1) ? static_cast<double>(c) / (w - 1) : 0.0;
            double y = (h > 1) ? static_cast<double>(r) / (h - 1) : 0.0;
            switch (dir) {
                case Direction::left: m(r, c) = 1.0 - x; break;
                case Direction::right: m(r, c) = (w > 1) ? x : 1.0; break;
                case Direction::top: m(r, c) = 1.0 - y; break;
                case Direction::down: m(r, c) = (h > 1) ? y : 1.0; break;
            }
        }
    return m;
}

// 4 direction groups × n_q learnable query vectors of width dim, stored as a
// [4·n_q, dim] matrix with rows grouped left, right, top, down.
struct LightQueryBank {
    int n_q = 0;
    int dim = 0;

    int rows() const { return kNumDirections * n_q; }
    Direction row_direction(int row) const { return static_cast<Direction>(row / n_q); }

    static Tensor init(int n_q, int dim, Rng& rng, double scl = 0.5) {
        Tensor q({kNumDirections * n_q, dim});
        for (auto& x : q.v) x = scl * rng.normal();
        return q;
    }
};

// Whether decay maps scale the softmax output (then renormalize) or bias the
// logits before softmax.
enum class MaskApply { post_softmax, logit_bias };

struct AttnVars {
    ad::Var wq = nullptr; // [in_dim_q, d_attn]
    ad::Var wk = nullptr; // [in_dim_kv, d_attn]
    ad::Var wv = nullptr; // [in_dim_kv, d_attn]
    ad::Var wo = nullptr; // [d_attn, out_dim]
};

namespace detail {

// Shared masked-attention core. q: [nq, d], k/v: [nk, d]. mask entries are
// multiplicative coefficients on attention weights.
inline ad::Var masked_attention(ad::Tape& t, ad::Var q, ad::Var k, ad::Var v, const Tensor& mask,
                                int heads, MaskApply apply, Tensor* attn_out) {
    int d = q->val.dim(1);
    if (d % heads != 0) throw ParameterError("masked_attention: heads must divide width");
    int dh = d / heads;
    ad::Var merged = nullptr;
    for (int hd = 0; hd < heads; ++hd) {
        ad::Var qh = heads == 1 ? q : ad::slice_cols(t, q, hd * dh, (hd + 1) * dh);
        ad::Var kh = heads == 1 ? k : ad::slice_cols(t, k, hd * dh, (hd + 1) * dh);
        ad::Var vh = heads == 1 ? v : ad::slice_cols(t, v, hd * dh, (hd + 1) * dh);
        ad::Var logits = ad::scale(t, ad::matmul(t, qh, ad::transpose(t, kh)), 1.0 / std::sqrt(dh));
        ad::Var weights;
        if (apply == MaskApply::post_softmax) {
            weights = ad::masked_softmax_rows(t, logits, mask);
        } else {
            Tensor bias = mask;
            for (auto& x : bias.v) x = std::log(std::max(x, 1e-30));
            weights = ad::softmax_rows(t, ad::add_const(t, logits, bias));
        }
        if (attn_out && hd == 0) *attn_out = weights->val;
        ad::Var oh = ad::matmul(t, weights, vh);
        merged = (merged == nullptr) ? oh : ad::concat_cols(t, merged, oh);
    }
    return merged;
}

} // namespace detail

// Cross attention condensing background light into the query bank. Keys and
// values are the concatenation of the queries themselves and the flattened
// background features; decay maps reweight only the background columns, so
// query-to-query interaction stays unmodified. Residual around the output
// projection. bg_feat: [h, w, D] Var (already low-frequency enhanced when the
// spectral filter is on); queries: [4·n_q, D].
inline ad::Var condense_light(ad::Tape& t, ad::Var bg_feat, ad::Var queries, int n_q,
                              const AttnVars& p, int heads, MaskApply apply, bool masked = true,
                              Tensor* attn_out = nullptr) {
    if (bg_feat->val.shape.size() != 3) throw DimensionError("condense_light: bg_feat must be HWC");
    int h = bg_feat->val.dim(0), w = bg_feat->val.dim(1), d = bg_feat->val.dim(2);
    if (queries->val.dim(1) != d) throw DimensionError("condense_light: query width mismatch");
    if (queries->val.dim(0) != kNumDirections * n_q)
        throw DimensionError("condense_light: expected 4·n_q query rows");
    int nq_total = kNumDirections * n_q;
    int nk = nq_total + h * w;

    ad::Var bg_flat = ad::reshape(t, bg_feat, {h * w, d});
    ad::Var kv_src = ad::concat_rows(t, queries, bg_flat);
    ad::Var q = ad::matmul(t, queries, p.wq);
    ad::Var k = ad::matmul(t, kv_src, p.wk);
    ad::Var v = ad::matmul(t, kv_src, p.wv);

    Tensor mask = Tensor::full({nq_total, nk}, 1.0);
    if (masked) {
        for (int dir = 0; dir < kNumDirections; ++dir) {
            Tensor decay = make_decay_map(static_cast<Direction>(dir), h, w);
            for (int row = dir * n_q; row < (dir + 1) * n_q; ++row)
                for (int j = 0; j < h * w; ++j) mask(row, nq_total + j) = decay.v[static_cast<size_t>(j)];
        }
    }

    ad::Var attn = detail::masked_attention(t, q, k, v, mask, heads, apply, attn_out);
    return ad::add(t, queries, ad::matmul(t, attn, p.wo));
}

// Foreground latent positions query the condensed light bank. Each position's
// weights toward a direction group are scaled by the decay profile evaluated
// at its normalized coordinates; background positions pass through untouched.
// feat: [h, w, C]; bank: [4·n_q, D]; fg_mask: h×w in {0,1}.
inline ad::Var inject_light(ad::Tape& t, ad::Var feat, ad::Var bank, int n_q,
                            const Tensor& fg_mask, const AttnVars& p, int heads, MaskApply apply,
                            bool masked = true, Tensor* attn_out = nullptr) {
    if (feat->val.shape.size() != 3) throw DimensionError("inject_light: feat must be HWC");
    int h = feat->val.dim(0), w = feat->val.dim(1), c = feat->val.dim(2);
    if (fg_mask.shape.size() != 2 || fg_mask.dim(0) != h || fg_mask.dim(1) != w)
        throw DimensionError("inject_light: mask dims do not match feature grid");
    int nq_total = kNumDirections * n_q;
    if (bank->val.dim(0) != nq_total) throw DimensionError("inject_light: bank rows != 4·n_q");

    std::vector<int> fg_idx;
    for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc)
            if (fg_mask(r, cc) > 0.5) fg_idx.push_back(r * w + cc);
    if (fg_idx.empty()) return feat; // all background: exact identity

    ad::Var flat = ad::reshape(t, feat, {h * w, c});
    ad::Var q_in = ad::gather_rows(t, flat, fg_idx);
    ad::Var q = ad::matmul(t, q_in, p.wq);
    ad::Var k = ad::matmul(t, bank, p.wk);
    ad::Var v = ad::matmul(t, bank, p.wv);

    Tensor mask = Tensor::full({static_cast<int>(fg_idx.size()), nq_total}, 1.0);
    if (masked) {
        for (size_t i = 0; i < fg_idx.size(); ++i) {
            int r = fg_idx[i] / w, cc = fg_idx[i] % w;
            double x = (w > 1) ? static_cast<double>(cc) / (w - 1) : 0.5;
            double y = (h > 1) ? static_cast<double>(r) / (h - 1) : 0.5;
            double factor[kNumDirections] = {1.0 - x, x, 1.0 - y, y};
            for (int j = 0; j < nq_total; ++j) mask(static_cast<int>(i), j) = factor[j / n_q];
        }
    }

    ad::Var attn = detail::masked_attention(t, q, k, v, mask, heads, apply, attn_out);
    ad::Var upd = ad::matmul(t, attn, p.wo);
    ad::Var out_flat = ad::add_rows_at(t, flat, upd, fg_idx);
    return ad::reshape(t, out_flat, {h, w, c});
}

// Plain-inference wrapper returning the renormalized weights of head 0 for
// diagnostics (Fig.-4-style heatmaps via the CLI).
struct AttentionWeights {
    Tensor values; // [n_queries, n_keys], rows sum to 1
};

} // namespace relight
