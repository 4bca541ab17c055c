#pragma once

// Reverse-mode tape over Tensor. Each op records a closure holding its own
// hand-derived backward; a forward pass builds a fresh Tape, backward() walks
// it in reverse creation order. Parameters live outside the tape in a
// ParamStore so they survive across steps.

#include <cmath>
#include <deque>
#include <limits>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "relight/errors.hpp"
#include "relight/fft.hpp"
#include "relight/spectral.hpp"
#include "relight/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace relight::ad {

// Global gradient-norm ceiling applied before every optimizer step; keeps
// masked-attention logits from blowing up when a large learning rate meets
// an unlucky batch.
inline constexpr double kGradClipNorm = 1.0;

struct Node {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    std::function<void()> back; // empty for constants

    Tensor& g() {
        if (grad.shape.empty()) grad = Tensor::zeros(val.shape);
        return grad;
    }
};

using Var = Node*;

struct Param {
    Tensor value;
    Tensor grad;
    Tensor m;    // Adam first moment
    Tensor vmom; // Adam second moment
};

class ParamStore {
  public:
    Param& add(const std::string& name, Tensor init) {
        auto [it, fresh] = entries_.emplace(name, Param{});
        if (!fresh) throw ParameterError("ParamStore: duplicate parameter " + name);
        it->second.value = std::move(init);
        it->second.grad = Tensor::zeros(it->second.value.shape);
        it->second.m = Tensor::zeros(it->second.value.shape);
        it->second.vmom = Tensor::zeros(it->second.value.shape);
        return it->second;
    }
    Param& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw StateError("ParamStore: missing parameter " + name);
        return it->second;
    }
    const Param& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw StateError("ParamStore: missing parameter " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    // ordered map: iteration order is deterministic
    std::map<std::string, Param>& entries() { return entries_; }
    const std::map<std::string, Param>& entries() const { return entries_; }

    void zero_grad() {
        for (auto& [name, p] : entries_) p.grad.fill(0.0);
    }

    // Rescales all gradients so their global L2 norm is at most max_norm.
    // Returns the pre-clip norm so callers can monitor training stability.
    double clip_grad_norm(double max_norm) {
        double sq = 0;
        for (auto& [name, p] : entries_)
            for (double g : p.grad.v) sq += g * g;
        double norm = std::sqrt(sq);
        if (norm > max_norm && norm > 0) {
            double s = max_norm / norm;
            for (auto& [name, p] : entries_)
                for (auto& g : p.grad.v) g *= s;
        }
        return norm;
    }

    void adam_step(double lr, int64_t t, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8) {
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (auto& [name, p] : entries_) {
            for (size_t i = 0; i < p.value.v.size(); ++i) {
                double g = p.grad.v[i];
                p.m.v[i] = beta1 * p.m.v[i] + (1.0 - beta1) * g;
                p.vmom.v[i] = beta2 * p.vmom.v[i] + (1.0 - beta2) * g * g;
                double mhat = p.m.v[i] / bc1;
                double vhat = p.vmom.v[i] / bc2;
                p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

  private:
    std::map<std::string, Param> entries_;
};

class Tape {
  public:
    Var constant(Tensor t) {
        nodes_.emplace_back();
        nodes_.back().val = std::move(t);
        return &nodes_.back();
    }

    Var leaf(Tensor t) {
        Var n = constant(std::move(t));
        n->needs_grad = true;
        return n;
    }

    // Leaf backed by a stored parameter; backward adds into the store's grad.
    Var param(Param& p) {
        Var n = leaf(p.value);
        Param* pp = &p;
        n->back = [n, pp]() {
            for (size_t i = 0; i < pp->grad.v.size(); ++i) pp->grad.v[i] += n->g().v[i];
        };
        return n;
    }

    Var make(Tensor val, bool needs_grad, std::function<void()> back) {
        nodes_.emplace_back();
        Node& n = nodes_.back();
        n.val = std::move(val);
        n.needs_grad = needs_grad;
        if (needs_grad) n.back = std::move(back);
        return &n;
    }

    void backward(Var root) {
        if (root->val.numel() != 1) throw ParameterError("backward: root must be scalar");
        root->g().v[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
            if (it->needs_grad && it->back && !it->grad.shape.empty()) it->back();
    }

  private:
    std::deque<Node> nodes_;
};

// ---- elementwise ----

inline Var add(Tape& t, Var a, Var b) {
    if (!a->val.same_shape(b->val)) throw DimensionError("add: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->val.v[i];
    Var n = t.make(std::move(out), a->needs_grad || b->needs_grad, nullptr);
    n->back = [n, a, b]() {
        if (a->needs_grad)
            for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += n->grad.v[i];
        if (b->needs_grad)
            for (size_t i = 0; i < b->g().v.size(); ++i) b->g().v[i] += n->grad.v[i];
    };
    return n;
}

inline Var sub(Tape& t, Var a, Var b) {
    if (!a->val.same_shape(b->val)) throw DimensionError("sub: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b->val.v[i];
    Var n = t.make(std::move(out), a->needs_grad || b->needs_grad, nullptr);
    n->back = [n, a, b]() {
        if (a->needs_grad)
            for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += n->grad.v[i];
        if (b->needs_grad)
            for (size_t i = 0; i < b->g().v.size(); ++i) b->g().v[i] -= n->grad.v[i];
    };
    return n;
}

inline Var mul(Tape& t, Var a, Var b) {
    if (!a->val.same_shape(b->val)) throw DimensionError("mul: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b->val.v[i];
    Var n = t.make(std::move(out), a->needs_grad || b->needs_grad, nullptr);
    n->back = [n, a, b]() {
        if (a->needs_grad)
            for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += n->grad.v[i] * b->val.v[i];
        if (b->needs_grad)
            for (size_t i = 0; i < b->g().v.size(); ++i) b->g().v[i] += n->grad.v[i] * a->val.v[i];
    };
    return n;
}

inline Var scale(Tape& t, Var a, double c) {
    Tensor out = a->val;
    for (auto& x : out.v) x *= c;
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a, c]() {
        for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += c * n->grad.v[i];
    };
    return n;
}

inline Var add_scalar(Tape& t, Var a, double c) {
    Tensor out = a->val;
    for (auto& x : out.v) x += c;
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a]() {
        for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += n->grad.v[i];
    };
    return n;
}

inline Var add_const(Tape& t, Var a, const Tensor& c) {
    if (!a->val.same_shape(c)) throw DimensionError("add_const: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += c.v[i];
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a]() {
        for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += n->grad.v[i];
    };
    return n;
}

inline Var mul_const(Tape& t, Var a, const Tensor& c) {
    if (!a->val.same_shape(c)) throw DimensionError("mul_const: shape mismatch");
    Tensor out = a->val;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= c.v[i];
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a, c]() {
        for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += n->grad.v[i] * c.v[i];
    };
    return n;
}

inline Var relu(Tape& t, Var a) {
    Tensor out = a->val;
    for (auto& x : out.v) x = x > 0.0 ? x : 0.0;
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a]() {
        for (size_t i = 0; i < a->g().v.size(); ++i)
            if (a->val.v[i] > 0.0) a->g().v[i] += n->grad.v[i];
    };
    return n;
}

inline Var reshape(Tape& t, Var a, std::vector<int> shape) {
    if (Tensor::numel_of(shape) != a->val.numel()) throw DimensionError("reshape: numel mismatch");
    Tensor out(std::move(shape), a->val.v);
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a]() {
        for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += n->grad.v[i];
    };
    return n;
}

// ---- matrix ops ----

inline Var matmul(Tape& t, Var a, Var b) {
    if (a->val.shape.size() != 2 || b->val.shape.size() != 2 || a->val.dim(1) != b->val.dim(0))
        throw DimensionError("matmul: incompatible shapes");
    int m = a->val.dim(0), k = a->val.dim(1), nn = b->val.dim(1);
    Tensor out({m, nn});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            double av = a->val(i, p);
            if (av == 0.0) continue;
            for (int j = 0; j < nn; ++j) out(i, j) += av * b->val(p, j);
        }
    Var n = t.make(std::move(out), a->needs_grad || b->needs_grad, nullptr);
    n->back = [n, a, b, m, k, nn]() {
        if (a->needs_grad) {
            Tensor& ga = a->g();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) {
                    double gv = n->grad(i, j);
                    if (gv == 0.0) continue;
                    for (int p = 0; p < k; ++p) ga(i, p) += gv * b->val(p, j);
                }
        }
        if (b->needs_grad) {
            Tensor& gb = b->g();
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double av = a->val(i, p);
                    if (av == 0.0) continue;
                    for (int j = 0; j < nn; ++j) gb(p, j) += av * n->grad(i, j);
                }
        }
    };
    return n;
}

inline Var transpose(Tape& t, Var a) {
    if (a->val.shape.size() != 2) throw DimensionError("transpose: expected 2-D");
    int m = a->val.dim(0), nn = a->val.dim(1);
    Tensor out({nn, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < nn; ++j) out(j, i) = a->val(i, j);
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a, m, nn]() {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < nn; ++j) a->g()(i, j) += n->grad(j, i);
    };
    return n;
}

// rows of a 2-D matrix plus a length-n bias
inline Var bias_rows(Tape& t, Var a, Var b) {
    if (a->val.shape.size() != 2 || b->val.dim(0) != a->val.dim(1))
        throw DimensionError("bias_rows: shape mismatch");
    int m = a->val.dim(0), nn = a->val.dim(1);
    Tensor out = a->val;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < nn; ++j) out(i, j) += b->val(j);
    Var n = t.make(std::move(out), a->needs_grad || b->needs_grad, nullptr);
    n->back = [n, a, b, m, nn]() {
        if (a->needs_grad)
            for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += n->grad.v[i];
        if (b->needs_grad)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < nn; ++j) b->g()(j) += n->grad(i, j);
    };
    return n;
}

inline Var softmax_rows(Tape& t, Var a) {
    if (a->val.shape.size() != 2) throw DimensionError("softmax_rows: expected 2-D");
    int m = a->val.dim(0), nn = a->val.dim(1);
    Tensor out({m, nn});
    for (int i = 0; i < m; ++i) {
        double mx = a->val(i, 0);
        for (int j = 1; j < nn; ++j) mx = std::max(mx, a->val(i, j));
        double s = 0;
        for (int j = 0; j < nn; ++j) {
            out(i, j) = std::exp(a->val(i, j) - mx);
            s += out(i, j);
        }
        for (int j = 0; j < nn; ++j) out(i, j) /= s;
    }
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a, m, nn]() {
        for (int i = 0; i < m; ++i) {
            double dot = 0;
            for (int j = 0; j < nn; ++j) dot += n->grad(i, j) * n->val(i, j);
            for (int j = 0; j < nn; ++j)
                a->g()(i, j) += n->val(i, j) * (n->grad(i, j) - dot);
        }
    };
    return n;
}

// y_ij = m_ij exp(l_ij) / sum_j m_ij exp(l_ij) — the post-softmax decay-mask
// multiply with row renormalization, fused into one op and computed in log
// space. Algebraically identical to softmax_rows followed by mul_renorm_rows,
// but the row max is taken over unmasked columns only, so rows cannot
// underflow to zero mass when a masked-out column dominates the logits.
inline Var masked_softmax_rows(Tape& t, Var a, const Tensor& mask) {
    if (!a->val.same_shape(mask)) throw DimensionError("masked_softmax_rows: mask shape mismatch");
    int m = a->val.dim(0), nn = a->val.dim(1);
    Tensor out({m, nn});
    for (int i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < nn; ++j)
            if (mask(i, j) > 0.0) mx = std::max(mx, a->val(i, j));
        if (!std::isfinite(mx))
            throw ParameterError("masked_softmax_rows: row has no unmasked column");
        double s = 0;
        for (int j = 0; j < nn; ++j) {
            out(i, j) = mask(i, j) > 0.0 ? mask(i, j) * std::exp(a->val(i, j) - mx) : 0.0;
            s += out(i, j);
        }
        for (int j = 0; j < nn; ++j) out(i, j) /= s;
    }
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a, m, nn]() {
        for (int i = 0; i < m; ++i) {
            double dot = 0;
            for (int j = 0; j < nn; ++j) dot += n->grad(i, j) * n->val(i, j);
            for (int j = 0; j < nn; ++j)
                a->g()(i, j) += n->val(i, j) * (n->grad(i, j) - dot);
        }
    };
    return n;
}

// y_ij = a_ij m_ij / sum_j a_ij m_ij — the post-softmax decay-mask multiply
// with row renormalization, fused so rows stay convex combinations.
inline Var mul_renorm_rows(Tape& t, Var a, const Tensor& mask) {
    if (!a->val.same_shape(mask)) throw DimensionError("mul_renorm_rows: mask shape mismatch");
    int m = a->val.dim(0), nn = a->val.dim(1);
    Tensor out({m, nn});
    std::vector<double> sums(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        double s = 0;
        for (int j = 0; j < nn; ++j) s += a->val(i, j) * mask(i, j);
        if (!(s > 0.0)) throw ParameterError("mul_renorm_rows: row mass vanished under mask");
        sums[static_cast<size_t>(i)] = s;
        for (int j = 0; j < nn; ++j) out(i, j) = a->val(i, j) * mask(i, j) / s;
    }
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a, mask, sums, m, nn]() {
        for (int i = 0; i < m; ++i) {
            double dot = 0;
            for (int j = 0; j < nn; ++j) dot += n->grad(i, j) * n->val(i, j);
            double s = sums[static_cast<size_t>(i)];
            for (int j = 0; j < nn; ++j)
                a->g()(i, j) += mask(i, j) / s * (n->grad(i, j) - dot);
        }
    };
    return n;
}

inline Var concat_rows(Tape& t, Var a, Var b) {
    if (a->val.shape.size() != 2 || b->val.shape.size() != 2 || a->val.dim(1) != b->val.dim(1))
        throw DimensionError("concat_rows: column mismatch");
    int ma = a->val.dim(0), mb = b->val.dim(0), nn = a->val.dim(1);
    Tensor out({ma + mb, nn});
    std::copy(a->val.v.begin(), a->val.v.end(), out.v.begin());
    std::copy(b->val.v.begin(), b->val.v.end(), out.v.begin() + a->val.numel());
    Var n = t.make(std::move(out), a->needs_grad || b->needs_grad, nullptr);
    n->back = [n, a, b]() {
        size_t na = a->val.v.size();
        if (a->needs_grad)
            for (size_t i = 0; i < na; ++i) a->g().v[i] += n->grad.v[i];
        if (b->needs_grad)
            for (size_t i = 0; i < b->val.v.size(); ++i) b->g().v[i] += n->grad.v[na + i];
    };
    return n;
}

inline Var slice_cols(Tape& t, Var a, int c0, int c1) {
    if (a->val.shape.size() != 2 || c0 < 0 || c1 > a->val.dim(1) || c0 >= c1)
        throw DimensionError("slice_cols: bad range");
    int m = a->val.dim(0), nn = a->val.dim(1), w = c1 - c0;
    Tensor out({m, w});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) out(i, j) = a->val(i, c0 + j);
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a, c0, m, w, nn]() {
        (void)nn;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) a->g()(i, c0 + j) += n->grad(i, j);
    };
    return n;
}

inline Var concat_cols(Tape& t, Var a, Var b) {
    if (a->val.shape.size() != 2 || b->val.shape.size() != 2 || a->val.dim(0) != b->val.dim(0))
        throw DimensionError("concat_cols: row mismatch");
    int m = a->val.dim(0), na = a->val.dim(1), nb = b->val.dim(1);
    Tensor out({m, na + nb});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < na; ++j) out(i, j) = a->val(i, j);
        for (int j = 0; j < nb; ++j) out(i, na + j) = b->val(i, j);
    }
    Var n = t.make(std::move(out), a->needs_grad || b->needs_grad, nullptr);
    n->back = [n, a, b, m, na, nb]() {
        for (int i = 0; i < m; ++i) {
            if (a->needs_grad)
                for (int j = 0; j < na; ++j) a->g()(i, j) += n->grad(i, j);
            if (b->needs_grad)
                for (int j = 0; j < nb; ++j) b->g()(i, j) += n->grad(i, na + j);
        }
    };
    return n;
}

inline Var gather_rows(Tape& t, Var a, std::vector<int> idx) {
    if (a->val.shape.size() != 2) throw DimensionError("gather_rows: expected 2-D");
    int nn = a->val.dim(1);
    Tensor out({static_cast<int>(idx.size()), nn});
    for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < nn; ++j) out(static_cast<int>(i), j) = a->val(idx[i], j);
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a, idx, nn]() {
        for (size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < nn; ++j) a->g()(idx[i], j) += n->grad(static_cast<int>(i), j);
    };
    return n;
}

// y = a, with y[idx[r]] += upd[r]; the residual write-back at selected rows.
inline Var add_rows_at(Tape& t, Var a, Var upd, std::vector<int> idx) {
    if (a->val.shape.size() != 2 || upd->val.shape.size() != 2 ||
        upd->val.dim(0) != static_cast<int>(idx.size()) || upd->val.dim(1) != a->val.dim(1))
        throw DimensionError("add_rows_at: shape mismatch");
    int nn = a->val.dim(1);
    Tensor out = a->val;
    for (size_t i = 0; i < idx.size(); ++i)
        for (int j = 0; j < nn; ++j) out(idx[i], j) += upd->val(static_cast<int>(i), j);
    Var n = t.make(std::move(out), a->needs_grad || upd->needs_grad, nullptr);
    n->back = [n, a, upd, idx, nn]() {
        if (a->needs_grad)
            for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += n->grad.v[i];
        if (upd->needs_grad)
            for (size_t i = 0; i < idx.size(); ++i)
                for (int j = 0; j < nn; ++j)
                    upd->g()(static_cast<int>(i), j) += n->grad(idx[i], j);
    };
    return n;
}

// ---- image-shaped ops (HWC) ----

inline Var conv2d(Tape& t, Var x, Var w, Var b, int stride, int pad) {
    if (x->val.shape.size() != 3 || w->val.shape.size() != 4)
        throw DimensionError("conv2d: expected HWC input and khkwCinCout weights");
    int h = x->val.dim(0), ww = x->val.dim(1), cin = x->val.dim(2);
    int kh = w->val.dim(0), kw = w->val.dim(1), cout = w->val.dim(3);
    if (w->val.dim(2) != cin || b->val.dim(0) != cout)
        throw DimensionError("conv2d: channel mismatch");
    int ho = (h + 2 * pad - kh) / stride + 1;
    int wo = (ww + 2 * pad - kw) / stride + 1;
    if (ho < 1 || wo < 1) throw DimensionError("conv2d: output collapses to zero");
    Tensor out({ho, wo, cout});
    const double* xv = x->val.v.data();
    const double* wv = w->val.v.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(ho) * wo * cout * kh * kw * cin > 65536)
#endif
    for (int r = 0; r < ho; ++r)
        for (int c = 0; c < wo; ++c)
            for (int o = 0; o < cout; ++o) {
                double acc = b->val(o);
                for (int i = 0; i < kh; ++i) {
                    int rr = r * stride + i - pad;
                    if (rr < 0 || rr >= h) continue;
                    for (int j = 0; j < kw; ++j) {
                        int cc = c * stride + j - pad;
                        if (cc < 0 || cc >= ww) continue;
                        const double* xp = xv + (static_cast<size_t>(rr) * ww + cc) * cin;
                        const double* wp = wv + ((static_cast<size_t>(i) * kw + j) * cin) * cout + o;
                        for (int ci = 0; ci < cin; ++ci) acc += xp[ci] * wp[static_cast<size_t>(ci) * cout];
                    }
                }
                out(r, c, o) = acc;
            }
    Var n = t.make(std::move(out), x->needs_grad || w->needs_grad || b->needs_grad, nullptr);
    n->back = [n, x, w, b, stride, pad, h, ww, cin, kh, kw, cout, ho, wo]() {
        const Tensor& gy = n->grad;
        if (b->needs_grad) {
            Tensor& gb = b->g();
            for (int r = 0; r < ho; ++r)
                for (int c = 0; c < wo; ++c)
                    for (int o = 0; o < cout; ++o) gb(o) += gy(r, c, o);
        }
        if (w->needs_grad) {
            Tensor& gw = w->g();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (cout >= 8)
#endif
            for (int o = 0; o < cout; ++o)
                for (int r = 0; r < ho; ++r)
                    for (int c = 0; c < wo; ++c) {
                        double gv = gy(r, c, o);
                        if (gv == 0.0) continue;
                        for (int i = 0; i < kh; ++i) {
                            int rr = r * stride + i - pad;
                            if (rr < 0 || rr >= h) continue;
                            for (int j = 0; j < kw; ++j) {
                                int cc = c * stride + j - pad;
                                if (cc < 0 || cc >= ww) continue;
                                for (int ci = 0; ci < cin; ++ci)
                                    gw.v[((static_cast<size_t>(i) * kw + j) * cin + ci) * cout + o] +=
                                        gv * x->val(rr, cc, ci);
                            }
                        }
                    }
        }
        if (x->needs_grad) {
            Tensor& gx = x->g();
            // gather form over input positions so rows can run in parallel
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<int64_t>(h) * ww * cin * kh * kw * cout > 65536)
#endif
            for (int rr = 0; rr < h; ++rr)
                for (int cc = 0; cc < ww; ++cc)
                    for (int i = 0; i < kh; ++i) {
                        int rs = rr - i + pad;
                        if (rs < 0 || rs % stride != 0) continue;
                        int r = rs / stride;
                        if (r >= ho) continue;
                        for (int j = 0; j < kw; ++j) {
                            int cs = cc - j + pad;
                            if (cs < 0 || cs % stride != 0) continue;
                            int c = cs / stride;
                            if (c >= wo) continue;
                            for (int ci = 0; ci < cin; ++ci) {
                                double acc = 0;
                                for (int o = 0; o < cout; ++o)
                                    acc += gy(r, c, o) *
                                           w->val.v[((static_cast<size_t>(i) * kw + j) * cin + ci) * cout + o];
                                gx(rr, cc, ci) += acc;
                            }
                        }
                    }
        }
    };
    return n;
}

inline Var upsample_nearest2(Tape& t, Var x) {
    if (x->val.shape.size() != 3) throw DimensionError("upsample_nearest2: expected HWC");
    int h = x->val.dim(0), w = x->val.dim(1), c = x->val.dim(2);
    Tensor out({2 * h, 2 * w, c});
    for (int r = 0; r < 2 * h; ++r)
        for (int cc = 0; cc < 2 * w; ++cc)
            for (int k = 0; k < c; ++k) out(r, cc, k) = x->val(r / 2, cc / 2, k);
    Var n = t.make(std::move(out), x->needs_grad, nullptr);
    n->back = [n, x, h, w, c]() {
        for (int r = 0; r < 2 * h; ++r)
            for (int cc = 0; cc < 2 * w; ++cc)
                for (int k = 0; k < c; ++k) x->g()(r / 2, cc / 2, k) += n->grad(r, cc, k);
    };
    return n;
}

inline Var channel_bias(Tape& t, Var x, Var b) {
    if (x->val.shape.size() != 3 || b->val.dim(0) != x->val.dim(2))
        throw DimensionError("channel_bias: shape mismatch");
    int h = x->val.dim(0), w = x->val.dim(1), c = x->val.dim(2);
    Tensor out = x->val;
    for (int r = 0; r < h; ++r)
        for (int cc = 0; cc < w; ++cc)
            for (int k = 0; k < c; ++k) out(r, cc, k) += b->val(k);
    Var n = t.make(std::move(out), x->needs_grad || b->needs_grad, nullptr);
    n->back = [n, x, b, h, w, c]() {
        if (x->needs_grad)
            for (size_t i = 0; i < x->g().v.size(); ++i) x->g().v[i] += n->grad.v[i];
        if (b->needs_grad)
            for (int r = 0; r < h; ++r)
                for (int cc = 0; cc < w; ++cc)
                    for (int k = 0; k < c; ++k) b->g()(k) += n->grad(r, cc, k);
    };
    return n;
}

inline Var concat_channels(Tape& t, Var a, Var b) {
    if (a->val.shape.size() != 3 || b->val.shape.size() != 3 || a->val.dim(0) != b->val.dim(0) ||
        a->val.dim(1) != b->val.dim(1))
        throw DimensionError("concat_channels: spatial mismatch");
    int h = a->val.dim(0), w = a->val.dim(1), ca = a->val.dim(2), cb = b->val.dim(2);
    Tensor out({h, w, ca + cb});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            for (int k = 0; k < ca; ++k) out(r, c, k) = a->val(r, c, k);
            for (int k = 0; k < cb; ++k) out(r, c, ca + k) = b->val(r, c, k);
        }
    Var n = t.make(std::move(out), a->needs_grad || b->needs_grad, nullptr);
    n->back = [n, a, b, h, w, ca, cb]() {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                if (a->needs_grad)
                    for (int k = 0; k < ca; ++k) a->g()(r, c, k) += n->grad(r, c, k);
                if (b->needs_grad)
                    for (int k = 0; k < cb; ++k) b->g()(r, c, k) += n->grad(r, c, ca + k);
            }
    };
    return n;
}

inline Var slice_channels(Tape& t, Var x, int k0, int k1) {
    if (x->val.shape.size() != 3 || k0 < 0 || k1 > x->val.dim(2) || k0 >= k1)
        throw DimensionError("slice_channels: bad range");
    int h = x->val.dim(0), w = x->val.dim(1), kc = k1 - k0;
    Tensor out({h, w, kc});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int k = 0; k < kc; ++k) out(r, c, k) = x->val(r, c, k0 + k);
    Var n = t.make(std::move(out), x->needs_grad, nullptr);
    n->back = [n, x, h, w, kc, k0]() {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                for (int k = 0; k < kc; ++k) x->g()(r, c, k0 + k) += n->grad(r, c, k);
    };
    return n;
}

// ---- reductions / losses ----

inline Var sum_all(Tape& t, Var a) {
    Tensor out({1});
    for (double x : a->val.v) out.v[0] += x;
    Var n = t.make(std::move(out), a->needs_grad, nullptr);
    n->back = [n, a]() {
        double g = n->grad.v[0];
        for (size_t i = 0; i < a->g().v.size(); ++i) a->g().v[i] += g;
    };
    return n;
}

inline Var mse(Tape& t, Var a, const Tensor& target) {
    if (!a->val.same_shape(target)) throw DimensionError("mse: shape mismatch");
    double total = 0;
    for (size_t i = 0; i < a->val.v.size(); ++i) {
        double d = a->val.v[i] - target.v[i];
        total += d * d;
    }
    double inv_n = 1.0 / static_cast<double>(a->val.numel());
    Var n = t.make(Tensor({1}, {total * inv_n}), a->needs_grad, nullptr);
    n->back = [n, a, target, inv_n]() {
        double g = 2.0 * inv_n * n->grad.v[0];
        for (size_t i = 0; i < a->g().v.size(); ++i)
            a->g().v[i] += g * (a->val.v[i] - target.v[i]);
    };
    return n;
}

// ---- spectral-domain ops (linear; adjoints are scaled transforms) ----

// Per-channel FFT of an H×W×D grid followed by the Gaussian coefficient map,
// real/imag stacked as 2D output channels.
inline Var fft_filter(Tape& t, Var x, const SpectralFilter& filt) {
    if (x->val.shape.size() != 3) throw DimensionError("fft_filter: expected HWC");
    int h = x->val.dim(0), w = x->val.dim(1), d = x->val.dim(2);
    if (filt.map.dim(0) != h || filt.map.dim(1) != w)
        throw DimensionError("fft_filter: filter dims mismatch");
    Tensor out({h, w, 2 * d});
    Tensor plane({h, w});
    for (int ch = 0; ch < d; ++ch) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) plane(r, c) = x->val(r, c, ch);
        ComplexGrid s = fft2(plane);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                cplx z = s.at(r, c) * filter_at(filt, r, c);
                out(r, c, ch) = z.real();
                out(r, c, d + ch) = z.imag();
            }
    }
    Var n = t.make(std::move(out), x->needs_grad, nullptr);
    n->back = [n, x, filt, h, w, d]() {
        // adjoint of (filter ∘ FFT): dx = Re(H·W · ifft2(G ∘ g))
        ComplexGrid g(h, w);
        for (int ch = 0; ch < d; ++ch) {
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c)
                    g.at(r, c) = cplx(n->grad(r, c, ch), n->grad(r, c, d + ch)) * filter_at(filt, r, c);
            ComplexGrid back = ifft2(g);
            double scale = static_cast<double>(h) * w;
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) x->g()(r, c, ch) += scale * back.at(r, c).real();
        }
    };
    return n;
}

// Real part of the per-channel inverse FFT of re/im-stacked spectra.
inline Var ifft_real(Tape& t, Var z) {
    if (z->val.shape.size() != 3 || z->val.dim(2) % 2 != 0)
        throw DimensionError("ifft_real: expected HWC with even channel count");
    int h = z->val.dim(0), w = z->val.dim(1), d = z->val.dim(2) / 2;
    Tensor out({h, w, d});
    ComplexGrid g(h, w);
    for (int ch = 0; ch < d; ++ch) {
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) g.at(r, c) = cplx(z->val(r, c, ch), z->val(r, c, d + ch));
        ComplexGrid rec = ifft2(g);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) out(r, c, ch) = rec.at(r, c).real();
    }
    Var n = t.make(std::move(out), z->needs_grad, nullptr);
    n->back = [n, z, h, w, d]() {
        // adjoint: G = (1/(H·W)) · FFT(dy), split back into re/im channels
        Tensor plane({h, w});
        double inv_n = 1.0 / (static_cast<double>(h) * w);
        for (int ch = 0; ch < d; ++ch) {
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) plane(r, c) = n->grad(r, c, ch);
            ComplexGrid s = fft2(plane);
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    z->g()(r, c, ch) += inv_n * s.at(r, c).real();
                    z->g()(r, c, d + ch) += inv_n * s.at(r, c).imag();
                }
        }
    };
    return n;
}

} // namespace relight::ad
