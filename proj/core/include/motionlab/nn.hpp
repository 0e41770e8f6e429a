#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "motionlab/clip.hpp"
#include "motionlab/graph.hpp"
#include "motionlab/params.hpp"
#include "motionlab/rng.hpp"

namespace motionlab {

// Shared dimensional contract between the text encoder and the backbone.
// The probe configuration used by gradient audits shrinks d and block
// counts; the geometry (patching, prompt length) never changes.
struct ModelConfig {
    int d = 64;
    int heads = 4;
    int enc_blocks = 2;
    int text_blocks = 2;
    int video_blocks = 2;
    int single_blocks = 2;
    int ff_hidden = 128;
    int vocab_size = 35;

    static constexpr int patch_f = 2;
    static constexpr int patch_y = 8;
    static constexpr int patch_x = 8;

    int video_tokens() const {
        return (VideoClip::F / patch_f) * (VideoClip::H / patch_y) * (VideoClip::W / patch_x);
    }
    int patch_dim() const { return patch_f * patch_y * patch_x * VideoClip::C; }
};

namespace nn {

template <typename S>
ad::Var bind(ad::Graph<S>& g, const ParamStore<S>& ps, GradStore<S>* gs, int id) {
    return g.param(ps.value(id), gs ? &gs->grad(id) : nullptr);
}

struct LnIds {
    int g = -1, b = -1;
};
struct AttnIds {
    LnIds ln;       // query-side pre-norm
    LnIds ln_kv;    // key/value-side pre-norm (cross-attention only)
    bool has_ln_kv = false;
    int wq = -1, bq = -1, wk = -1, bk = -1, wv = -1, bv = -1, wo = -1, bo = -1;
};
struct FfIds {
    LnIds ln;
    int w1 = -1, b1 = -1, w2 = -1, b2 = -1;
};

template <typename S>
LnIds register_ln(ParamStore<S>& ps, const std::string& prefix, int d) {
    return {ps.add(prefix + ".g", 1, d), ps.add(prefix + ".b", 1, d)};
}

// Weights are [out, in]; activations are [tokens, d] and multiply as
// x * W^T + b.
template <typename S>
AttnIds register_attn(ParamStore<S>& ps, const std::string& prefix, int d, bool cross) {
    AttnIds ids;
    ids.ln = register_ln(ps, prefix + ".ln", d);
    if (cross) {
        ids.ln_kv = register_ln(ps, prefix + ".lnkv", d);
        ids.has_ln_kv = true;
    }
    ids.wq = ps.add(prefix + ".wq", d, d);
    ids.bq = ps.add(prefix + ".bq", 1, d);
    ids.wk = ps.add(prefix + ".wk", d, d);
    ids.bk = ps.add(prefix + ".bk", 1, d);
    ids.wv = ps.add(prefix + ".wv", d, d);
    ids.bv = ps.add(prefix + ".bv", 1, d);
    ids.wo = ps.add(prefix + ".wo", d, d);
    ids.bo = ps.add(prefix + ".bo", 1, d);
    return ids;
}

template <typename S>
FfIds register_ff(ParamStore<S>& ps, const std::string& prefix, int d, int hidden) {
    FfIds ids;
    ids.ln = register_ln(ps, prefix + ".ln", d);
    ids.w1 = ps.add(prefix + ".w1", hidden, d);
    ids.b1 = ps.add(prefix + ".b1", 1, hidden);
    ids.w2 = ps.add(prefix + ".w2", d, hidden);
    ids.b2 = ps.add(prefix + ".b2", 1, d);
    return ids;
}

template <typename S>
void init_normal(Mat<S>& m, Rng& rng, double sigma) {
    for (size_t i = 0; i < m.size(); ++i) m.at(i) = static_cast<S>(rng.normal(0.0, sigma));
}

template <typename S>
void init_ln(ParamStore<S>& ps, const LnIds& ids) {
    Mat<S>& g = ps.value(ids.g);
    for (size_t i = 0; i < g.size(); ++i) g.at(i) = S(1);
    ps.value(ids.b).set_zero();
}

template <typename S>
void init_attn(ParamStore<S>& ps, const AttnIds& ids, Rng& rng, double sigma = 0.02) {
    init_ln(ps, ids.ln);
    if (ids.has_ln_kv) init_ln(ps, ids.ln_kv);
    init_normal(ps.value(ids.wq), rng, sigma);
    init_normal(ps.value(ids.wk), rng, sigma);
    init_normal(ps.value(ids.wv), rng, sigma);
    init_normal(ps.value(ids.wo), rng, sigma);
    ps.value(ids.bq).set_zero();
    ps.value(ids.bk).set_zero();
    ps.value(ids.bv).set_zero();
    ps.value(ids.bo).set_zero();
}

template <typename S>
void init_ff(ParamStore<S>& ps, const FfIds& ids, Rng& rng, double sigma = 0.02) {
    init_ln(ps, ids.ln);
    init_normal(ps.value(ids.w1), rng, sigma);
    init_normal(ps.value(ids.w2), rng, sigma);
    ps.value(ids.b1).set_zero();
    ps.value(ids.b2).set_zero();
}

// Bound graph leaves for one attention layer / feedforward.
template <typename S>
struct LnVars {
    ad::Var g, b;
};
template <typename S>
struct AttnVars {
    LnVars<S> ln;
    std::optional<LnVars<S>> ln_kv;
    ad::Var wq, bq, wk, bk, wv, bv, wo, bo;
};
template <typename S>
struct FfVars {
    LnVars<S> ln;
    ad::Var w1, b1, w2, b2;
};

template <typename S>
LnVars<S> bind_ln(ad::Graph<S>& g, const ParamStore<S>& ps, GradStore<S>* gs, const LnIds& ids) {
    return {bind(g, ps, gs, ids.g), bind(g, ps, gs, ids.b)};
}

template <typename S>
AttnVars<S> bind_attn(ad::Graph<S>& g, const ParamStore<S>& ps, GradStore<S>* gs,
                      const AttnIds& ids) {
    AttnVars<S> v;
    v.ln = bind_ln(g, ps, gs, ids.ln);
    if (ids.has_ln_kv) v.ln_kv = bind_ln(g, ps, gs, ids.ln_kv);
    v.wq = bind(g, ps, gs, ids.wq);
    v.bq = bind(g, ps, gs, ids.bq);
    v.wk = bind(g, ps, gs, ids.wk);
    v.bk = bind(g, ps, gs, ids.bk);
    v.wv = bind(g, ps, gs, ids.wv);
    v.bv = bind(g, ps, gs, ids.bv);
    v.wo = bind(g, ps, gs, ids.wo);
    v.bo = bind(g, ps, gs, ids.bo);
    return v;
}

template <typename S>
FfVars<S> bind_ff(ad::Graph<S>& g, const ParamStore<S>& ps, GradStore<S>* gs, const FfIds& ids) {
    return {bind_ln(g, ps, gs, ids.ln), bind(g, ps, gs, ids.w1), bind(g, ps, gs, ids.b1),
            bind(g, ps, gs, ids.w2), bind(g, ps, gs, ids.b2)};
}

constexpr double kLnEps = 1e-5;

template <typename S>
ad::Var layer_norm(ad::Graph<S>& g, ad::Var x, const LnVars<S>& ln) {
    return g.layer_norm(x, ln.g, ln.b, static_cast<S>(kLnEps));
}

// x * W^T + b, optionally plus the low-rank residual (x * A^T) * B^T.
template <typename S>
ad::Var linear(ad::Graph<S>& g, ad::Var x, ad::Var w, ad::Var b) {
    return g.add_rowvec(g.matmul_nt(x, w), b);
}

template <typename S>
struct ProjAdapter {
    ad::Var A, B;  // A: [r, d_in], B: [d_out, r]
};

template <typename S>
struct AttnAdapters {
    std::optional<ProjAdapter<S>> q, k, v;
};

template <typename S>
ad::Var linear_adapted(ad::Graph<S>& g, ad::Var x, ad::Var w, ad::Var b,
                       const std::optional<ProjAdapter<S>>& ad_opt) {
    ad::Var y = linear(g, x, w, b);
    if (ad_opt) y = g.add(y, g.matmul_nt(g.matmul_nt(x, ad_opt->A), ad_opt->B));
    return y;
}

// Multi-head attention over pre-normalized inputs. q_in [Lq,d],
// kv_in [Lkv,d]; mask, when present, is an additive [Lq,Lkv] constant
// applied to the scaled scores.
template <typename S>
ad::Var attention(ad::Graph<S>& g, ad::Var q_in, ad::Var kv_in, const AttnVars<S>& p, int heads,
                  const Mat<S>* mask, const AttnAdapters<S>* adapters) {
    const AttnAdapters<S> none{};
    const AttnAdapters<S>& ad_ = adapters ? *adapters : none;
    ad::Var q = linear_adapted(g, q_in, p.wq, p.bq, ad_.q);
    ad::Var k = linear_adapted(g, kv_in, p.wk, p.bk, ad_.k);
    ad::Var v = linear_adapted(g, kv_in, p.wv, p.bv, ad_.v);
    int d = g.value(q).cols;
    int dh = d / heads;
    S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<ad::Var> heads_out;
    heads_out.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        ad::Var qh = g.slice_cols(q, h * dh, dh);
        ad::Var kh = g.slice_cols(k, h * dh, dh);
        ad::Var vh = g.slice_cols(v, h * dh, dh);
        ad::Var scores = g.scale(g.matmul_nt(qh, kh), scale);
        if (mask) scores = g.add_const(scores, *mask);
        ad::Var probs = g.softmax_rows(scores);
        heads_out.push_back(g.matmul(probs, vh));
    }
    ad::Var ctx = g.concat_cols(heads_out);
    return linear(g, ctx, p.wo, p.bo);
}

template <typename S>
ad::Var feed_forward(ad::Graph<S>& g, ad::Var x, const FfVars<S>& p) {
    return linear(g, g.gelu(linear(g, x, p.w1, p.b1)), p.w2, p.b2);
}

// Pre-norm residual block: x += attn(LN(x)); x += ff(LN(x)).
template <typename S>
ad::Var self_block(ad::Graph<S>& g, ad::Var x, const AttnVars<S>& attn_p, const FfVars<S>& ff_p,
                   int heads, const Mat<S>* mask, const AttnAdapters<S>* adapters) {
    ad::Var h = layer_norm(g, x, attn_p.ln);
    x = g.add(x, attention(g, h, h, attn_p, heads, mask, adapters));
    x = g.add(x, feed_forward(g, layer_norm(g, x, ff_p.ln), ff_p));
    return x;
}

// Strictly-lower-triangular-allowed causal mask (token i attends <= i).
template <typename S>
Mat<S> causal_mask(int n) {
    Mat<S> m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = j <= i ? S(0) : S(-1e9);
    return m;
}

}  // namespace nn
}  // namespace motionlab
