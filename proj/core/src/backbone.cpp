#include "motionlab/backbone.hpp"

#include <cmath>

#include "motionlab/rng.hpp"
#include "motionlab/vocab.hpp"
#include "motionlab/world.hpp"

namespace motionlab {

const NoiseSchedule& NoiseSchedule::linear() {
    static const NoiseSchedule sched = [] {
        NoiseSchedule s;
        s.alpha_bar[0] = 1.0;
        double prod = 1.0;
        for (int t = 1; t <= kT; ++t) {
            double beta = kBetaMin + (kBetaMax - kBetaMin) * (t - 1) / double(kT - 1);
            prod *= 1.0 - beta;
            s.alpha_bar[static_cast<size_t>(t)] = prod;
        }
        return s;
    }();
    return sched;
}

double NoiseSchedule::ab(int t) const {
    if (t < 0 || t > kT) throw ParameterError("timestep out of range: " + std::to_string(t));
    return alpha_bar[static_cast<size_t>(t)];
}

namespace {
constexpr int kPf = ModelConfig::patch_f;
constexpr int kPy = ModelConfig::patch_y;
constexpr int kPx = ModelConfig::patch_x;
constexpr int kTokF = VideoClip::F / kPf;
constexpr int kTokY = VideoClip::H / kPy;
constexpr int kTokX = VideoClip::W / kPx;

inline int token_index(int pf, int py, int px) { return (pf * kTokY + py) * kTokX + px; }
inline int feature_index(int df, int dy, int dx, int c) {
    return ((df * kPy + dy) * kPx + dx) * VideoClip::C + c;
}
}  // namespace

MatF to_latent(const VideoClip& clip) {
    ModelConfig geo;
    MatF z(geo.video_tokens(), geo.patch_dim());
    for (int f = 0; f < VideoClip::F; ++f)
        for (int y = 0; y < VideoClip::H; ++y)
            for (int x = 0; x < VideoClip::W; ++x)
                for (int c = 0; c < VideoClip::C; ++c) {
                    int tok = token_index(f / kPf, y / kPy, x / kPx);
                    int feat = feature_index(f % kPf, y % kPy, x % kPx, c);
                    z(tok, feat) = 2.0f * clip.at(f, y, x, c) - 1.0f;
                }
    return z;
}

VideoClip from_latent(const MatF& z) {
    ModelConfig geo;
    if (z.rows != geo.video_tokens() || z.cols != geo.patch_dim())
        throw ParameterError("latent shape mismatch");
    VideoClip clip;
    for (int f = 0; f < VideoClip::F; ++f)
        for (int y = 0; y < VideoClip::H; ++y)
            for (int x = 0; x < VideoClip::W; ++x)
                for (int c = 0; c < VideoClip::C; ++c) {
                    int tok = token_index(f / kPf, y / kPy, x / kPx);
                    int feat = feature_index(f % kPf, y % kPy, x % kPx, c);
                    float p = (z(tok, feat) + 1.0f) / 2.0f;
                    clip.at(f, y, x, c) = p < 0.0f ? 0.0f : (p > 1.0f ? 1.0f : p);
                }
    return clip;
}

MatF add_noise(const MatF& z, const MatF& eps, int t, const NoiseSchedule& sched) {
    if (!z.same_shape(eps)) throw ParameterError("noise shape mismatch");
    double ab = sched.ab(t);
    float a = static_cast<float>(std::sqrt(ab));
    float b = static_cast<float>(std::sqrt(1.0 - ab));
    MatF out(z.rows, z.cols);
    for (size_t i = 0; i < z.size(); ++i) out.at(i) = a * z.at(i) + b * eps.at(i);
    return out;
}

template <typename S>
Mat<S> timestep_embedding(double t, int d) {
    if (d % 2 != 0) throw ParameterError("timestep embedding needs even dim");
    int half = d / 2;
    Mat<S> emb(1, d);
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / double(half));
        emb(0, i) = static_cast<S>(std::sin(t * freq));
        emb(0, half + i) = static_cast<S>(std::cos(t * freq));
    }
    return emb;
}

template Mat<float> timestep_embedding<float>(double, int);
template Mat<double> timestep_embedding<double>(double, int);

template <typename S>
Backbone<S>::Backbone(ModelConfig cfg) : cfg_(cfg) {
    if (cfg_.d % cfg_.heads != 0) throw ParameterError("model dim must split across heads");
    if (cfg_.d % 2 != 0) throw ParameterError("model dim must be even");
}

template <typename S>
void Backbone<S>::register_params(ParamStore<S>& ps) {
    patch_w_ = ps.add("backbone.patch.w", cfg_.d, cfg_.patch_dim());
    patch_b_ = ps.add("backbone.patch.b", 1, cfg_.d);
    vid_pos_ = ps.add("backbone.vid_pos", cfg_.video_tokens(), cfg_.d);
    time_w1_ = ps.add("backbone.time.w1", cfg_.d, cfg_.d);
    time_b1_ = ps.add("backbone.time.b1", 1, cfg_.d);
    time_w2_ = ps.add("backbone.time.w2", cfg_.d, cfg_.d);
    time_b2_ = ps.add("backbone.time.b2", 1, cfg_.d);

    text_blocks_.clear();
    video_blocks_.clear();
    single_blocks_.clear();
    for (int b = 0; b < cfg_.text_blocks; ++b) {
        BlockIds blk;
        blk.id = "text" + std::to_string(b);
        std::string prefix = "backbone." + blk.id;
        blk.self_attn = nn::register_attn(ps, prefix + ".self", cfg_.d, /*cross=*/false);
        blk.ff = nn::register_ff(ps, prefix + ".ff", cfg_.d, cfg_.ff_hidden);
        text_blocks_.push_back(blk);
    }
    for (int b = 0; b < cfg_.video_blocks; ++b) {
        BlockIds blk;
        blk.id = "vid" + std::to_string(b);
        std::string prefix = "backbone." + blk.id;
        blk.self_attn = nn::register_attn(ps, prefix + ".self", cfg_.d, /*cross=*/false);
        blk.cross_attn = nn::register_attn(ps, prefix + ".cross", cfg_.d, /*cross=*/true);
        blk.has_cross = true;
        blk.ff = nn::register_ff(ps, prefix + ".ff", cfg_.d, cfg_.ff_hidden);
        video_blocks_.push_back(blk);
    }
    for (int b = 0; b < cfg_.single_blocks; ++b) {
        BlockIds blk;
        blk.id = "ss" + std::to_string(b);
        std::string prefix = "backbone." + blk.id;
        blk.self_attn = nn::register_attn(ps, prefix + ".self", cfg_.d, /*cross=*/false);
        blk.ff = nn::register_ff(ps, prefix + ".ff", cfg_.d, cfg_.ff_hidden);
        single_blocks_.push_back(blk);
    }
    head_ln_ = nn::register_ln(ps, "backbone.head.ln", cfg_.d);
    head_w_ = ps.add("backbone.head.w", cfg_.patch_dim(), cfg_.d);
    head_b_ = ps.add("backbone.head.b", 1, cfg_.patch_dim());
    skip_w_ = ps.add("backbone.head.skip_w", 1, cfg_.d);
    skip_b_ = ps.add("backbone.head.skip_b", 1, 1);
}

template <typename S>
void Backbone<S>::init_params(ParamStore<S>& ps, Rng& rng, bool zero_head) const {
    nn::init_normal(ps.value(patch_w_), rng, 0.02);
    ps.value(patch_b_).set_zero();
    nn::init_normal(ps.value(vid_pos_), rng, 0.02);
    nn::init_normal(ps.value(time_w1_), rng, 0.02);
    ps.value(time_b1_).set_zero();
    nn::init_normal(ps.value(time_w2_), rng, 0.02);
    ps.value(time_b2_).set_zero();
    auto init_blocks = [&](const std::vector<BlockIds>& blocks) {
        for (const BlockIds& blk : blocks) {
            nn::init_attn(ps, blk.self_attn, rng);
            if (blk.has_cross) nn::init_attn(ps, blk.cross_attn, rng);
            nn::init_ff(ps, blk.ff, rng);
        }
    };
    init_blocks(text_blocks_);
    init_blocks(video_blocks_);
    init_blocks(single_blocks_);
    nn::init_ln(ps, head_ln_);
    if (zero_head) {
        ps.value(head_w_).set_zero();
        ps.value(skip_w_).set_zero();
    } else {
        nn::init_normal(ps.value(head_w_), rng, 0.02);
        nn::init_normal(ps.value(skip_w_), rng, 0.02);
    }
    ps.value(head_b_).set_zero();
    ps.value(skip_b_).set_zero();
}

template <typename S>
std::vector<std::string> Backbone<S>::attention_layer_ids() const {
    std::vector<std::string> ids;
    for (const BlockIds& blk : text_blocks_) ids.push_back(blk.id);
    for (const BlockIds& blk : video_blocks_) {
        ids.push_back(blk.id + ".self");
        ids.push_back(blk.id + ".cross");
    }
    for (const BlockIds& blk : single_blocks_) ids.push_back(blk.id);
    return ids;
}

namespace {
template <typename S>
struct BoundAdapters {
    std::optional<nn::AttnAdapters<S>> held;
    const nn::AttnAdapters<S>* get(const AdapterBinder<S>& binder, ad::Graph<S>& g,
                                   const std::string& id) {
        held = binder ? binder(g, id) : std::nullopt;
        return held ? &*held : nullptr;
    }
};
}  // namespace

template <typename S>
ad::Var Backbone<S>::forward(ad::Graph<S>& g, ad::Var z_tokens, ad::Var text_context, double t,
                             const ParamStore<S>& ps, GradStore<S>* gs,
                             const AdapterBinder<S>& adapters) const {
    BoundAdapters<S> hook;

    // Timestep embedding through a two-layer head, broadcast over tokens.
    ad::Var temb = g.input(timestep_embedding<S>(t, cfg_.d));
    ad::Var th = g.gelu(nn::linear(g, temb, nn::bind(g, ps, gs, time_w1_),
                                   nn::bind(g, ps, gs, time_b1_)));
    ad::Var tvec = nn::linear(g, th, nn::bind(g, ps, gs, time_w2_), nn::bind(g, ps, gs, time_b2_));

    ad::Var v = nn::linear(g, z_tokens, nn::bind(g, ps, gs, patch_w_),
                           nn::bind(g, ps, gs, patch_b_));
    v = g.add(v, nn::bind(g, ps, gs, vid_pos_));
    v = g.add_rowvec(v, tvec);

    ad::Var txt = text_context;
    for (const BlockIds& blk : text_blocks_) {
        txt = nn::self_block(g, txt, nn::bind_attn(g, ps, gs, blk.self_attn),
                             nn::bind_ff(g, ps, gs, blk.ff), cfg_.heads,
                             static_cast<const Mat<S>*>(nullptr), hook.get(adapters, g, blk.id));
    }

    for (const BlockIds& blk : video_blocks_) {
        nn::AttnVars<S> self_p = nn::bind_attn(g, ps, gs, blk.self_attn);
        nn::AttnVars<S> cross_p = nn::bind_attn(g, ps, gs, blk.cross_attn);
        nn::FfVars<S> ff_p = nn::bind_ff(g, ps, gs, blk.ff);
        ad::Var h = nn::layer_norm(g, v, self_p.ln);
        v = g.add(v, nn::attention(g, h, h, self_p, cfg_.heads, static_cast<const Mat<S>*>(nullptr),
                                   hook.get(adapters, g, blk.id + ".self")));
        ad::Var q = nn::layer_norm(g, v, cross_p.ln);
        ad::Var kv = nn::layer_norm(g, txt, *cross_p.ln_kv);
        v = g.add(v, nn::attention(g, q, kv, cross_p, cfg_.heads, static_cast<const Mat<S>*>(nullptr),
                                   hook.get(adapters, g, blk.id + ".cross")));
        v = g.add(v, nn::feed_forward(g, nn::layer_norm(g, v, ff_p.ln), ff_p));
    }

    ad::Var joint = g.concat_rows({txt, v});
    for (const BlockIds& blk : single_blocks_) {
        joint = nn::self_block(g, joint, nn::bind_attn(g, ps, gs, blk.self_attn),
                               nn::bind_ff(g, ps, gs, blk.ff), cfg_.heads,
                               static_cast<const Mat<S>*>(nullptr), hook.get(adapters, g, blk.id));
    }
    ad::Var v_out = g.slice_rows(joint, kPromptLen, cfg_.video_tokens());

    ad::Var normed = nn::layer_norm(g, v_out, nn::bind_ln(g, ps, gs, head_ln_));
    ad::Var corr = nn::linear(g, normed, nn::bind(g, ps, gs, head_w_), nn::bind(g, ps, gs, head_b_));

    // Noise is white, so the patch projection (a 6:1 contraction) discards
    // most of it irrecoverably; a timestep-gated copy of the input carries
    // the full-rank component and the head supplies the correction.
    ad::Var gate = nn::linear(g, tvec, nn::bind(g, ps, gs, skip_w_), nn::bind(g, ps, gs, skip_b_));
    return g.add(corr, g.scale_by(z_tokens, gate));
}

template <typename S>
Mat<S> Backbone<S>::forward_value(const Mat<S>& z_tokens, const Mat<S>& text_context, double t,
                                  const ParamStore<S>& ps,
                                  const AdapterBinder<S>& adapters) const {
    ad::Graph<S> g(/*recording=*/false);
    return g.value(forward(g, g.input(z_tokens), g.input(text_context), t, ps, nullptr, adapters));
}

template class Backbone<float>;
template class Backbone<double>;

namespace {

// Frame 0 lives in the df = 0 half of the first temporal patch row:
// tokens [0, kTokY*kTokX), features [0, patch_dim/patch_f).
void replace_frame0(MatF& z, const MatF& ref, int t, uint64_t seed, int step,
                    const NoiseSchedule& sched) {
    double ab = sched.ab(t);
    float a = static_cast<float>(std::sqrt(ab));
    float b = static_cast<float>(std::sqrt(1.0 - ab));
    Rng rng(derive_seed(seed, "i2v", static_cast<uint64_t>(step)));
    int tok_count = kTokY * kTokX;
    int feat_count = ModelConfig{}.patch_dim() / kPf;
    for (int tok = 0; tok < tok_count; ++tok)
        for (int feat = 0; feat < feat_count; ++feat)
            z(tok, feat) = a * ref(tok, feat) + b * static_cast<float>(rng.normal());
}

}  // namespace

VideoClip ddim_sample(const Backbone<float>& bb, const ParamStore<float>& ps,
                      const MatF& text_context, const SampleOptions& opt,
                      const AdapterBinder<float>& adapters) {
    if (opt.steps < 1) throw ParameterError("sampling needs at least one step");
    const NoiseSchedule& sched = NoiseSchedule::linear();
    const ModelConfig& cfg = bb.config();

    auto tau = [&](int i) {
        return static_cast<int>(std::lround(double(NoiseSchedule::kT) * i / opt.steps));
    };

    MatF z(cfg.video_tokens(), cfg.patch_dim());
    {
        Rng rng(derive_seed(opt.seed, "init"));
        for (size_t i = 0; i < z.size(); ++i) z.at(i) = static_cast<float>(rng.normal());
    }
    std::optional<MatF> ref;
    if (opt.i2v_reference) {
        ref = to_latent(*opt.i2v_reference);
        replace_frame0(z, *ref, tau(opt.steps), opt.seed, 0, sched);
    }

    for (int i = opt.steps; i >= 1; --i) {
        int t_cur = tau(i);
        int t_next = tau(i - 1);
        if (t_cur == t_next) continue;
        MatF eps = bb.forward_value(z, text_context, double(t_cur), ps, adapters);
        double ab_cur = sched.ab(t_cur);
        double ab_next = sched.ab(t_next);
        float sa_cur = static_cast<float>(std::sqrt(ab_cur));
        float sb_cur = static_cast<float>(std::sqrt(1.0 - ab_cur));
        float sa_next = static_cast<float>(std::sqrt(ab_next));
        float sb_next = static_cast<float>(std::sqrt(1.0 - ab_next));
        for (size_t k = 0; k < z.size(); ++k) {
            float x0 = (z.at(k) - sb_cur * eps.at(k)) / sa_cur;
            x0 = x0 < -1.0f ? -1.0f : (x0 > 1.0f ? 1.0f : x0);
            z.at(k) = sa_next * x0 + sb_next * eps.at(k);
        }
        if (ref) replace_frame0(z, *ref, t_next, opt.seed, opt.steps - i + 1, sched);
    }
    return from_latent(z);
}

template <typename S>
NoiseDraw<S> draw_noise(uint64_t seed, int sample_index, int rows, int cols) {
    Rng rng(derive_seed(seed, "loss", static_cast<uint64_t>(sample_index)));
    NoiseDraw<S> out{static_cast<int>(rng.uniform_int(1, NoiseSchedule::kT)),
                     Mat<S>(rows, cols)};
    for (size_t i = 0; i < out.eps.size(); ++i) out.eps.at(i) = static_cast<S>(rng.normal());
    return out;
}

template NoiseDraw<float> draw_noise<float>(uint64_t, int, int, int);
template NoiseDraw<double> draw_noise<double>(uint64_t, int, int, int);

double diffusion_loss(const Backbone<float>& bb, const ParamStore<float>& ps,
                      const std::vector<MatF>& latents, const std::vector<MatF>& contexts,
                      uint64_t seed, const AdapterBinder<float>& adapters) {
    if (latents.empty() || latents.size() != contexts.size())
        throw ParameterError("loss needs a nonempty batch with one context per latent");
    const NoiseSchedule& sched = NoiseSchedule::linear();
    double acc = 0.0;
    for (size_t i = 0; i < latents.size(); ++i) {
        NoiseDraw<float> nd = draw_noise<float>(seed, static_cast<int>(i), latents[i].rows,
                                                latents[i].cols);
        MatF zt = add_noise(latents[i], nd.eps, nd.t, sched);
        MatF pred = bb.forward_value(zt, contexts[i], double(nd.t), ps, adapters);
        double mse = 0.0;
        for (size_t k = 0; k < pred.size(); ++k) {
            double d = double(pred.at(k)) - double(nd.eps.at(k));
            mse += d * d;
        }
        acc += mse / double(pred.size());
    }
    return acc / double(latents.size());
}

}  // namespace motionlab
