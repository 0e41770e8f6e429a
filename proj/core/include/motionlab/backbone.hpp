#pragma once

#include <array>
#include <functional>
#include <optional>

#include "motionlab/clip.hpp"
#include "motionlab/nn.hpp"

namespace motionlab {

// Linear-beta diffusion schedule. alpha_bar[0] == 1 so t = 0 means "no
// noise" and the final denoising step lands on the clean latent.
struct NoiseSchedule {
    static constexpr int kT = 1000;
    static constexpr double kBetaMin = 1e-4;
    static constexpr double kBetaMax = 2e-2;
    std::array<double, kT + 1> alpha_bar{};

    static const NoiseSchedule& linear();
    double ab(int t) const;
};

// Latent space is the patch-token view of pixels mapped to [-1, 1]:
// z = 2 p - 1. Tokens traverse (frame-pair, y-patch, x-patch) row-major;
// features traverse (df, dy, dx, channel) within the 2x8x8x3 patch.
MatF to_latent(const VideoClip& clip);
VideoClip from_latent(const MatF& z);

// z_t = sqrt(ab_t) z + sqrt(1 - ab_t) eps, elementwise; t = 0 returns z.
MatF add_noise(const MatF& z, const MatF& eps, int t, const NoiseSchedule& sched);

template <typename S>
Mat<S> timestep_embedding(double t, int d);

template <typename S>
using AdapterBinder = std::function<std::optional<nn::AttnAdapters<S>>(
    ad::Graph<S>& g, const std::string& layer_id)>;

// Noise-prediction transformer: a text stream refines the prompt
// embedding, video tokens self-attend and cross-read the final text
// stream, then both streams mix in joint self-attention blocks.
template <typename S>
class Backbone {
public:
    explicit Backbone(ModelConfig cfg);

    void register_params(ParamStore<S>& ps);
    // zero_head starts the model as an exact zero predictor, which keeps
    // early training stable; audits pass false so gradients reach every
    // layer from the start.
    void init_params(ParamStore<S>& ps, Rng& rng, bool zero_head = true) const;

    // z_tokens [video_tokens, patch_dim], text_context [kPromptLen, d];
    // returns predicted noise with the shape of z_tokens.
    ad::Var forward(ad::Graph<S>& g, ad::Var z_tokens, ad::Var text_context, double t,
                    const ParamStore<S>& ps, GradStore<S>* gs,
                    const AdapterBinder<S>& adapters = nullptr) const;

    Mat<S> forward_value(const Mat<S>& z_tokens, const Mat<S>& text_context, double t,
                         const ParamStore<S>& ps,
                         const AdapterBinder<S>& adapters = nullptr) const;

    std::vector<std::string> attention_layer_ids() const;
    const ModelConfig& config() const { return cfg_; }

private:
    struct BlockIds {
        nn::AttnIds self_attn;
        nn::AttnIds cross_attn;
        bool has_cross = false;
        nn::FfIds ff;
        std::string id;  // adapter layer id stem
    };

    ModelConfig cfg_;
    int patch_w_ = -1, patch_b_ = -1, vid_pos_ = -1;
    int time_w1_ = -1, time_b1_ = -1, time_w2_ = -1, time_b2_ = -1;
    std::vector<BlockIds> text_blocks_, video_blocks_, single_blocks_;
    nn::LnIds head_ln_;
    int head_w_ = -1, head_b_ = -1;
    int skip_w_ = -1, skip_b_ = -1;
};

extern template class Backbone<float>;
extern template class Backbone<double>;
extern template Mat<float> timestep_embedding<float>(double, int);
extern template Mat<double> timestep_embedding<double>(double, int);

struct SampleOptions {
    int steps = 50;
    uint64_t seed = 0;
    // When set, frame 0 of the result reproduces frame 0 of this clip:
    // after every denoising update the frame-0 latent slots are replaced
    // with the reference noised to the current timestep.
    std::optional<VideoClip> i2v_reference;
};

// Deterministic DDIM (eta = 0) over round(kT * i / steps) timesteps,
// with the clean-latent estimate clamped to [-1, 1] each step.
VideoClip ddim_sample(const Backbone<float>& bb, const ParamStore<float>& ps,
                      const MatF& text_context, const SampleOptions& opt,
                      const AdapterBinder<float>& adapters = nullptr);

// Per-sample training randomness: t uniform in [1, kT], then elementwise
// standard normal noise, from a stream keyed by (seed, sample index).
template <typename S>
struct NoiseDraw {
    int t;
    Mat<S> eps;
};

template <typename S>
NoiseDraw<S> draw_noise(uint64_t seed, int sample_index, int rows, int cols);

extern template NoiseDraw<float> draw_noise<float>(uint64_t, int, int, int);
extern template NoiseDraw<double> draw_noise<double>(uint64_t, int, int, int);

// Batch-mean of ||eps - predicted||^2 / element count, without gradients.
double diffusion_loss(const Backbone<float>& bb, const ParamStore<float>& ps,
                      const std::vector<MatF>& latents, const std::vector<MatF>& contexts,
                      uint64_t seed, const AdapterBinder<float>& adapters = nullptr);

}  // namespace motionlab
