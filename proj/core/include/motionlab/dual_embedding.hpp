#pragma once

#include "motionlab/nn.hpp"

namespace motionlab {

// Which pieces of the customization head exist. Disabled pieces are never
// registered, so ablation rows differ structurally rather than by zeroed
// weights. All-false is the raw pretrained model.
struct CustomComponents {
    bool motion_embedding = true;   // e_l_mot and its projection
    bool subject_embedding = true;  // e_l_sub and its projection
    bool refiner = true;            // interaction block and its projection
    bool adapters = true;           // low-rank attention adapters

    bool any_embedding() const { return motion_embedding || subject_embedding || refiner; }
    bool any() const { return any_embedding() || adapters; }
};

// Customization head over the prompt embedding: learned residual
// embeddings for the motion and subject spans, each injected through a
// zero-initialized pointwise projection, then a one-block refiner whose
// output also enters through a zero-initialized projection. At init the
// whole head is the identity on the prompt embedding.
template <typename S>
class DualEmbedding {
public:
    explicit DualEmbedding(ModelConfig cfg, CustomComponents comps = {});

    void register_params(ParamStore<S>& ps);
    // phrase_emb seeds the motion residual rows verbatim (required iff the
    // motion embedding exists); the subject residual draws fresh noise.
    // Zero-convs stay zero.
    void init_params(ParamStore<S>& ps, Rng& rng, const Mat<S>* phrase_emb) const;

    ad::Var compose(ad::Graph<S>& g, ad::Var base_embedding, const ParamStore<S>& ps,
                    GradStore<S>* gs) const;
    Mat<S> compose_value(const Mat<S>& base_embedding, const ParamStore<S>& ps) const;

    // Parameters frozen when supervising with common-motion videos under
    // the default freeze scope: the motion residual and its projection.
    static const std::vector<std::string>& motion_path_names();

    const ModelConfig& config() const { return cfg_; }
    const CustomComponents& components() const { return comps_; }

private:
    ModelConfig cfg_;
    CustomComponents comps_;
    int e_mot_ = -1, e_sub_ = -1;
    int zmot_w_ = -1, zmot_b_ = -1;
    int zsub_w_ = -1, zsub_b_ = -1;
    int zref_w_ = -1, zref_b_ = -1;
    nn::AttnIds ref_attn_;
    nn::FfIds ref_ff_;
};

extern template class DualEmbedding<float>;
extern template class DualEmbedding<double>;

}  // namespace motionlab
