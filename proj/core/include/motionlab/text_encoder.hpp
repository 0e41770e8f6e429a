#pragma once

#include <array>

#include "motionlab/nn.hpp"
#include "motionlab/vocab.hpp"
#include "motionlab/world.hpp"

namespace motionlab {

// Causal transformer over the fixed 7-token prompt. Every parameter
// lives under the "encoder." prefix of the ParamStore supplied at
// registration time, so checkpoints and optimizers can address the
// encoder by name.
template <typename S>
class TextEncoder {
public:
    explicit TextEncoder(ModelConfig cfg);

    void register_params(ParamStore<S>& ps);
    void init_params(ParamStore<S>& ps, Rng& rng) const;

    // Builds the forward graph; returns the [kPromptLen, d] embedding node.
    ad::Var encode(ad::Graph<S>& g, const std::array<int, kPromptLen>& token_ids,
                   const ParamStore<S>& ps, GradStore<S>* gs) const;

    // Non-recording convenience evaluation.
    Mat<S> encode_value(const std::array<int, kPromptLen>& token_ids,
                        const ParamStore<S>& ps) const;

    // Embedding of "a gray thing <motion phrase>" restricted to the motion
    // span; used to seed motion residual embeddings.
    Mat<S> phrase_embedding(MotionFamily family, const Vocab& vocab,
                            const ParamStore<S>& ps) const;

    static std::array<int, kPromptLen> carrier_ids(MotionFamily family, const Vocab& vocab);

    const ModelConfig& config() const { return cfg_; }

private:
    ModelConfig cfg_;
    int tok_ = -1;
    int pos_ = -1;
    struct Block {
        nn::AttnIds attn;
        nn::FfIds ff;
    };
    std::vector<Block> blocks_;
    nn::LnIds final_ln_;
    Mat<S> causal_;
};

extern template class TextEncoder<float>;
extern template class TextEncoder<double>;

// Span slices of a prompt embedding; concatenating the parts back in
// order reproduces the input exactly.
template <typename S>
std::pair<Mat<S>, Mat<S>> split_embedding(const Mat<S>& seq) {
    Mat<S> sub(kSubjectSpan, seq.cols);
    Mat<S> mot(kMotionSpan, seq.cols);
    for (int c = 0; c < seq.cols; ++c) {
        for (int r = 0; r < kSubjectSpan; ++r) sub(r, c) = seq(r, c);
        for (int r = 0; r < kMotionSpan; ++r) mot(r, c) = seq(kSubjectSpan + r, c);
    }
    return {std::move(sub), std::move(mot)};
}

}  // namespace motionlab
