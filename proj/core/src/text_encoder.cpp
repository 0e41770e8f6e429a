#include "motionlab/text_encoder.hpp"

#include <stdexcept>

namespace motionlab {

template <typename S>
TextEncoder<S>::TextEncoder(ModelConfig cfg) : cfg_(cfg) {
    if (cfg_.d % cfg_.heads != 0) throw std::invalid_argument("model dim must split across heads");
    causal_ = nn::causal_mask<S>(kPromptLen);
}

template <typename S>
void TextEncoder<S>::register_params(ParamStore<S>& ps) {
    tok_ = ps.add("encoder.tok", cfg_.vocab_size, cfg_.d);
    pos_ = ps.add("encoder.pos", kPromptLen, cfg_.d);
    blocks_.clear();
    for (int b = 0; b < cfg_.enc_blocks; ++b) {
        std::string prefix = "encoder.b" + std::to_string(b);
        Block blk;
        blk.attn = nn::register_attn(ps, prefix + ".self", cfg_.d, /*cross=*/false);
        blk.ff = nn::register_ff(ps, prefix + ".ff", cfg_.d, cfg_.ff_hidden);
        blocks_.push_back(blk);
    }
    final_ln_ = nn::register_ln(ps, "encoder.final_ln", cfg_.d);
}

template <typename S>
void TextEncoder<S>::init_params(ParamStore<S>& ps, Rng& rng) const {
    nn::init_normal(ps.value(tok_), rng, 0.02);
    nn::init_normal(ps.value(pos_), rng, 0.02);
    for (const Block& blk : blocks_) {
        nn::init_attn(ps, blk.attn, rng);
        nn::init_ff(ps, blk.ff, rng);
    }
    nn::init_ln(ps, final_ln_);
}

template <typename S>
ad::Var TextEncoder<S>::encode(ad::Graph<S>& g, const std::array<int, kPromptLen>& token_ids,
                               const ParamStore<S>& ps, GradStore<S>* gs) const {
    std::vector<int> rows(token_ids.begin(), token_ids.end());
    ad::Var x = g.add(g.gather_rows(nn::bind(g, ps, gs, tok_), rows), nn::bind(g, ps, gs, pos_));
    for (const Block& blk : blocks_) {
        x = nn::self_block(g, x, nn::bind_attn(g, ps, gs, blk.attn),
                           nn::bind_ff(g, ps, gs, blk.ff), cfg_.heads, &causal_,
                           static_cast<const nn::AttnAdapters<S>*>(nullptr));
    }
    return nn::layer_norm(g, x, nn::bind_ln(g, ps, gs, final_ln_));
}

template <typename S>
Mat<S> TextEncoder<S>::encode_value(const std::array<int, kPromptLen>& token_ids,
                                    const ParamStore<S>& ps) const {
    ad::Graph<S> g(/*recording=*/false);
    return g.value(encode(g, token_ids, ps, nullptr));
}

template <typename S>
std::array<int, kPromptLen> TextEncoder<S>::carrier_ids(MotionFamily family, const Vocab& vocab) {
    std::array<int, kPromptLen> ids{};
    ids[0] = vocab.id("a");
    ids[1] = vocab.id("gray");
    ids[2] = vocab.id("thing");
    auto motion = motion_slot_ids(motion_phrase(family), vocab);
    for (int i = 0; i < kMotionSpan; ++i) ids[kSubjectSpan + i] = motion[static_cast<size_t>(i)];
    return ids;
}

template <typename S>
Mat<S> TextEncoder<S>::phrase_embedding(MotionFamily family, const Vocab& vocab,
                                        const ParamStore<S>& ps) const {
    Mat<S> full = encode_value(carrier_ids(family, vocab), ps);
    Mat<S> out(kMotionSpan, cfg_.d);
    for (int i = 0; i < kMotionSpan; ++i)
        for (int c = 0; c < cfg_.d; ++c) out(i, c) = full(kSubjectSpan + i, c);
    return out;
}

template class TextEncoder<float>;
template class TextEncoder<double>;

}  // namespace motionlab
