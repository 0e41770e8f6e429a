#include "motionlab/dual_embedding.hpp"

#include <stdexcept>

#include "motionlab/vocab.hpp"

namespace motionlab {

template <typename S>
DualEmbedding<S>::DualEmbedding(ModelConfig cfg, CustomComponents comps)
    : cfg_(cfg), comps_(comps) {
    if (cfg_.d % cfg_.heads != 0) throw std::invalid_argument("model dim must split across heads");
}

template <typename S>
void DualEmbedding<S>::register_params(ParamStore<S>& ps) {
    if (comps_.motion_embedding) {
        e_mot_ = ps.add("custom.e_l_mot", kMotionSpan, cfg_.d);
        zmot_w_ = ps.add("custom.z_mot.w", cfg_.d, cfg_.d);
        zmot_b_ = ps.add("custom.z_mot.b", 1, cfg_.d);
    }
    if (comps_.subject_embedding) {
        e_sub_ = ps.add("custom.e_l_sub", kSubjectSpan, cfg_.d);
        zsub_w_ = ps.add("custom.z_sub.w", cfg_.d, cfg_.d);
        zsub_b_ = ps.add("custom.z_sub.b", 1, cfg_.d);
    }
    if (comps_.refiner) {
        zref_w_ = ps.add("custom.z_ref.w", cfg_.d, cfg_.d);
        zref_b_ = ps.add("custom.z_ref.b", 1, cfg_.d);
        ref_attn_ = nn::register_attn(ps, "custom.refiner.self", cfg_.d, /*cross=*/false);
        ref_ff_ = nn::register_ff(ps, "custom.refiner.ff", cfg_.d, cfg_.ff_hidden);
    }
}

template <typename S>
void DualEmbedding<S>::init_params(ParamStore<S>& ps, Rng& rng, const Mat<S>* phrase_emb) const {
    if (comps_.motion_embedding) {
        if (!phrase_emb) throw std::invalid_argument("motion embedding init needs a phrase embedding");
        if (phrase_emb->rows != kMotionSpan || phrase_emb->cols != cfg_.d)
            throw std::invalid_argument("phrase embedding shape mismatch");
        ps.value(e_mot_) = *phrase_emb;
        ps.value(zmot_w_).set_zero();
        ps.value(zmot_b_).set_zero();
    }
    if (comps_.subject_embedding) {
        nn::init_normal(ps.value(e_sub_), rng, 0.02);
        ps.value(zsub_w_).set_zero();
        ps.value(zsub_b_).set_zero();
    }
    if (comps_.refiner) {
        ps.value(zref_w_).set_zero();
        ps.value(zref_b_).set_zero();
        nn::init_attn(ps, ref_attn_, rng);
        nn::init_ff(ps, ref_ff_, rng);
    }
}

template <typename S>
ad::Var DualEmbedding<S>::compose(ad::Graph<S>& g, ad::Var base_embedding, const ParamStore<S>& ps,
                                  GradStore<S>* gs) const {
    ad::Var composed = base_embedding;
    if (comps_.motion_embedding || comps_.subject_embedding) {
        ad::Var sub = g.slice_rows(base_embedding, 0, kSubjectSpan);
        ad::Var mot = g.slice_rows(base_embedding, kSubjectSpan, kMotionSpan);
        if (comps_.subject_embedding) {
            ad::Var res = nn::linear(g, nn::bind(g, ps, gs, e_sub_), nn::bind(g, ps, gs, zsub_w_),
                                     nn::bind(g, ps, gs, zsub_b_));
            sub = g.add(sub, res);
        }
        if (comps_.motion_embedding) {
            ad::Var res = nn::linear(g, nn::bind(g, ps, gs, e_mot_), nn::bind(g, ps, gs, zmot_w_),
                                     nn::bind(g, ps, gs, zmot_b_));
            mot = g.add(mot, res);
        }
        composed = g.concat_rows({sub, mot});
    }
    if (comps_.refiner) {
        ad::Var refined = nn::self_block(g, composed, nn::bind_attn(g, ps, gs, ref_attn_),
                                         nn::bind_ff(g, ps, gs, ref_ff_), cfg_.heads,
                                         static_cast<const Mat<S>*>(nullptr),
                                         static_cast<const nn::AttnAdapters<S>*>(nullptr));
        ad::Var res = nn::linear(g, refined, nn::bind(g, ps, gs, zref_w_),
                                 nn::bind(g, ps, gs, zref_b_));
        composed = g.add(composed, res);
    }
    return composed;
}

template <typename S>
Mat<S> DualEmbedding<S>::compose_value(const Mat<S>& base_embedding,
                                       const ParamStore<S>& ps) const {
    ad::Graph<S> g(/*recording=*/false);
    return g.value(compose(g, g.input(base_embedding), ps, nullptr));
}

template <typename S>
const std::vector<std::string>& DualEmbedding<S>::motion_path_names() {
    static const std::vector<std::string> names = {"custom.e_l_mot", "custom.z_mot.w",
                                                   "custom.z_mot.b"};
    return names;
}

template class DualEmbedding<float>;
template class DualEmbedding<double>;

}  // namespace motionlab
