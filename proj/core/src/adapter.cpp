#include "motionlab/adapter.hpp"

#include "motionlab/world.hpp"

namespace motionlab {

namespace {
const char* kProjNames[3] = {"q", "k", "v"};
}

template <typename S>
AdapterBank<S>::AdapterBank(ModelConfig cfg, int rank) : cfg_(cfg), rank_(rank) {
    if (rank_ < 1) throw ParameterError("adapter rank must be positive");
    if (rank_ > cfg_.d / 4)
        throw ParameterError("adapter rank " + std::to_string(rank_) + " exceeds d/4 = " +
                             std::to_string(cfg_.d / 4));
}

template <typename S>
const std::vector<std::string>& AdapterBank<S>::layer_ids() {
    static const std::vector<std::string> ids = {"text0",      "text1",     "vid0.self",
                                                 "vid0.cross", "vid1.self", "vid1.cross",
                                                 "ss0",        "ss1"};
    return ids;
}

template <typename S>
std::string AdapterBank<S>::base_prefix(const std::string& layer_id) {
    if (layer_id.rfind("vid", 0) == 0) return "backbone." + layer_id;
    return "backbone." + layer_id + ".self";
}

template <typename S>
void AdapterBank<S>::register_params(ParamStore<S>& ps) {
    layers_.clear();
    for (const std::string& id : layer_ids()) {
        LayerEntry layer;
        Entry* slots[3] = {&layer.q, &layer.k, &layer.v};
        for (int p = 0; p < 3; ++p) {
            std::string prefix = "adapter." + id + "." + kProjNames[p];
            slots[p]->a = ps.add(prefix + ".A", rank_, cfg_.d);
            slots[p]->b = ps.add(prefix + ".B", cfg_.d, rank_);
        }
        layers_.emplace(id, layer);
    }
}

template <typename S>
void AdapterBank<S>::init_params(ParamStore<S>& ps, Rng& rng) const {
    for (const std::string& id : layer_ids()) {
        const LayerEntry& layer = layers_.at(id);
        const Entry* slots[3] = {&layer.q, &layer.k, &layer.v};
        for (const Entry* e : slots) {
            nn::init_normal(ps.value(e->a), rng, 0.02);
            ps.value(e->b).set_zero();
        }
    }
}

template <typename S>
std::vector<std::string> AdapterBank<S>::param_names() const {
    std::vector<std::string> names;
    for (const std::string& id : layer_ids())
        for (int p = 0; p < 3; ++p) {
            names.push_back("adapter." + id + "." + kProjNames[p] + ".A");
            names.push_back("adapter." + id + "." + kProjNames[p] + ".B");
        }
    return names;
}

template <typename S>
nn::AttnAdapters<S> AdapterBank<S>::bind_layer(ad::Graph<S>& g, const std::string& layer_id,
                                               const ParamStore<S>& ps, GradStore<S>* gs) const {
    auto it = layers_.find(layer_id);
    if (it == layers_.end()) throw ParameterError("unknown adapter layer: " + layer_id);
    const LayerEntry& layer = it->second;
    nn::AttnAdapters<S> out;
    out.q = nn::ProjAdapter<S>{nn::bind(g, ps, gs, layer.q.a), nn::bind(g, ps, gs, layer.q.b)};
    out.k = nn::ProjAdapter<S>{nn::bind(g, ps, gs, layer.k.a), nn::bind(g, ps, gs, layer.k.b)};
    out.v = nn::ProjAdapter<S>{nn::bind(g, ps, gs, layer.v.a), nn::bind(g, ps, gs, layer.v.b)};
    return out;
}

template <typename S>
void AdapterBank<S>::apply_delta(ParamStore<S>& base, const ParamStore<S>& custom, S sign) const {
    for (const std::string& id : layer_ids()) {
        const LayerEntry& layer = layers_.at(id);
        const Entry* slots[3] = {&layer.q, &layer.k, &layer.v};
        std::string prefix = base_prefix(id);
        for (int p = 0; p < 3; ++p) {
            Mat<S>& w = base.value(base.id(prefix + ".w" + kProjNames[p]));
            const Mat<S>& a = custom.value(slots[p]->a);
            const Mat<S>& b = custom.value(slots[p]->b);
            w.map() += sign * (b.map() * a.map());
        }
    }
}

template <typename S>
void AdapterBank<S>::merge_into(ParamStore<S>& base, const ParamStore<S>& custom) const {
    apply_delta(base, custom, S(1));
}

template <typename S>
void AdapterBank<S>::unmerge_from(ParamStore<S>& base, const ParamStore<S>& custom) const {
    apply_delta(base, custom, S(-1));
}

template class AdapterBank<float>;
template class AdapterBank<double>;

}  // namespace motionlab
