#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "motionlab/nn.hpp"

namespace motionlab {

// Low-rank residual adapters on the query/key/value projections of every
// attention layer in the backbone (output projections are left alone).
// Each adapter is the pair A [r, d], B [d, r] with B zero-initialized, so
// a fresh bank leaves the forward pass bit-exact.
template <typename S>
class AdapterBank {
public:
    explicit AdapterBank(ModelConfig cfg, int rank = 4);

    void register_params(ParamStore<S>& ps);
    void init_params(ParamStore<S>& ps, Rng& rng) const;

    // Stable layer identifiers, in registration order: text0, text1,
    // vid0.self, vid0.cross, vid1.self, vid1.cross, ss0, ss1.
    static const std::vector<std::string>& layer_ids();
    // ParamStore prefix of the attention layer a given id names.
    static std::string base_prefix(const std::string& layer_id);

    int rank() const { return rank_; }
    std::vector<std::string> param_names() const;

    nn::AttnAdapters<S> bind_layer(ad::Graph<S>& g, const std::string& layer_id,
                                   const ParamStore<S>& ps, GradStore<S>* gs) const;

    // Folds B*A into the base projection weights (and the inverse). A
    // merge/unmerge round trip is exact up to one rounding of the sum.
    void merge_into(ParamStore<S>& base, const ParamStore<S>& custom) const;
    void unmerge_from(ParamStore<S>& base, const ParamStore<S>& custom) const;

private:
    struct Entry {
        int a = -1, b = -1;
    };
    struct LayerEntry {
        Entry q, k, v;
    };
    void apply_delta(ParamStore<S>& base, const ParamStore<S>& custom, S sign) const;

    ModelConfig cfg_;
    int rank_;
    std::unordered_map<std::string, LayerEntry> layers_;
};

extern template class AdapterBank<float>;
extern template class AdapterBank<double>;

}  // namespace motionlab
