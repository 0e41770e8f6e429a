#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "motionlab/hash.hpp"
#include "motionlab/mat.hpp"

namespace motionlab {

// Named tensor table. Registration order is the canonical iteration order
// used for hashing, serialization, and optimizer sweeps, so it must be
// deterministic across runs.
template <typename S>
class ParamStore {
public:
    int add(const std::string& name, int rows, int cols) {
        assert(by_name_.find(name) == by_name_.end());
        int id = static_cast<int>(names_.size());
        names_.push_back(name);
        values_.emplace_back(rows, cols);
        by_name_.emplace(name, id);
        return id;
    }

    int size() const { return static_cast<int>(names_.size()); }
    bool has(const std::string& name) const { return by_name_.count(name) > 0; }

    int id(const std::string& name) const {
        auto it = by_name_.find(name);
        assert(it != by_name_.end());
        return it->second;
    }

    const std::string& name(int id) const { return names_[id]; }
    Mat<S>& value(int id) { return values_[id]; }
    const Mat<S>& value(int id) const { return values_[id]; }
    Mat<S>& value(const std::string& name) { return values_[id(name)]; }
    const Mat<S>& value(const std::string& name) const { return values_[id(name)]; }

    const std::vector<std::string>& names() const { return names_; }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& v : values_) n += v.size();
        return n;
    }

    // Order-sensitive hash of names, shapes, and contents. Used to detect
    // unintended mutation of frozen subsets.
    uint64_t content_hash() const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (int i = 0; i < size(); ++i) {
            h = fnv1a64(names_[i].data(), names_[i].size(), h);
            const Mat<S>& v = values_[i];
            uint32_t dims[2] = {static_cast<uint32_t>(v.rows), static_cast<uint32_t>(v.cols)};
            h = fnv1a64(dims, sizeof(dims), h);
            h = fnv1a64(v.data.data(), v.size() * sizeof(S), h);
        }
        return h;
    }

    uint64_t subset_hash(const std::vector<int>& ids) const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (int i : ids) {
            h = fnv1a64(names_[i].data(), names_[i].size(), h);
            const Mat<S>& v = values_[i];
            h = fnv1a64(v.data.data(), v.size() * sizeof(S), h);
        }
        return h;
    }

    template <typename T>
    ParamStore<T> cast() const {
        ParamStore<T> out;
        for (int i = 0; i < size(); ++i) {
            int id = out.add(names_[i], values_[i].rows, values_[i].cols);
            out.value(id) = values_[i].template cast<T>();
        }
        return out;
    }

private:
    std::vector<std::string> names_;
    std::vector<Mat<S>> values_;
    std::unordered_map<std::string, int> by_name_;
};

// Gradient buffers shape-aligned with a ParamStore.
template <typename S>
class GradStore {
public:
    explicit GradStore(const ParamStore<S>& ps) {
        grads_.reserve(ps.size());
        for (int i = 0; i < ps.size(); ++i)
            grads_.emplace_back(ps.value(i).rows, ps.value(i).cols);
    }

    Mat<S>& grad(int id) { return grads_[id]; }
    const Mat<S>& grad(int id) const { return grads_[id]; }
    int size() const { return static_cast<int>(grads_.size()); }

    void zero() {
        for (auto& g : grads_) g.set_zero();
    }

    void scale(S s) {
        for (auto& g : grads_) g.map() *= s;
    }

    double norm(const std::vector<int>& ids) const {
        double acc = 0;
        for (int i : ids) {
            const Mat<S>& g = grads_[i];
            for (size_t k = 0; k < g.size(); ++k) {
                double x = static_cast<double>(g.at(k));
                acc += x * x;
            }
        }
        return std::sqrt(acc);
    }

private:
    std::vector<Mat<S>> grads_;
};

struct AdamWConfig {
    double lr = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
    double clip_norm = 0.0;  // 0 disables clipping
};

// AdamW with per-parameter step counts. Parameters outside the update set
// of a step keep their value, moments, and step count untouched, so a
// frozen parameter stays bit-identical no matter how many steps run.
// Moments are kept in double so the update math is scalar-type agnostic.
template <typename S>
class AdamW {
public:
    AdamW(const ParamStore<S>& ps, AdamWConfig cfg) : cfg_(cfg) {
        m_.reserve(ps.size());
        v_.reserve(ps.size());
        steps_.assign(ps.size(), 0);
        for (int i = 0; i < ps.size(); ++i) {
            m_.emplace_back(ps.value(i).rows, ps.value(i).cols);
            v_.emplace_back(ps.value(i).rows, ps.value(i).cols);
        }
    }

    const AdamWConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    int64_t step_count(int id) const { return steps_[id]; }
    void set_step_count(int id, int64_t t) { steps_[id] = t; }

    // Serialization access for resumable runs.
    MatD& moment1(int id) { return m_[id]; }
    const MatD& moment1(int id) const { return m_[id]; }
    MatD& moment2(int id) { return v_[id]; }
    const MatD& moment2(int id) const { return v_[id]; }

    // Applies one update to exactly the parameters in `ids` (expected
    // sorted for deterministic sweep order). Gradient clipping is global
    // over the same set. Returns the pre-clip gradient norm.
    double step(ParamStore<S>& ps, const GradStore<S>& gs, const std::vector<int>& ids) {
        double gnorm = gs.norm(ids);
        double gscale = 1.0;
        if (cfg_.clip_norm > 0.0 && gnorm > cfg_.clip_norm) gscale = cfg_.clip_norm / gnorm;
        for (int id : ids) {
            int64_t t = ++steps_[id];
            double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t));
            double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t));
            Mat<S>& p = ps.value(id);
            const Mat<S>& g = gs.grad(id);
            MatD& m = m_[id];
            MatD& v = v_[id];
            for (size_t k = 0; k < p.size(); ++k) {
                double gk = static_cast<double>(g.at(k)) * gscale;
                m.at(k) = cfg_.beta1 * m.at(k) + (1.0 - cfg_.beta1) * gk;
                v.at(k) = cfg_.beta2 * v.at(k) + (1.0 - cfg_.beta2) * gk * gk;
                double mhat = m.at(k) / bc1;
                double vhat = v.at(k) / bc2;
                double pk = static_cast<double>(p.at(k));
                pk -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * pk);
                p.at(k) = static_cast<S>(pk);
            }
        }
        return gnorm;
    }

private:
    AdamWConfig cfg_;
    std::vector<MatD> m_;
    std::vector<MatD> v_;
    std::vector<int64_t> steps_;
};

}  // namespace motionlab
