#include "motionlab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "motionlab/checkpoint.hpp"

namespace motionlab {

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t parse_hex64(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

ModelConfig with_standard_vocab(ModelConfig cfg) {
    cfg.vocab_size = Vocab::standard().size();
    return cfg;
}

double mean_of(const std::vector<double>& xs, size_t begin, size_t count) {
    if (xs.empty() || count == 0) return 0.0;
    begin = std::min(begin, xs.size());
    count = std::min(count, xs.size() - begin);
    if (count == 0) return 0.0;
    double acc = 0.0;
    for (size_t i = begin; i < begin + count; ++i) acc += xs[i];
    return acc / static_cast<double>(count);
}

}  // namespace

const char* to_string(SampleSource s) {
    return s == SampleSource::EXEMPLAR ? "EXEMPLAR" : "SPV";
}

const char* to_string(SpvFreezeScope s) {
    return s == SpvFreezeScope::motion_path ? "motion_path" : "motion_embedding_only";
}

SpvFreezeScope spv_freeze_scope_from_string(const std::string& s) {
    if (s == "motion_path") return SpvFreezeScope::motion_path;
    if (s == "motion_embedding_only") return SpvFreezeScope::motion_embedding_only;
    throw TrainError("unknown spv freeze scope: " + s);
}

void TrainConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw TrainError("alpha must lie in [0, 1]");
    if (iterations < 1) throw TrainError("iterations must be at least 1");
    if (batch_size < 1) throw TrainError("batch_size must be at least 1");
    if (!(lr >= 0.0)) throw TrainError("lr must be non-negative");
    if (adapter_rank < 1) throw TrainError("adapter_rank must be at least 1");
}

void PretrainConfig::validate() const {
    if (iterations < 1) throw TrainError("iterations must be at least 1");
    if (batch_size < 1) throw TrainError("batch_size must be at least 1");
    if (!(lr >= 0.0)) throw TrainError("lr must be non-negative");
}

// ---- ModelStateT ----------------------------------------------------------

template <typename S>
ModelStateT<S>::ModelStateT(ModelConfig cfg_in)
    : cfg(with_standard_vocab(cfg_in)),
      vocab(Vocab::standard()),
      encoder(cfg),
      backbone(cfg) {
    encoder.register_params(base);
    backbone.register_params(base);
}

template <typename S>
void ModelStateT<S>::init_base(uint64_t seed, bool zero_head) {
    Rng rng(derive_seed(seed, "base"));
    encoder.init_params(base, rng);
    backbone.init_params(base, rng, zero_head);
}

template <typename S>
void ModelStateT<S>::enable_custom(CustomComponents comps, int rank, MotionFamily target,
                                   uint64_t seed) {
    if (has_custom()) throw TrainError("custom head already enabled");
    components = comps;
    adapter_rank = rank;
    if (comps.any_embedding()) {
        dual.emplace(cfg, comps);
        dual->register_params(custom);
    }
    if (comps.adapters) {
        adapters.emplace(cfg, rank);
        adapters->register_params(custom);
    }
    Rng rng(derive_seed(seed, "custom"));
    if (dual) {
        Mat<S> phrase;
        const Mat<S>* phrase_ptr = nullptr;
        if (comps.motion_embedding) {
            phrase = encoder.phrase_embedding(target, vocab, base);
            phrase_ptr = &phrase;
        }
        dual->init_params(custom, rng, phrase_ptr);
    }
    if (adapters) adapters->init_params(custom, rng);
}

template <typename S>
Mat<S> ModelStateT<S>::prompt_context(const PromptSpec& prompt) const {
    Mat<S> emb = encoder.encode_value(prompt.token_ids, base);
    if (dual) return dual->compose_value(emb, custom);
    return emb;
}

template <typename S>
ad::Var ModelStateT<S>::prompt_context_var(ad::Graph<S>& g, const PromptSpec& prompt,
                                           GradStore<S>* base_gs,
                                           GradStore<S>* custom_gs) const {
    ad::Var e = encoder.encode(g, prompt.token_ids, base, base_gs);
    if (dual) e = dual->compose(g, e, custom, custom_gs);
    return e;
}

template <typename S>
AdapterBinder<S> ModelStateT<S>::adapter_binder(GradStore<S>* custom_gs) const {
    if (!adapters) return nullptr;
    const AdapterBank<S>* bank = &*adapters;
    const ParamStore<S>* store = &custom;
    return [bank, store, custom_gs](ad::Graph<S>& g, const std::string& layer_id) {
        return std::optional<nn::AttnAdapters<S>>(
            bank->bind_layer(g, layer_id, *store, custom_gs));
    };
}

template struct ModelStateT<float>;
template struct ModelStateT<double>;

// ---- masks ----------------------------------------------------------------

std::vector<std::string> select_trainables(const ModelState& m, SampleSource source,
                                           SpvFreezeScope scope) {
    std::vector<std::string> out;
    for (const std::string& name : m.custom.names()) {
        if (source == SampleSource::SPV) {
            if (scope == SpvFreezeScope::motion_path) {
                const auto& frozen = DualEmbedding<float>::motion_path_names();
                if (std::find(frozen.begin(), frozen.end(), name) != frozen.end()) continue;
            } else if (name == "custom.e_l_mot") {
                continue;
            }
        }
        out.push_back(name);
    }
    return out;
}

uint64_t mask_fingerprint(const std::vector<std::string>& names) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const std::string& n : names) {
        h = fnv1a64(n.data(), n.size(), h);
        char sep = '\n';
        h = fnv1a64(&sep, 1, h);
    }
    return h;
}

// ---- one update -----------------------------------------------------------

StepResult training_step(ModelState& m, AdamW<float>& opt, const std::vector<TrainSample>& batch,
                         const std::vector<std::string>& mask, uint64_t step_seed) {
    if (batch.empty()) throw TrainError("empty batch");
    for (const TrainSample& s : batch)
        if (s.source != batch.front().source)
            throw TrainError("batch mixes EXEMPLAR and SPV samples");

    GradStore<float> gs(m.custom);
    AdapterBinder<float> binder = m.adapter_binder(&gs);
    ad::Graph<float> g(true);
    std::vector<ad::Var> parts;
    parts.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        MatF z = to_latent(batch[i].clip);
        NoiseDraw<float> nd = draw_noise<float>(step_seed, static_cast<int>(i), z.rows, z.cols);
        MatF zt = add_noise(z, nd.eps, nd.t, NoiseSchedule::linear());
        ad::Var ctx = m.prompt_context_var(g, batch[i].prompt, nullptr, &gs);
        ad::Var pred =
            m.backbone.forward(g, g.input(zt), ctx, static_cast<double>(nd.t), m.base, nullptr,
                               binder);
        parts.push_back(g.mse_to(pred, nd.eps));
    }
    ad::Var loss = g.mean_scalars(parts);
    double loss_value = static_cast<double>(g.value(loss)(0, 0));
    if (!std::isfinite(loss_value)) throw TrainError("non-finite training loss");
    g.backward(loss);

    std::vector<int> ids;
    ids.reserve(mask.size());
    for (const std::string& name : mask) ids.push_back(m.custom.id(name));
    std::sort(ids.begin(), ids.end());
    double gnorm = opt.step(m.custom, gs, ids);
    return {loss_value, gnorm};
}

std::string to_jsonl(const StepRecord& rec) {
    nlohmann::json j;
    j["step"] = rec.step;
    j["source"] = to_string(rec.source);
    j["loss"] = rec.loss;
    j["mask_fingerprint"] = hex64(rec.mask_fingerprint);
    j["wall_ms"] = rec.wall_ms;
    return j.dump();
}

SampleSource draw_source(uint64_t seed, int step, double alpha) {
    Rng rng(derive_seed(seed, "alpha", static_cast<uint64_t>(step)));
    return rng.uniform() < alpha ? SampleSource::EXEMPLAR : SampleSource::SPV;
}

// ---- customization loop ---------------------------------------------------

namespace {

std::vector<TrainSample> load_pool(const DatasetManifest& manifest, const std::string& root,
                                   const Vocab& vocab, SampleSource source) {
    std::vector<TrainSample> pool;
    pool.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries) {
        TrainSample s;
        s.clip = load_clip(std::filesystem::path(root) / e.clip_path);
        s.prompt = tokenize(e.prompt_text, vocab);
        s.source = source;
        pool.push_back(std::move(s));
    }
    return pool;
}

nlohmann::json components_json(const CustomComponents& c) {
    return {{"motion_embedding", c.motion_embedding},
            {"subject_embedding", c.subject_embedding},
            {"refiner", c.refiner},
            {"adapters", c.adapters}};
}

CustomComponents components_from_json(const nlohmann::json& j) {
    CustomComponents c;
    c.motion_embedding = j.at("motion_embedding").get<bool>();
    c.subject_embedding = j.at("subject_embedding").get<bool>();
    c.refiner = j.at("refiner").get<bool>();
    c.adapters = j.at("adapters").get<bool>();
    return c;
}

// Enables the head described by the checkpoint and loads its values.
// Returns the checkpoint meta for callers that restore optimizer state.
nlohmann::json restore_custom(ModelState& m, const CheckpointReader& r) {
    const nlohmann::json& meta = r.meta();
    if (meta.value("kind", "") != std::string("custom"))
        throw TrainError("not a customization checkpoint");
    uint64_t want_base = parse_hex64(meta.at("base_hash").get<std::string>());
    if (want_base != m.base.content_hash())
        throw TrainError("checkpoint was trained against a different base model");
    CustomComponents comps = components_from_json(meta.at("components"));
    int rank = meta.at("rank").get<int>();
    MotionFamily target = family_from_string(meta.at("target_motion").get<std::string>());
    uint64_t seed = meta.at("config").at("seed").get<uint64_t>();
    m.enable_custom(comps, rank, target, seed);
    for (const std::string& name : m.custom.names()) {
        MatF v = r.read_f32(name);
        if (!v.same_shape(m.custom.value(name)))
            throw TrainError("checkpoint tensor shape mismatch: " + name);
        m.custom.value(name) = std::move(v);
    }
    return meta;
}

void write_custom_checkpoint(const std::string& path, const ModelState& m,
                             const TrainConfig& cfg, MotionFamily target, int steps_done,
                             uint64_t base_hash, const AdamW<float>& opt) {
    CheckpointWriter w;
    w.meta["kind"] = "custom";
    w.meta["target_motion"] = to_string(target);
    w.meta["components"] = components_json(m.components);
    w.meta["rank"] = m.adapter_rank;
    w.meta["config"] = {{"alpha", cfg.alpha},
                        {"lr", cfg.lr},
                        {"iterations", cfg.iterations},
                        {"batch_size", cfg.batch_size},
                        {"seed", cfg.seed},
                        {"spv_freeze_scope", to_string(cfg.spv_freeze_scope)}};
    w.meta["steps_done"] = steps_done;
    w.meta["base_hash"] = hex64(base_hash);
    nlohmann::json opt_steps = nlohmann::json::object();
    for (const std::string& name : m.custom.names()) {
        int id = m.custom.id(name);
        w.add_f32(name, m.custom.value(id));
        w.add_f64("opt." + name + ".m", opt.moment1(id));
        w.add_f64("opt." + name + ".v", opt.moment2(id));
        opt_steps[name] = opt.step_count(id);
    }
    w.meta["opt_steps"] = std::move(opt_steps);
    w.write(path);
}

}  // namespace

CustomizeResult customize(ModelState& m, const CustomizeInputs& in) {
    in.config.validate();
    if (m.has_custom() && !in.resume)
        throw TrainError("model already carries a custom head; customize owns its creation");
    if (in.exemplars.entries.empty()) throw TrainError("exemplar set is empty");
    if (in.config.alpha < 1.0 && in.spv.entries.empty())
        throw TrainError("supervision set is empty but alpha < 1 draws from it");
    if (!in.components.any()) throw TrainError("no custom components enabled");

    MotionFamily target = in.exemplars.entries.front().motion.family;
    for (const ManifestEntry& e : in.exemplars.entries)
        if (e.motion.family != target)
            throw TrainError("exemplar set mixes motion families");

    std::vector<TrainSample> exemplar_pool =
        load_pool(in.exemplars, in.data_root, m.vocab, SampleSource::EXEMPLAR);
    std::vector<TrainSample> spv_pool =
        load_pool(in.spv, in.data_root, m.vocab, SampleSource::SPV);

    int start_step = 0;
    std::optional<CheckpointReader> resume_reader;
    if (in.resume) {
        resume_reader.emplace(*in.resume);
        nlohmann::json meta = restore_custom(m, *resume_reader);
        const nlohmann::json& c = meta.at("config");
        if (c.at("seed").get<uint64_t>() != in.config.seed ||
            c.at("alpha").get<double>() != in.config.alpha ||
            c.at("lr").get<double>() != in.config.lr ||
            c.at("iterations").get<int>() != in.config.iterations ||
            c.at("batch_size").get<int>() != in.config.batch_size ||
            meta.at("rank").get<int>() != in.config.adapter_rank ||
            c.at("spv_freeze_scope").get<std::string>() !=
                std::string(to_string(in.config.spv_freeze_scope)))
            throw TrainError("resume config does not match the checkpoint");
        CustomComponents ck = components_from_json(meta.at("components"));
        if (ck.motion_embedding != in.components.motion_embedding ||
            ck.subject_embedding != in.components.subject_embedding ||
            ck.refiner != in.components.refiner || ck.adapters != in.components.adapters)
            throw TrainError("resume components do not match the checkpoint");
        start_step = meta.at("steps_done").get<int>();
        MotionFamily ck_target =
            family_from_string(meta.at("target_motion").get<std::string>());
        if (ck_target != target) throw TrainError("resume targets a different motion");
    } else {
        m.enable_custom(in.components, in.config.adapter_rank, target, in.config.seed);
    }

    AdamWConfig oc = in.config.optimizer;
    oc.lr = in.config.lr;
    AdamW<float> opt(m.custom, oc);
    if (resume_reader) {
        const nlohmann::json& opt_steps = resume_reader->meta().at("opt_steps");
        for (const std::string& name : m.custom.names()) {
            int id = m.custom.id(name);
            opt.moment1(id) = resume_reader->read_f64("opt." + name + ".m");
            opt.moment2(id) = resume_reader->read_f64("opt." + name + ".v");
            opt.set_step_count(id, opt_steps.at(name).get<int64_t>());
        }
        resume_reader.reset();
    }

    uint64_t base_before = m.base.content_hash();

    // Freeze audit: any custom parameter that never enters an update mask
    // must come out of the loop bit-identical.
    std::vector<MatF> snapshot;
    snapshot.reserve(static_cast<size_t>(m.custom.size()));
    for (int id = 0; id < m.custom.size(); ++id) snapshot.push_back(m.custom.value(id));
    std::vector<bool> touched(static_cast<size_t>(m.custom.size()), false);

    std::ofstream log;
    if (!in.step_log.empty()) {
        log.open(in.step_log, in.resume ? std::ios::app : std::ios::trunc);
        if (!log) throw TrainError("cannot open step log: " + in.step_log);
    }

    std::vector<double> exemplar_losses;
    for (int step = start_step; step < in.config.iterations; ++step) {
        SampleSource source = draw_source(in.config.seed, step, in.config.alpha);
        const std::vector<TrainSample>& pool =
            source == SampleSource::EXEMPLAR ? exemplar_pool : spv_pool;
        Rng br(derive_seed(in.config.seed, "batch", static_cast<uint64_t>(step)));
        std::vector<TrainSample> batch;
        batch.reserve(in.config.batch_size);
        for (int i = 0; i < in.config.batch_size; ++i)
            batch.push_back(pool[static_cast<size_t>(
                br.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))]);

        std::vector<std::string> mask =
            select_trainables(m, source, in.config.spv_freeze_scope);
        for (const std::string& name : mask) touched[static_cast<size_t>(m.custom.id(name))] = true;
        uint64_t step_seed = derive_seed(in.config.seed, "noise", static_cast<uint64_t>(step));
        auto t0 = std::chrono::steady_clock::now();
        StepResult res = training_step(m, opt, batch, mask, step_seed);
        auto t1 = std::chrono::steady_clock::now();

        StepRecord rec;
        rec.step = step;
        rec.source = source;
        rec.loss = res.loss;
        rec.mask_fingerprint = mask_fingerprint(mask);
        rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (log.is_open()) log << to_jsonl(rec) << '\n';
        if (in.on_step) in.on_step(rec);
        if (source == SampleSource::EXEMPLAR) exemplar_losses.push_back(res.loss);
    }
    if (log.is_open()) log.flush();

    if (m.base.content_hash() != base_before)
        throw TrainError("frozen base parameters changed during customization");
    for (int id = 0; id < m.custom.size(); ++id) {
        if (touched[static_cast<size_t>(id)]) continue;
        const MatF& now = m.custom.value(id);
        const MatF& was = snapshot[static_cast<size_t>(id)];
        for (size_t k = 0; k < now.size(); ++k)
            if (now.at(k) != was.at(k))
                throw TrainError("frozen custom parameter changed: " + m.custom.name(id));
    }

    CustomizeResult out;
    out.steps_run = in.config.iterations - start_step;
    out.target = target;
    out.base_hash = base_before;
    int exemplar_total = 0;
    for (int step = 0; step < in.config.iterations; ++step)
        if (draw_source(in.config.seed, step, in.config.alpha) == SampleSource::EXEMPLAR)
            ++exemplar_total;
    out.exemplar_fraction =
        static_cast<double>(exemplar_total) / static_cast<double>(in.config.iterations);
    size_t w = std::min<size_t>(50, exemplar_losses.size());
    out.first_window_loss = mean_of(exemplar_losses, 0, w);
    out.last_window_loss = mean_of(exemplar_losses, exemplar_losses.size() - w, w);

    if (!in.out_checkpoint.empty())
        write_custom_checkpoint(in.out_checkpoint, m, in.config, target,
                                in.config.iterations, base_before, opt);
    return out;
}

void load_custom_checkpoint(ModelState& m, const std::string& path) {
    if (m.has_custom()) throw TrainError("model already carries a custom head");
    CheckpointReader r(path);
    restore_custom(m, r);
}

// ---- pretraining ----------------------------------------------------------

PretrainResult pretrain(ModelState& m, const DatasetManifest& corpus,
                        const std::string& data_root, const PretrainConfig& cfg,
                        const std::string& out_checkpoint, const std::string& step_log,
                        const std::function<void(const StepRecord&)>& on_step) {
    cfg.validate();
    if (m.has_custom()) throw TrainError("pretraining runs on the raw base model");
    if (corpus.entries.empty()) throw TrainError("pretraining corpus is empty");

    struct Item {
        MatF latent;
        PromptSpec prompt;
    };
    std::vector<Item> pool;
    pool.reserve(corpus.entries.size());
    for (const ManifestEntry& e : corpus.entries) {
        Item it;
        it.latent = to_latent(load_clip(std::filesystem::path(data_root) / e.clip_path));
        it.prompt = tokenize(e.prompt_text, m.vocab);
        pool.push_back(std::move(it));
    }

    AdamWConfig oc = cfg.optimizer;
    oc.lr = cfg.lr;
    AdamW<float> opt(m.base, oc);
    std::vector<int> all_ids(static_cast<size_t>(m.base.size()));
    for (int i = 0; i < m.base.size(); ++i) all_ids[static_cast<size_t>(i)] = i;
    uint64_t mask_fp = mask_fingerprint(m.base.names());

    std::ofstream log;
    if (!step_log.empty()) {
        log.open(step_log, std::ios::trunc);
        if (!log) throw TrainError("cannot open step log: " + step_log);
    }

    std::vector<double> losses;
    losses.reserve(static_cast<size_t>(cfg.iterations));
    for (int step = 0; step < cfg.iterations; ++step) {
        Rng br(derive_seed(cfg.seed, "batch", static_cast<uint64_t>(step)));
        uint64_t step_seed = derive_seed(cfg.seed, "noise", static_cast<uint64_t>(step));

        GradStore<float> gs(m.base);
        ad::Graph<float> g(true);
        std::vector<ad::Var> parts;
        parts.reserve(static_cast<size_t>(cfg.batch_size));
        auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < cfg.batch_size; ++i) {
            const Item& it = pool[static_cast<size_t>(
                br.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
            NoiseDraw<float> nd =
                draw_noise<float>(step_seed, i, it.latent.rows, it.latent.cols);
            MatF zt = add_noise(it.latent, nd.eps, nd.t, NoiseSchedule::linear());
            ad::Var ctx = m.encoder.encode(g, it.prompt.token_ids, m.base, &gs);
            ad::Var pred = m.backbone.forward(g, g.input(zt), ctx,
                                              static_cast<double>(nd.t), m.base, &gs, nullptr);
            parts.push_back(g.mse_to(pred, nd.eps));
        }
        ad::Var loss = g.mean_scalars(parts);
        double loss_value = static_cast<double>(g.value(loss)(0, 0));
        if (!std::isfinite(loss_value)) throw TrainError("non-finite pretraining loss");
        g.backward(loss);
        opt.step(m.base, gs, all_ids);
        auto t1 = std::chrono::steady_clock::now();

        losses.push_back(loss_value);
        StepRecord rec;
        rec.step = step;
        rec.source = SampleSource::EXEMPLAR;
        rec.loss = loss_value;
        rec.mask_fingerprint = mask_fp;
        rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (log.is_open()) log << to_jsonl(rec) << '\n';
        if (on_step) on_step(rec);
    }
    if (log.is_open()) log.flush();

    PretrainResult out;
    out.steps_run = cfg.iterations;
    out.initial_loss = losses.front();
    size_t w = std::min<size_t>(100, losses.size());
    out.first_window_loss = mean_of(losses, 0, w);
    out.last_window_loss = mean_of(losses, losses.size() - w, w);
    out.base_hash = m.base.content_hash();

    if (!out_checkpoint.empty()) {
        nlohmann::json extra;
        extra["pretrain"] = {{"iterations", cfg.iterations},
                             {"batch_size", cfg.batch_size},
                             {"lr", cfg.lr},
                             {"seed", cfg.seed},
                             {"initial_loss", out.initial_loss},
                             {"first_window_loss", out.first_window_loss},
                             {"last_window_loss", out.last_window_loss}};
        save_base_checkpoint(out_checkpoint, m, extra);
    }
    return out;
}

void save_base_checkpoint(const std::string& path, const ModelState& m,
                          const nlohmann::json& extra_meta) {
    nlohmann::json meta;
    meta["kind"] = "base";
    meta["model"] = {{"d", m.cfg.d},
                     {"heads", m.cfg.heads},
                     {"enc_blocks", m.cfg.enc_blocks},
                     {"text_blocks", m.cfg.text_blocks},
                     {"video_blocks", m.cfg.video_blocks},
                     {"single_blocks", m.cfg.single_blocks},
                     {"ff_hidden", m.cfg.ff_hidden}};
    meta["schedule"] = {{"steps", NoiseSchedule::kT},
                        {"beta_min", NoiseSchedule::kBetaMin},
                        {"beta_max", NoiseSchedule::kBetaMax}};
    meta["vocab_hash"] = hex64(m.vocab.hash());
    meta["base_hash"] = hex64(m.base.content_hash());
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
    save_params(path, m.base, meta);
}

ModelState load_base_checkpoint(const std::string& path) {
    nlohmann::json meta = read_checkpoint_meta(path);
    if (meta.value("kind", "") != std::string("base"))
        throw TrainError("not a base checkpoint");
    const nlohmann::json& mj = meta.at("model");
    ModelConfig mc;
    mc.d = mj.at("d").get<int>();
    mc.heads = mj.at("heads").get<int>();
    mc.enc_blocks = mj.at("enc_blocks").get<int>();
    mc.text_blocks = mj.at("text_blocks").get<int>();
    mc.video_blocks = mj.at("video_blocks").get<int>();
    mc.single_blocks = mj.at("single_blocks").get<int>();
    mc.ff_hidden = mj.at("ff_hidden").get<int>();
    ModelState m(mc);
    if (parse_hex64(meta.at("vocab_hash").get<std::string>()) != m.vocab.hash())
        throw TrainError("checkpoint vocabulary does not match");
    load_params(path, m.base);
    if (parse_hex64(meta.at("base_hash").get<std::string>()) != m.base.content_hash())
        throw TrainError("base checkpoint hash mismatch after load");
    return m;
}

// ---- gradient audit -------------------------------------------------------

ModelConfig probe_config() {
    ModelConfig c;
    c.d = 16;
    c.heads = 4;
    c.enc_blocks = 1;
    c.text_blocks = 1;
    c.video_blocks = 1;
    c.single_blocks = 1;
    c.ff_hidden = 32;
    return c;
}

FdReport finite_difference_audit(const ModelConfig& cfg, CustomComponents comps, int rank,
                                 const std::vector<TrainSample>& probe_batch, int sample_size,
                                 uint64_t seed, double threshold, bool corrupt_gradients) {
    FdReport report;
    if (sample_size <= 0 || probe_batch.empty() || !comps.any()) return report;

    ModelStateT<double> m(cfg);
    m.init_base(derive_seed(seed, "fd_base"), /*zero_head=*/false);
    m.enable_custom(comps, rank, MotionFamily::figure_eight, derive_seed(seed, "fd_custom"));

    // Zero-initialized projections would hide upstream gradients, so every
    // custom parameter gets jittered off its starting point first.
    Rng jitter(derive_seed(seed, "fd_jitter"));
    for (int id = 0; id < m.custom.size(); ++id) {
        MatD& v = m.custom.value(id);
        for (size_t k = 0; k < v.size(); ++k) v.at(k) += jitter.normal(0.0, 0.05);
    }

    struct Fixed {
        MatD zt;
        MatD eps;
        int t;
        PromptSpec prompt;
    };
    const NoiseSchedule& sched = NoiseSchedule::linear();
    std::vector<Fixed> fixed;
    fixed.reserve(probe_batch.size());
    for (size_t i = 0; i < probe_batch.size(); ++i) {
        MatD z = to_latent(probe_batch[i].clip).cast<double>();
        NoiseDraw<double> nd =
            draw_noise<double>(derive_seed(seed, "fd_noise"), static_cast<int>(i), z.rows,
                               z.cols);
        double ab = sched.ab(nd.t);
        double cs = std::sqrt(ab), cn = std::sqrt(1.0 - ab);
        Fixed f;
        f.zt = MatD(z.rows, z.cols);
        for (size_t k = 0; k < z.size(); ++k) f.zt.at(k) = cs * z.at(k) + cn * nd.eps.at(k);
        f.eps = std::move(nd.eps);
        f.t = nd.t;
        f.prompt = probe_batch[i].prompt;
        fixed.push_back(std::move(f));
    }

    AdapterBinder<double> value_binder = m.adapter_binder(nullptr);
    auto loss_value = [&]() {
        double acc = 0.0;
        for (const Fixed& f : fixed) {
            MatD ctx = m.prompt_context(f.prompt);
            MatD pred = m.backbone.forward_value(f.zt, ctx, static_cast<double>(f.t), m.base,
                                                 value_binder);
            double se = 0.0;
            for (size_t k = 0; k < pred.size(); ++k) {
                double d = pred.at(k) - f.eps.at(k);
                se += d * d;
            }
            acc += se / static_cast<double>(pred.size());
        }
        return acc / static_cast<double>(fixed.size());
    };

    GradStore<double> gs(m.custom);
    {
        AdapterBinder<double> binder = m.adapter_binder(&gs);
        ad::Graph<double> g(true);
        std::vector<ad::Var> parts;
        parts.reserve(fixed.size());
        for (const Fixed& f : fixed) {
            ad::Var ctx = m.prompt_context_var(g, f.prompt, nullptr, &gs);
            ad::Var pred = m.backbone.forward(g, g.input(f.zt), ctx,
                                              static_cast<double>(f.t), m.base, nullptr, binder);
            parts.push_back(g.mse_to(pred, f.eps));
        }
        g.backward(g.mean_scalars(parts));
    }

    Rng pick(derive_seed(seed, "fd_pick"));
    std::vector<std::pair<int, size_t>> coords;
    coords.reserve(static_cast<size_t>(sample_size));
    for (int j = 0; j < sample_size; ++j) {
        int pid = j % m.custom.size();
        size_t n = m.custom.value(pid).size();
        coords.emplace_back(pid, static_cast<size_t>(
                                     pick.uniform_int(0, static_cast<int64_t>(n) - 1)));
    }

    if (corrupt_gradients) {
        auto [pid, k] = coords.front();
        double& gref = gs.grad(pid).at(k);
        gref = gref + 1.0 + 2.0 * std::abs(gref);
    }

    const double h = 1e-5;
    std::vector<FdOffender> all;
    all.reserve(coords.size());
    for (auto [pid, k] : coords) {
        MatD& v = m.custom.value(pid);
        double saved = v.at(k);
        v.at(k) = saved + h;
        double lp = loss_value();
        v.at(k) = saved - h;
        double lm = loss_value();
        v.at(k) = saved;
        double numeric = (lp - lm) / (2.0 * h);
        double analytic = gs.grad(pid).at(k);
        double denom = std::max(std::max(std::abs(analytic), std::abs(numeric)), 1e-8);
        double rel = std::abs(analytic - numeric) / denom;
        all.push_back({m.custom.name(pid), k, analytic, numeric, rel});
        report.max_rel_err = std::max(report.max_rel_err, rel);
    }
    report.checked = static_cast<int>(coords.size());
    report.pass = report.max_rel_err < threshold;
    std::sort(all.begin(), all.end(),
              [](const FdOffender& a, const FdOffender& b) { return a.rel_err > b.rel_err; });
    if (all.size() > 10) all.resize(10);
    report.worst = std::move(all);
    return report;
}

}  // namespace motionlab
