#include "motionlab/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <initializer_list>

namespace motionlab {

namespace {

using nlohmann::json;

void expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) throw ConfigError("config section " + path + " must be an object");
}

void expect_keys(const json& j, const std::string& path,
                 std::initializer_list<const char*> allowed) {
    expect_object(j, path);
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError("unknown config key: " + path + "." + it.key());
    }
}

template <typename T>
void take(const json& j, const std::string& path, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key " + path + "." + key + " has the wrong type");
    }
}

void parse_data(const json& j, DataConfig& c) {
    expect_keys(j, "data",
                {"pretrain_per_pair", "exemplar_count", "spv_count", "eval_clips",
                 "target_motion", "spv_source"});
    take(j, "data", "pretrain_per_pair", c.pretrain_per_pair);
    take(j, "data", "exemplar_count", c.exemplar_count);
    take(j, "data", "spv_count", c.spv_count);
    take(j, "data", "eval_clips", c.eval_clips);
    if (j.contains("target_motion")) {
        std::string s;
        take(j, "data", "target_motion", s);
        try {
            c.target_motion = family_from_string(s);
        } catch (const std::exception&) {
            throw ConfigError("data.target_motion: unknown motion family \"" + s + "\"");
        }
    }
    take(j, "data", "spv_source", c.spv_source);
    if (c.spv_source != "generated" && c.spv_source != "rendered")
        throw ConfigError("data.spv_source must be \"generated\" or \"rendered\"");
    if (family_category(c.target_motion) != MotionCategory::UNCOMMON)
        throw ConfigError("data.target_motion must be an UNCOMMON family");
    if (c.pretrain_per_pair < 1 || c.exemplar_count < 1 || c.spv_count < 1 || c.eval_clips < 1)
        throw ConfigError("data counts must be at least 1");
}

void parse_model(const json& j, ModelConfig& c) {
    expect_keys(j, "model",
                {"d", "heads", "enc_blocks", "text_blocks", "video_blocks", "single_blocks",
                 "ff_hidden"});
    take(j, "model", "d", c.d);
    take(j, "model", "heads", c.heads);
    take(j, "model", "enc_blocks", c.enc_blocks);
    take(j, "model", "text_blocks", c.text_blocks);
    take(j, "model", "video_blocks", c.video_blocks);
    take(j, "model", "single_blocks", c.single_blocks);
    take(j, "model", "ff_hidden", c.ff_hidden);
    if (c.d < 1 || c.heads < 1 || c.d % c.heads != 0)
        throw ConfigError("model.d must be a positive multiple of model.heads");
    if (c.enc_blocks < 1 || c.text_blocks < 1 || c.video_blocks < 1 || c.single_blocks < 1 ||
        c.ff_hidden < 1)
        throw ConfigError("model block counts and ff_hidden must be at least 1");
}

void parse_pretrain(const json& j, PretrainConfig& c) {
    expect_keys(j, "pretrain", {"iterations", "batch_size", "lr"});
    take(j, "pretrain", "iterations", c.iterations);
    take(j, "pretrain", "batch_size", c.batch_size);
    take(j, "pretrain", "lr", c.lr);
}

void parse_components(const json& j, CustomComponents& c) {
    expect_keys(j, "customize.components",
                {"motion_embedding", "subject_embedding", "refiner", "adapters"});
    take(j, "customize.components", "motion_embedding", c.motion_embedding);
    take(j, "customize.components", "subject_embedding", c.subject_embedding);
    take(j, "customize.components", "refiner", c.refiner);
    take(j, "customize.components", "adapters", c.adapters);
}

void parse_customize(const json& j, TrainConfig& c, CustomComponents& comps) {
    expect_keys(j, "customize",
                {"alpha", "lr", "iterations", "batch_size", "adapter_rank", "spv_freeze_scope",
                 "components"});
    take(j, "customize", "alpha", c.alpha);
    take(j, "customize", "lr", c.lr);
    take(j, "customize", "iterations", c.iterations);
    take(j, "customize", "batch_size", c.batch_size);
    take(j, "customize", "adapter_rank", c.adapter_rank);
    if (j.contains("spv_freeze_scope")) {
        std::string s;
        take(j, "customize", "spv_freeze_scope", s);
        try {
            c.spv_freeze_scope = spv_freeze_scope_from_string(s);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    }
    if (j.contains("components")) parse_components(j.at("components"), comps);
}

void parse_sample(const json& j, SampleConfig& c) {
    expect_keys(j, "sample", {"steps", "count", "prompt"});
    take(j, "sample", "steps", c.steps);
    take(j, "sample", "count", c.count);
    take(j, "sample", "prompt", c.prompt);
    if (c.steps < 1 || c.count < 1) throw ConfigError("sample.steps and sample.count must be >= 1");
}

void parse_evaluate(const json& j, EvaluateConfig& c) {
    expect_keys(j, "evaluate", {"seeds_per_prompt", "sample_steps", "prompt_count"});
    take(j, "evaluate", "seeds_per_prompt", c.seeds_per_prompt);
    take(j, "evaluate", "sample_steps", c.sample_steps);
    take(j, "evaluate", "prompt_count", c.prompt_count);
    if (c.seeds_per_prompt < 1 || c.sample_steps < 1 || c.prompt_count < 1)
        throw ConfigError("evaluate counts must be at least 1");
}

void parse_ablate(const json& j, AblateConfig& c) {
    expect_keys(j, "ablate", {"iterations", "seeds_per_prompt"});
    take(j, "ablate", "iterations", c.iterations);
    take(j, "ablate", "seeds_per_prompt", c.seeds_per_prompt);
    if (c.iterations < 0 || c.seeds_per_prompt < 0)
        throw ConfigError("ablate overrides must be non-negative");
}

}  // namespace

std::string default_out_root() {
    if (const char* env = std::getenv("MOTIONLAB_OUT_ROOT"); env && *env) return env;
    return "runs";
}

RunConfig default_run_config() {
    RunConfig c;
    // Desk-scale preset: small enough for single-core wall clocks, large
    // enough to clear the behavioral gates.
    c.pretrain.iterations = 1500;
    c.pretrain.batch_size = 8;
    c.pretrain.lr = 1e-3;
    c.customize.iterations = 400;
    c.customize.batch_size = 4;
    c.customize.lr = 5e-3;
    return c;
}

RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig c = default_run_config();
    expect_keys(j, "config",
                {"seed", "out", "data", "model", "pretrain", "customize", "sample", "evaluate",
                 "ablate"});
    take(j, "config", "seed", c.seed);
    take(j, "config", "out", c.out);
    if (j.contains("data")) parse_data(j.at("data"), c.data);
    if (j.contains("model")) parse_model(j.at("model"), c.model);
    if (j.contains("pretrain")) parse_pretrain(j.at("pretrain"), c.pretrain);
    if (j.contains("customize")) parse_customize(j.at("customize"), c.customize, c.components);
    if (j.contains("sample")) parse_sample(j.at("sample"), c.sample);
    if (j.contains("evaluate")) parse_evaluate(j.at("evaluate"), c.evaluate);
    if (j.contains("ablate")) parse_ablate(j.at("ablate"), c.ablate);
    try {
        c.pretrain.validate();
        c.customize.validate();
    } catch (const TrainError& e) {
        throw ConfigError(e.what());
    }
    if (c.customize.adapter_rank > c.model.d / 4)
        throw ConfigError("customize.adapter_rank exceeds model.d / 4");
    if (c.data.exemplar_count > kShapeCount * kColorCount)
        throw ConfigError("data.exemplar_count exceeds the distinct subject count");
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["out"] = c.out;
    j["data"] = {{"pretrain_per_pair", c.data.pretrain_per_pair},
                 {"exemplar_count", c.data.exemplar_count},
                 {"spv_count", c.data.spv_count},
                 {"eval_clips", c.data.eval_clips},
                 {"target_motion", to_string(c.data.target_motion)},
                 {"spv_source", c.data.spv_source}};
    j["model"] = {{"d", c.model.d},
                  {"heads", c.model.heads},
                  {"enc_blocks", c.model.enc_blocks},
                  {"text_blocks", c.model.text_blocks},
                  {"video_blocks", c.model.video_blocks},
                  {"single_blocks", c.model.single_blocks},
                  {"ff_hidden", c.model.ff_hidden}};
    j["pretrain"] = {{"iterations", c.pretrain.iterations},
                     {"batch_size", c.pretrain.batch_size},
                     {"lr", c.pretrain.lr}};
    j["customize"] = {{"alpha", c.customize.alpha},
                      {"lr", c.customize.lr},
                      {"iterations", c.customize.iterations},
                      {"batch_size", c.customize.batch_size},
                      {"adapter_rank", c.customize.adapter_rank},
                      {"spv_freeze_scope", to_string(c.customize.spv_freeze_scope)},
                      {"components",
                       {{"motion_embedding", c.components.motion_embedding},
                        {"subject_embedding", c.components.subject_embedding},
                        {"refiner", c.components.refiner},
                        {"adapters", c.components.adapters}}}};
    j["sample"] = {{"steps", c.sample.steps}, {"count", c.sample.count},
                   {"prompt", c.sample.prompt}};
    j["evaluate"] = {{"seeds_per_prompt", c.evaluate.seeds_per_prompt},
                     {"sample_steps", c.evaluate.sample_steps},
                     {"prompt_count", c.evaluate.prompt_count}};
    j["ablate"] = {{"iterations", c.ablate.iterations},
                   {"seeds_per_prompt", c.ablate.seeds_per_prompt}};
    return j;
}

}  // namespace motionlab
