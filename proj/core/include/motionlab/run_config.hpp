#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "motionlab/evaluator.hpp"

namespace motionlab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataConfig {
    int pretrain_per_pair = 2;
    int exemplar_count = 5;
    int spv_count = 24;
    int eval_clips = 40;
    MotionFamily target_motion = MotionFamily::figure_eight;
    std::string spv_source = "generated";  // "generated" (model + oracle filter) or "rendered"
};

struct SampleConfig {
    int steps = 50;
    int count = 1;
    std::string prompt;  // empty: first held-out subject on the target motion
};

struct EvaluateConfig {
    int seeds_per_prompt = 10;
    int sample_steps = 50;
    int prompt_count = 5;  // held-out subjects paired with the target motion
};

struct AblateConfig {
    int iterations = 0;        // 0 inherits customize.iterations
    int seeds_per_prompt = 0;  // 0 inherits evaluate.seeds_per_prompt
};

// Whole-pipeline configuration. Defaults are the desk-scale preset; every
// command echoes the effective config into the artifacts it writes.
struct RunConfig {
    uint64_t seed = 0;
    std::string out;  // output root; empty falls back to default_out_root()/run

    DataConfig data;
    ModelConfig model;
    PretrainConfig pretrain;
    TrainConfig customize;
    CustomComponents components;
    SampleConfig sample;
    EvaluateConfig evaluate;
    AblateConfig ablate;
};

// $MOTIONLAB_OUT_ROOT when set, else "runs".
std::string default_out_root();

RunConfig default_run_config();

// Strict parse: unknown keys anywhere raise ConfigError naming the key,
// as do type mismatches and out-of-range values.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

nlohmann::json run_config_to_json(const RunConfig& c);

}  // namespace motionlab
