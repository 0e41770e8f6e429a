#pragma once

#include <filesystem>
#include <optional>

#include "motionlab/run_config.hpp"

namespace motionlab {

// Fixed artifact layout under one run directory:
//   data/        manifests (jsonl) and data/clips/ renders
//   checkpoints/ base.ckpt, custom.ckpt, ablation/ per-row checkpoints
//   samples/     sampled clips and ppm previews
//   reports/     evaluation and ablation reports plus audit clip dumps
//   logs/        per-step training records (jsonl)
//   manifests/   one provenance record per command (inputs/outputs + hashes)
struct RunPaths {
    std::filesystem::path root;

    explicit RunPaths(const RunConfig& cfg);

    std::filesystem::path data_dir() const { return root / "data"; }
    std::filesystem::path manifest_path(Split s) const;
    std::filesystem::path spv_generated_manifest() const {
        return data_dir() / "spv_generated.jsonl";
    }
    std::filesystem::path base_checkpoint() const { return root / "checkpoints" / "base.ckpt"; }
    std::filesystem::path custom_checkpoint() const {
        return root / "checkpoints" / "custom.ckpt";
    }
    std::filesystem::path samples_dir() const { return root / "samples"; }
    std::filesystem::path reports_dir() const { return root / "reports"; }
    std::filesystem::path logs_dir() const { return root / "logs"; }
    std::filesystem::path run_manifest_dir() const { return root / "manifests"; }
};

// Mid-range parameters for a family: the canonical exemplar target spec.
MotionSpec canonical_motion(MotionFamily family);

// One prompt per COMMON family with seeded subjects; pretrain-quality probes.
std::vector<EvalPrompt> probe_prompts(const RunConfig& cfg);

// Target-motion prompts over subjects absent from the exemplar set, in
// fixed shape-major order.
std::vector<EvalPrompt> heldout_prompts(const RunConfig& cfg, const DatasetManifest& exemplars,
                                        int count);

// Writes PRETRAIN / EXEMPLAR / SPV / EVAL manifests and their clips.
// Bit-identical when rerun with the same config and seed.
void run_gen_data(const RunConfig& cfg);

PretrainResult run_pretrain(const RunConfig& cfg);

// Subject-prior clips sampled from the frozen model; each entry keeps the
// first of up to five draws whose subject verdict matches the request and
// falls back to a rendered clip when none does.
DatasetManifest make_spv_set_generated(const RunConfig& cfg, const ModelState& m,
                                       const std::filesystem::path& data_root, int n,
                                       uint64_t seed);

CustomizeResult run_customize(const RunConfig& cfg, bool resume);

struct SampleOutcome {
    std::vector<std::string> clip_paths;
    std::string prompt;
};

SampleOutcome run_sample(const RunConfig& cfg, const std::optional<std::string>& i2v_clip);

// Evaluates the customized model on held-out target-motion prompts when
// custom.ckpt exists, else the base model on the COMMON-family probes.
MetricsReport run_evaluate(const RunConfig& cfg);

struct AblationRow {
    std::string label;
    CustomComponents components;
    MetricsReport report;
};

struct AblationReport {
    std::vector<std::string> order;
    std::vector<AblationRow> rows;  // rows[0] is the untrained baseline
};

// Canonical component keys for the ladder, in introduction order.
const std::vector<std::string>& ablation_component_keys();

// Cumulative ladder: baseline (no custom head), then one component added
// per row following `order` (a permutation of ablation_component_keys();
// empty means the default order). Every row is customized from the same
// base checkpoint and evaluated with identical prompts and seeds.
AblationReport run_ablate(const RunConfig& cfg, const std::vector<std::string>& order);

nlohmann::json ablation_to_json(const AblationReport& r);
std::string ablation_table(const AblationReport& r);

}  // namespace motionlab
