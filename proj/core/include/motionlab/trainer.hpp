#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionlab/adapter.hpp"
#include "motionlab/backbone.hpp"
#include "motionlab/dual_embedding.hpp"
#include "motionlab/manifest.hpp"
#include "motionlab/text_encoder.hpp"

namespace motionlab {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class SampleSource { EXEMPLAR, SPV };
const char* to_string(SampleSource s);

enum class SpvFreezeScope { motion_path, motion_embedding_only };
const char* to_string(SpvFreezeScope s);
SpvFreezeScope spv_freeze_scope_from_string(const std::string& s);

struct TrainSample {
    VideoClip clip;
    PromptSpec prompt;
    SampleSource source = SampleSource::EXEMPLAR;
};

struct TrainConfig {
    double alpha = 0.75;
    double lr = 2e-5;
    int iterations = 2000;
    int batch_size = 4;
    uint64_t seed = 0;
    int adapter_rank = 4;
    SpvFreezeScope spv_freeze_scope = SpvFreezeScope::motion_path;
    AdamWConfig optimizer;  // lr field here wins over optimizer.lr

    void validate() const;
};

// Frozen base model (encoder + backbone) plus the optional customization
// head (dual embedding + adapters) with their parameter stores.
template <typename S>
struct ModelStateT {
    ModelConfig cfg;
    Vocab vocab;
    TextEncoder<S> encoder;
    Backbone<S> backbone;
    ParamStore<S> base;

    CustomComponents components{false, false, false, false};
    int adapter_rank = 4;
    std::optional<DualEmbedding<S>> dual;
    std::optional<AdapterBank<S>> adapters;
    ParamStore<S> custom;

    explicit ModelStateT(ModelConfig cfg_in);

    void init_base(uint64_t seed, bool zero_head = true);
    // Registers and initializes the custom head. Base parameters must
    // already hold their final (pretrained) values: the motion residual is
    // seeded from the frozen encoder's phrase embedding of `target`.
    void enable_custom(CustomComponents comps, int rank, MotionFamily target, uint64_t seed);

    bool has_custom() const { return components.any(); }

    // Prompt context for the backbone: encoder output, composed through
    // the custom head when present. Non-recording.
    Mat<S> prompt_context(const PromptSpec& prompt) const;

    // Graph-building variant used by training steps.
    ad::Var prompt_context_var(ad::Graph<S>& g, const PromptSpec& prompt, GradStore<S>* base_gs,
                               GradStore<S>* custom_gs) const;

    // Binder exposing the custom adapters to backbone forward passes.
    // Returns an empty binder when adapters are absent.
    AdapterBinder<S> adapter_binder(GradStore<S>* custom_gs) const;
};

using ModelState = ModelStateT<float>;
extern template struct ModelStateT<float>;
extern template struct ModelStateT<double>;

// Trainable custom-parameter names for a batch source. EXEMPLAR trains
// every custom parameter; SPV freezes the motion path (or just the motion
// residual under the narrow scope).
std::vector<std::string> select_trainables(const ModelState& m, SampleSource source,
                                           SpvFreezeScope scope = SpvFreezeScope::motion_path);
uint64_t mask_fingerprint(const std::vector<std::string>& names);

struct StepResult {
    double loss = 0.0;
    double grad_norm = 0.0;
};

// One masked update: diffusion loss over the homogeneous batch,
// backprop into custom parameters only, AdamW over the masked subset.
StepResult training_step(ModelState& m, AdamW<float>& opt, const std::vector<TrainSample>& batch,
                         const std::vector<std::string>& mask, uint64_t step_seed);

struct StepRecord {
    int step = 0;
    SampleSource source = SampleSource::EXEMPLAR;
    double loss = 0.0;
    uint64_t mask_fingerprint = 0;
    double wall_ms = 0.0;
};

std::string to_jsonl(const StepRecord& rec);

// Per-step source decision: u < alpha selects EXEMPLAR. Pure function of
// (seed, step).
SampleSource draw_source(uint64_t seed, int step, double alpha);

struct CustomizeInputs {
    DatasetManifest exemplars;
    DatasetManifest spv;
    std::string data_root;  // manifest clip paths resolve against this
    TrainConfig config;
    CustomComponents components;
    std::string out_checkpoint;        // final custom checkpoint path
    std::string step_log;              // StepRecord JSONL path (append on resume)
    std::optional<std::string> resume; // prior custom checkpoint to continue
    std::function<void(const StepRecord&)> on_step;  // optional observer
};

struct CustomizeResult {
    int steps_run = 0;
    double exemplar_fraction = 0.0;
    double first_window_loss = 0.0;   // mean loss, leading 50 exemplar steps
    double last_window_loss = 0.0;    // mean loss, trailing 50 exemplar steps
    uint64_t base_hash = 0;
    MotionFamily target = MotionFamily::figure_eight;
};

// Runs the alternating customization loop on a loaded base model. The
// custom head must not be enabled yet (customize owns its creation, or
// restores it from the resume checkpoint).
CustomizeResult customize(ModelState& m, const CustomizeInputs& in);

// Restores a customization checkpoint onto a loaded base model (enables
// the head it describes). Verifies the recorded base hash.
void load_custom_checkpoint(ModelState& m, const std::string& path);

struct PretrainConfig {
    int iterations = 3000;
    int batch_size = 8;
    double lr = 1e-3;
    uint64_t seed = 0;
    AdamWConfig optimizer;

    void validate() const;
};

struct PretrainResult {
    int steps_run = 0;
    double initial_loss = 0.0;
    double first_window_loss = 0.0;  // leading 100 steps
    double last_window_loss = 0.0;   // trailing 100 steps
    uint64_t base_hash = 0;
};

// Joint encoder + backbone training on the rendered corpus; writes the
// base checkpoint (parameters, config echo, schedule constants, hashes).
PretrainResult pretrain(ModelState& m, const DatasetManifest& corpus,
                        const std::string& data_root, const PretrainConfig& cfg,
                        const std::string& out_checkpoint, const std::string& step_log,
                        const std::function<void(const StepRecord&)>& on_step = nullptr);

// Writes / loads the frozen base model container.
void save_base_checkpoint(const std::string& path, const ModelState& m,
                          const nlohmann::json& extra_meta);
ModelState load_base_checkpoint(const std::string& path);

struct FdOffender {
    std::string name;
    size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct FdReport {
    int checked = 0;
    double max_rel_err = 0.0;
    bool pass = true;
    std::vector<FdOffender> worst;  // descending by rel_err, up to 10
};

// Probe configuration for gradient audits: small dims, every block type
// present once.
ModelConfig probe_config();

// Central-difference audit of the customization loss gradient in double
// precision over `sample_size` random scalar coordinates of the custom
// parameters. corrupt_gradients perturbs one analytic gradient entry to
// prove the harness can fail.
FdReport finite_difference_audit(const ModelConfig& cfg, CustomComponents comps, int rank,
                                 const std::vector<TrainSample>& probe_batch, int sample_size,
                                 uint64_t seed, double threshold = 1e-4,
                                 bool corrupt_gradients = false);

}  // namespace motionlab
