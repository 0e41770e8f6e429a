#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionlab/oracle.hpp"
#include "motionlab/trainer.hpp"

namespace motionlab {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- per-clip proxy metrics ------------------------------------------------
// All scores are deterministic functions of pixel data. Each replaces an
// external learned judge with an analytic stand-in; reports carry a proxy
// disclosure flag, and absolute values are not comparable to published
// leaderboard numbers.

// Fraction of clips the motion oracle assigns to `target` with
// confidence at least 0.5. Throws ParameterError on an empty set.
double motion_accuracy(const std::vector<VideoClip>& clips, MotionFamily target);

// Fraction of clips whose subject verdict matches both shape and color
// with confidence at least 0.5. Throws ParameterError on an empty set.
double subject_accuracy(const std::vector<VideoClip>& clips, const SubjectSpec& target);

// 1 - clamp(mean second difference / (mean first difference + eps)).
// Differences are taken along the tracked centroid path (acceleration
// against speed); when tracking fails the same ratio is computed on raw
// pixel values. A static clip scores 1.
double motion_smoothness(const VideoClip& clip);

// Mean cosine similarity between consecutive per-frame foreground
// feature vectors (mean color, coverage, radial spread). Frames without
// foreground are skipped; fewer than two usable frames scores 1.
double subject_consistency(const VideoClip& clip);

// Fraction of frame transitions whose foreground mean flow magnitude
// exceeds 0.5 px (block matching, 8x8 blocks, +/-3 px search).
double dynamic_degree(const VideoClip& clip);

// 1 - clamp(mean temporal standard deviation of never-foreground pixels
// / 0.25). A static background scores 1.
double background_consistency(const VideoClip& clip);

// Mean absolute 4-neighbor Laplacian of luminance over frame interiors,
// divided by 0.5 and clamped to [0,1]. Blur strictly lowers it.
double imaging_quality(const VideoClip& clip);

// Mean over transitions of the foreground-restricted mean flow
// magnitude, in pixels per frame. Falls back to all blocks when a
// transition has no foreground.
double flow_score(const VideoClip& clip);

// Mean over transitions of the cosine similarity between consecutive
// mean-centered 8x8 downsampled luminance grids, mapped to [0,1].
double temporal_consistency(const VideoClip& clip);

// Frechet distance between Gaussian fits of the 32-d clip descriptors:
// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2). Sets smaller
// than 33 clips use diagonal covariances (reported via the flag).
// Throws ParameterError when either set is empty.
double frechet_feature_distance(const std::vector<VideoClip>& a,
                                const std::vector<VideoClip>& b,
                                bool* diagonal_fallback = nullptr);

// Cosine alignment between the pooled encoder embeddings of the prompt
// and of the oracle-decoded caption "a <color> <shape> <phrase>", mapped
// to [0,1]. Identical captions score exactly 1; an undecodable clip
// scores 0.
double text_video_alignment(const ModelState& m, const VideoClip& clip,
                            const std::string& prompt_text);

// ---- corruption transforms --------------------------------------------------
// Constructive counterexamples for the monotonicity properties: each
// strictly lowers its paired metric on any clip with visible structure.

VideoClip blur_clip(const VideoClip& clip);                       // imaging_quality
VideoClip recolor_tail(const VideoClip& clip);                    // subject_consistency
VideoClip shuffle_clip(const VideoClip& clip, uint64_t seed);     // temporal + smoothness
VideoClip noise_clip(const VideoClip& clip, double sigma, uint64_t seed);  // background

// ---- run-level evaluation ---------------------------------------------------

struct EvalPrompt {
    SubjectSpec subject;
    MotionFamily family = MotionFamily::figure_eight;
    std::string text;  // canonical grammar string for the pair above
};

EvalPrompt make_eval_prompt(const SubjectSpec& subject, MotionFamily family);

struct EvalRunConfig {
    int seeds_per_prompt = 10;
    int sample_steps = 50;
    uint64_t seed = 0;
};

struct ClipScore {
    int prompt_index = 0;
    int seed_index = 0;
    uint64_t sample_seed = 0;
    std::string oracle_motion;
    double motion_confidence = 0.0;
    bool motion_match = false;
    std::string oracle_shape;
    std::string oracle_color;
    double subject_confidence = 0.0;
    bool subject_match = false;
    double smoothness = 0.0;
    double subject_consistency = 0.0;
    double dynamic_degree = 0.0;
    double background_consistency = 0.0;
    double imaging_quality = 0.0;
    double flow = 0.0;
    double temporal_consistency = 0.0;
    double text_alignment = 0.0;
};

struct MetricStat {
    double mean = 0.0;
    double stdev = 0.0;  // population standard deviation over clips
};

struct MetricsReport {
    int prompt_count = 0;
    int seeds_per_prompt = 0;
    int sample_steps = 0;
    uint64_t seed = 0;
    int clip_total = 0;

    double motion_accuracy = 0.0;
    double subject_accuracy = 0.0;
    MetricStat smoothness, subject_consistency, dynamic_degree, background_consistency,
        imaging_quality, flow, temporal_consistency, text_alignment;

    bool has_ffd = false;
    bool ffd_diagonal = false;
    double ffd = 0.0;

    bool proxy_metrics = true;  // all judges are analytic stand-ins
    std::vector<ClipScore> clips;
};

nlohmann::json report_to_json(const MetricsReport& r);
std::string report_table(const MetricsReport& r);

// Scores already-materialized clips (clips_per_prompt[i][j] is prompt i,
// seed index j). The report is a pure function of its inputs, so a
// report regenerated from stored clips matches the original bit-exactly.
MetricsReport score_clips(const ModelState& m, const std::vector<EvalPrompt>& prompts,
                          const std::vector<std::vector<VideoClip>>& clips_per_prompt,
                          const EvalRunConfig& cfg,
                          const std::vector<VideoClip>* reference);

// Samples seeds_per_prompt clips per prompt from the model and scores
// them. Sample seeds derive from (cfg.seed, prompt index, seed index).
// out_clips, when given, receives the generated clips in scoring order.
MetricsReport evaluate_run(const ModelState& m, const std::vector<EvalPrompt>& prompts,
                           const EvalRunConfig& cfg, const std::vector<VideoClip>* reference,
                           std::vector<std::vector<VideoClip>>* out_clips = nullptr);

}  // namespace motionlab
