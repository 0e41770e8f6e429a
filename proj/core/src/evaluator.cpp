#include "motionlab/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

namespace motionlab {

namespace {

constexpr double kFgSpread = 0.05;   // channel spread above which a pixel is foreground
constexpr double kFlowGate = 0.5;    // px/frame threshold for dynamic degree
constexpr int kBlock = 8;            // block-matching block size
constexpr int kSearch = 3;           // block-matching search radius, px

double luminance(const VideoClip& c, int f, int y, int x) {
    return (static_cast<double>(c.at(f, y, x, 0)) + c.at(f, y, x, 1) + c.at(f, y, x, 2)) / 3.0;
}

bool is_foreground(const VideoClip& c, int f, int y, int x) {
    float r = c.at(f, y, x, 0), g = c.at(f, y, x, 1), b = c.at(f, y, x, 2);
    return static_cast<double>(std::max({r, g, b}) - std::min({r, g, b})) > kFgSpread;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Cosine similarity with zero-vector conventions: two zero vectors are
// identical (1), one zero vector is maximally different (0).
double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na < 1e-24 && nb < 1e-24) return 1.0;
    if (na < 1e-24 || nb < 1e-24) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---- block-matching flow ---------------------------------------------------

struct BlockFlow {
    double magnitude = 0.0;
    bool foreground = false;
};

// Best integer displacement of each 8x8 block of frame f within frame
// f+1, by channel-summed SAD. (0,0) is evaluated first and only strict
// improvements replace it, so exact matches report zero flow.
std::vector<BlockFlow> transition_flow(const VideoClip& c, int f) {
    constexpr int H = VideoClip::H, W = VideoClip::W;
    std::vector<BlockFlow> out;
    for (int by = 0; by + kBlock <= H; by += kBlock) {
        for (int bx = 0; bx + kBlock <= W; bx += kBlock) {
            BlockFlow bf;
            for (int y = by; y < by + kBlock && !bf.foreground; ++y)
                for (int x = bx; x < bx + kBlock && !bf.foreground; ++x)
                    if (is_foreground(c, f, y, x) || is_foreground(c, f + 1, y, x))
                        bf.foreground = true;

            double best = std::numeric_limits<double>::infinity();
            int best_dx = 0, best_dy = 0;
            auto sad_at = [&](int dy, int dx) {
                double acc = 0;
                for (int y = 0; y < kBlock; ++y)
                    for (int x = 0; x < kBlock; ++x)
                        for (int ch = 0; ch < 3; ++ch)
                            acc += std::abs(
                                static_cast<double>(c.at(f, by + y, bx + x, ch)) -
                                c.at(f + 1, by + y + dy, bx + x + dx, ch));
                return acc;
            };
            best = sad_at(0, 0);
            for (int dy = -kSearch; dy <= kSearch; ++dy) {
                if (by + dy < 0 || by + dy + kBlock > H) continue;
                for (int dx = -kSearch; dx <= kSearch; ++dx) {
                    if (bx + dx < 0 || bx + dx + kBlock > W) continue;
                    if (dx == 0 && dy == 0) continue;
                    double s = sad_at(dy, dx);
                    if (s < best) {
                        best = s;
                        best_dx = dx;
                        best_dy = dy;
                    }
                }
            }
            bf.magnitude = std::sqrt(static_cast<double>(best_dx * best_dx + best_dy * best_dy));
            out.push_back(bf);
        }
    }
    return out;
}

// Mean block flow of one transition, restricted to blocks touching the
// foreground; all blocks when nothing is segmented.
double transition_mean_flow(const VideoClip& c, int f) {
    std::vector<BlockFlow> blocks = transition_flow(c, f);
    double acc = 0;
    int n = 0;
    for (const BlockFlow& b : blocks)
        if (b.foreground) {
            acc += b.magnitude;
            ++n;
        }
    if (n == 0) {
        for (const BlockFlow& b : blocks) acc += b.magnitude;
        n = static_cast<int>(blocks.size());
    }
    return n > 0 ? acc / n : 0.0;
}

// ---- per-frame features ------------------------------------------------------

struct FgFeature {
    bool valid = false;
    std::vector<double> v;  // mean r,g,b; coverage; radial rms; mean spread
};

FgFeature foreground_feature(const VideoClip& c, int f) {
    constexpr int H = VideoClip::H, W = VideoClip::W;
    FgFeature out;
    double sr = 0, sg = 0, sb = 0, sspread = 0, sx = 0, sy = 0;
    int n = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (is_foreground(c, f, y, x)) {
                float r = c.at(f, y, x, 0), g = c.at(f, y, x, 1), b = c.at(f, y, x, 2);
                sr += r;
                sg += g;
                sb += b;
                sspread += std::max({r, g, b}) - std::min({r, g, b});
                sx += x;
                sy += y;
                ++n;
            }
    if (n == 0) return out;
    double cx = sx / n, cy = sy / n;
    double rr = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (is_foreground(c, f, y, x))
                rr += (x - cx) * (x - cx) + (y - cy) * (y - cy);
    out.valid = true;
    out.v = {sr / n,
             sg / n,
             sb / n,
             static_cast<double>(n) / (H * W),
             std::sqrt(rr / n) / 16.0,
             sspread / n};
    return out;
}

std::vector<double> frame_grid_feature(const VideoClip& c, int f) {
    constexpr int G = 8, CELL = VideoClip::H / G;
    std::vector<double> v(G * G, 0.0);
    for (int gy = 0; gy < G; ++gy)
        for (int gx = 0; gx < G; ++gx) {
            double acc = 0;
            for (int y = gy * CELL; y < (gy + 1) * CELL; ++y)
                for (int x = gx * CELL; x < (gx + 1) * CELL; ++x) acc += luminance(c, f, y, x);
            v[static_cast<size_t>(gy) * G + gx] = acc / (CELL * CELL);
        }
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    for (double& x : v) x -= mean;
    return v;
}

double mean_of(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stdev_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    double m = mean_of(xs);
    double acc = 0;
    for (double x : xs) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

// ---- accuracies --------------------------------------------------------------

double motion_accuracy(const std::vector<VideoClip>& clips, MotionFamily target) {
    if (clips.empty()) throw ParameterError("motion_accuracy needs at least one clip");
    int hits = 0;
    for (const VideoClip& c : clips) {
        MotionVerdict v = oracle_classify_motion(c);
        if (v.family == to_string(target) && v.confidence >= 0.5) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(clips.size());
}

double subject_accuracy(const std::vector<VideoClip>& clips, const SubjectSpec& target) {
    if (clips.empty()) throw ParameterError("subject_accuracy needs at least one clip");
    int hits = 0;
    for (const VideoClip& c : clips) {
        SubjectVerdict v = oracle_classify_subject(c);
        if (v.shape == to_string(target.shape) && v.color == to_string(target.color) &&
            v.confidence >= 0.5)
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(clips.size());
}

// ---- single-clip metrics -------------------------------------------------------

double motion_smoothness(const VideoClip& clip) {
    constexpr double kEps = 1e-6;
    PathTrack track = extract_track(clip);

    double d1 = 0, d2 = 0;
    int n1 = 0, n2 = 0;
    for (int t = 1; t < VideoClip::F; ++t) {
        if (track.valid[t] && track.valid[t - 1]) {
            double dx = track.cx[t] - track.cx[t - 1], dy = track.cy[t] - track.cy[t - 1];
            d1 += std::sqrt(dx * dx + dy * dy);
            ++n1;
        }
        if (t + 1 < VideoClip::F && track.valid[t - 1] && track.valid[t] &&
            track.valid[t + 1]) {
            double ax = track.cx[t + 1] - 2 * track.cx[t] + track.cx[t - 1];
            double ay = track.cy[t + 1] - 2 * track.cy[t] + track.cy[t - 1];
            d2 += std::sqrt(ax * ax + ay * ay);
            ++n2;
        }
    }

    if (n1 == 0 || n2 == 0) {
        // No trackable subject: same ratio over raw pixel differences.
        d1 = d2 = 0;
        for (int t = 1; t < VideoClip::F; ++t) {
            double acc1 = 0, acc2 = 0;
            for (int y = 0; y < VideoClip::H; ++y)
                for (int x = 0; x < VideoClip::W; ++x)
                    for (int ch = 0; ch < 3; ++ch) {
                        acc1 += std::abs(static_cast<double>(clip.at(t, y, x, ch)) -
                                         clip.at(t - 1, y, x, ch));
                        if (t + 1 < VideoClip::F)
                            acc2 += std::abs(static_cast<double>(clip.at(t + 1, y, x, ch)) -
                                             2.0 * clip.at(t, y, x, ch) +
                                             clip.at(t - 1, y, x, ch));
                    }
            d1 += acc1 / VideoClip::PIXELS * VideoClip::F;
            if (t + 1 < VideoClip::F) d2 += acc2 / VideoClip::PIXELS * VideoClip::F;
        }
        d1 /= (VideoClip::F - 1);
        d2 /= (VideoClip::F - 2);
    } else {
        d1 /= n1;
        d2 /= n2;
    }
    return 1.0 - clamp01(d2 / (d1 + kEps));
}

double subject_consistency(const VideoClip& clip) {
    std::vector<FgFeature> feats;
    feats.reserve(VideoClip::F);
    for (int f = 0; f < VideoClip::F; ++f) feats.push_back(foreground_feature(clip, f));

    double acc = 0;
    int n = 0;
    const FgFeature* prev = nullptr;
    for (const FgFeature& cur : feats) {
        if (!cur.valid) continue;
        if (prev) {
            acc += clamp01(cosine(prev->v, cur.v));
            ++n;
        }
        prev = &cur;
    }
    return n > 0 ? acc / n : 1.0;
}

double dynamic_degree(const VideoClip& clip) {
    int above = 0;
    for (int f = 0; f + 1 < VideoClip::F; ++f)
        if (transition_mean_flow(clip, f) > kFlowGate) ++above;
    return static_cast<double>(above) / (VideoClip::F - 1);
}

double background_consistency(const VideoClip& clip) {
    constexpr int H = VideoClip::H, W = VideoClip::W;
    std::vector<bool> bg(static_cast<size_t>(H) * W, true);
    for (int f = 0; f < VideoClip::F; ++f)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                if (is_foreground(clip, f, y, x)) bg[static_cast<size_t>(y) * W + x] = false;

    double acc = 0;
    int n = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!bg[static_cast<size_t>(y) * W + x]) continue;
            double s = 0, sq = 0;
            for (int f = 0; f < VideoClip::F; ++f) {
                double v = luminance(clip, f, y, x);
                s += v;
                sq += v * v;
            }
            double mean = s / VideoClip::F;
            double var = std::max(0.0, sq / VideoClip::F - mean * mean);
            acc += std::sqrt(var);
            ++n;
        }
    if (n == 0) {
        // Foreground everywhere: fall back to the whole frame.
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double s = 0, sq = 0;
                for (int f = 0; f < VideoClip::F; ++f) {
                    double v = luminance(clip, f, y, x);
                    s += v;
                    sq += v * v;
                }
                double mean = s / VideoClip::F;
                acc += std::sqrt(std::max(0.0, sq / VideoClip::F - mean * mean));
                ++n;
            }
    }
    return 1.0 - clamp01((acc / n) / 0.25);
}

double imaging_quality(const VideoClip& clip) {
    constexpr int H = VideoClip::H, W = VideoClip::W;
    double acc = 0;
    int n = 0;
    for (int f = 0; f < VideoClip::F; ++f)
        for (int y = 1; y + 1 < H; ++y)
            for (int x = 1; x + 1 < W; ++x) {
                double l = 4.0 * luminance(clip, f, y, x) - luminance(clip, f, y - 1, x) -
                           luminance(clip, f, y + 1, x) - luminance(clip, f, y, x - 1) -
                           luminance(clip, f, y, x + 1);
                acc += std::abs(l);
                ++n;
            }
    return clamp01((acc / n) / 0.5);
}

double flow_score(const VideoClip& clip) {
    double acc = 0;
    for (int f = 0; f + 1 < VideoClip::F; ++f) acc += transition_mean_flow(clip, f);
    return acc / (VideoClip::F - 1);
}

double temporal_consistency(const VideoClip& clip) {
    std::vector<std::vector<double>> grids;
    grids.reserve(VideoClip::F);
    for (int f = 0; f < VideoClip::F; ++f) grids.push_back(frame_grid_feature(clip, f));
    double acc = 0;
    for (int f = 1; f < VideoClip::F; ++f)
        acc += clamp01(0.5 * (cosine(grids[static_cast<size_t>(f) - 1],
                                     grids[static_cast<size_t>(f)]) +
                              1.0));
    return acc / (VideoClip::F - 1);
}

// ---- Frechet feature distance ---------------------------------------------------

namespace {

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

struct Gaussian {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;    // full covariance (unbiased)
    Eigen::VectorXd diag;     // per-dimension variance
    int n = 0;
};

Gaussian fit_gaussian(const std::vector<VideoClip>& clips) {
    Gaussian g;
    g.n = static_cast<int>(clips.size());
    Eigen::MatrixXd X(g.n, kClipFeatureDim);
    for (int i = 0; i < g.n; ++i) {
        std::array<double, kClipFeatureDim> f = clip_features(clips[static_cast<size_t>(i)]);
        for (int j = 0; j < kClipFeatureDim; ++j) X(i, j) = f[static_cast<size_t>(j)];
    }
    g.mu = X.colwise().mean();
    Eigen::MatrixXd C = X.rowwise() - g.mu.transpose();
    double denom = g.n > 1 ? static_cast<double>(g.n - 1) : 1.0;
    g.sigma = (C.transpose() * C) / denom;
    g.diag = g.sigma.diagonal();
    return g;
}

}  // namespace

double frechet_feature_distance(const std::vector<VideoClip>& a, const std::vector<VideoClip>& b,
                                bool* diagonal_fallback) {
    if (a.empty() || b.empty())
        throw ParameterError("frechet_feature_distance needs nonempty sets");
    Gaussian ga = fit_gaussian(a), gb = fit_gaussian(b);
    bool diagonal = ga.n < kClipFeatureDim + 1 || gb.n < kClipFeatureDim + 1;
    if (diagonal_fallback) *diagonal_fallback = diagonal;

    double d2 = (ga.mu - gb.mu).squaredNorm();
    if (diagonal) {
        for (int j = 0; j < kClipFeatureDim; ++j) {
            double sa = std::sqrt(std::max(0.0, ga.diag[j]));
            double sb = std::sqrt(std::max(0.0, gb.diag[j]));
            d2 += (sa - sb) * (sa - sb);
        }
        return std::max(0.0, d2);
    }
    Eigen::MatrixXd ra = psd_sqrt(ga.sigma);
    Eigen::MatrixXd inner = ra * gb.sigma * ra;
    inner = 0.5 * (inner + inner.transpose());  // kill asymmetric rounding
    double cross = psd_sqrt(inner).trace();
    d2 += ga.sigma.trace() + gb.sigma.trace() - 2.0 * cross;
    return std::max(0.0, d2);
}

// ---- text-video alignment ----------------------------------------------------

namespace {

std::vector<double> pooled_prompt_embedding(const ModelState& m, const std::string& text) {
    PromptSpec p = tokenize(text, m.vocab);
    MatF e = m.encoder.encode_value(p.token_ids, m.base);
    std::vector<double> pooled(static_cast<size_t>(e.cols), 0.0);
    for (int r = 0; r < e.rows; ++r)
        for (int c = 0; c < e.cols; ++c)
            pooled[static_cast<size_t>(c)] += static_cast<double>(e(r, c)) / e.rows;
    return pooled;
}

}  // namespace

double text_video_alignment(const ModelState& m, const VideoClip& clip,
                            const std::string& prompt_text) {
    SubjectVerdict sv = oracle_classify_subject(clip);
    MotionVerdict mv = oracle_classify_motion(clip);
    if (sv.shape == "none" || sv.color == "none" || mv.family == "none") return 0.0;
    std::string caption = "a " + sv.color + " " + sv.shape + " " +
                          motion_phrase(family_from_string(mv.family));
    if (caption == prompt_text) return 1.0;
    double cos = cosine(pooled_prompt_embedding(m, prompt_text),
                        pooled_prompt_embedding(m, caption));
    return clamp01(0.5 * (cos + 1.0));
}

// ---- corruption transforms ------------------------------------------------------

VideoClip blur_clip(const VideoClip& clip) {
    constexpr int H = VideoClip::H, W = VideoClip::W;
    static constexpr double k[3] = {0.25, 0.5, 0.25};
    VideoClip tmp = clip, out = clip;
    for (int f = 0; f < VideoClip::F; ++f)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c) {
                    double acc = 0;
                    for (int dx = -1; dx <= 1; ++dx) {
                        int xx = std::clamp(x + dx, 0, W - 1);
                        acc += k[dx + 1] * clip.at(f, y, xx, c);
                    }
                    tmp.at(f, y, x, c) = static_cast<float>(acc);
                }
    for (int f = 0; f < VideoClip::F; ++f)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int c = 0; c < 3; ++c) {
                    double acc = 0;
                    for (int dy = -1; dy <= 1; ++dy) {
                        int yy = std::clamp(y + dy, 0, H - 1);
                        acc += k[dy + 1] * tmp.at(f, yy, x, c);
                    }
                    out.at(f, y, x, c) = static_cast<float>(acc);
                }
    return out;
}

VideoClip recolor_tail(const VideoClip& clip) {
    VideoClip out = clip;
    for (int f = VideoClip::F / 2; f < VideoClip::F; ++f)
        for (int y = 0; y < VideoClip::H; ++y)
            for (int x = 0; x < VideoClip::W; ++x)
                if (is_foreground(clip, f, y, x)) {
                    float r = clip.at(f, y, x, 0), g = clip.at(f, y, x, 1),
                          b = clip.at(f, y, x, 2);
                    out.at(f, y, x, 0) = g;
                    out.at(f, y, x, 1) = b;
                    out.at(f, y, x, 2) = r;
                }
    return out;
}

VideoClip shuffle_clip(const VideoClip& clip, uint64_t seed) {
    std::array<int, VideoClip::F> order{};
    for (int i = 0; i < VideoClip::F; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(derive_seed(seed, "shuffle"));
    for (int i = VideoClip::F - 1; i > 0; --i) {
        int j = static_cast<int>(rng.uniform_int(0, i));
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    bool identity = true;
    for (int i = 0; i < VideoClip::F; ++i)
        if (order[static_cast<size_t>(i)] != i) identity = false;
    if (identity) std::swap(order[0], order[1]);

    VideoClip out;
    for (int f = 0; f < VideoClip::F; ++f)
        for (int y = 0; y < VideoClip::H; ++y)
            for (int x = 0; x < VideoClip::W; ++x)
                for (int c = 0; c < 3; ++c)
                    out.at(f, y, x, c) = clip.at(order[static_cast<size_t>(f)], y, x, c);
    return out;
}

VideoClip noise_clip(const VideoClip& clip, double sigma, uint64_t seed) {
    VideoClip out = clip;
    Rng rng(derive_seed(seed, "pixnoise"));
    for (float& p : out.pixels)
        p = static_cast<float>(clamp01(static_cast<double>(p) + rng.normal(0.0, sigma)));
    return out;
}

// ---- run-level evaluation --------------------------------------------------------

EvalPrompt make_eval_prompt(const SubjectSpec& subject, MotionFamily family) {
    return {subject, family, prompt_text(subject, family)};
}

namespace {

MetricStat stat_of(const std::vector<ClipScore>& clips, double ClipScore::*field) {
    std::vector<double> xs;
    xs.reserve(clips.size());
    for (const ClipScore& c : clips) xs.push_back(c.*field);
    return {mean_of(xs), stdev_of(xs)};
}

nlohmann::json stat_json(const MetricStat& s) {
    return {{"mean", s.mean}, {"stdev", s.stdev}};
}

}  // namespace

MetricsReport score_clips(const ModelState& m, const std::vector<EvalPrompt>& prompts,
                          const std::vector<std::vector<VideoClip>>& clips_per_prompt,
                          const EvalRunConfig& cfg, const std::vector<VideoClip>* reference) {
    if (prompts.empty()) throw ParameterError("score_clips needs at least one prompt");
    if (clips_per_prompt.size() != prompts.size())
        throw ParameterError("clip groups must align with prompts");

    MetricsReport r;
    r.prompt_count = static_cast<int>(prompts.size());
    r.seeds_per_prompt = cfg.seeds_per_prompt;
    r.sample_steps = cfg.sample_steps;
    r.seed = cfg.seed;

    std::vector<VideoClip> all;
    int motion_hits = 0, subject_hits = 0;
    for (size_t pi = 0; pi < prompts.size(); ++pi) {
        const EvalPrompt& p = prompts[pi];
        for (size_t si = 0; si < clips_per_prompt[pi].size(); ++si) {
            const VideoClip& clip = clips_per_prompt[pi][si];
            ClipScore cs;
            cs.prompt_index = static_cast<int>(pi);
            cs.seed_index = static_cast<int>(si);
            cs.sample_seed = derive_seed(derive_seed(cfg.seed, "prompt", pi), "sample", si);
            MotionVerdict mv = oracle_classify_motion(clip);
            cs.oracle_motion = mv.family;
            cs.motion_confidence = mv.confidence;
            cs.motion_match = mv.family == to_string(p.family) && mv.confidence >= 0.5;
            SubjectVerdict sv = oracle_classify_subject(clip);
            cs.oracle_shape = sv.shape;
            cs.oracle_color = sv.color;
            cs.subject_confidence = sv.confidence;
            cs.subject_match = sv.shape == to_string(p.subject.shape) &&
                               sv.color == to_string(p.subject.color) &&
                               sv.confidence >= 0.5;
            cs.smoothness = motion_smoothness(clip);
            cs.subject_consistency = subject_consistency(clip);
            cs.dynamic_degree = dynamic_degree(clip);
            cs.background_consistency = background_consistency(clip);
            cs.imaging_quality = imaging_quality(clip);
            cs.flow = flow_score(clip);
            cs.temporal_consistency = temporal_consistency(clip);
            cs.text_alignment = text_video_alignment(m, clip, p.text);
            if (cs.motion_match) ++motion_hits;
            if (cs.subject_match) ++subject_hits;
            r.clips.push_back(std::move(cs));
            all.push_back(clip);
        }
    }
    r.clip_total = static_cast<int>(r.clips.size());
    if (r.clip_total > 0) {
        r.motion_accuracy = static_cast<double>(motion_hits) / r.clip_total;
        r.subject_accuracy = static_cast<double>(subject_hits) / r.clip_total;
    }
    r.smoothness = stat_of(r.clips, &ClipScore::smoothness);
    r.subject_consistency = stat_of(r.clips, &ClipScore::subject_consistency);
    r.dynamic_degree = stat_of(r.clips, &ClipScore::dynamic_degree);
    r.background_consistency = stat_of(r.clips, &ClipScore::background_consistency);
    r.imaging_quality = stat_of(r.clips, &ClipScore::imaging_quality);
    r.flow = stat_of(r.clips, &ClipScore::flow);
    r.temporal_consistency = stat_of(r.clips, &ClipScore::temporal_consistency);
    r.text_alignment = stat_of(r.clips, &ClipScore::text_alignment);

    if (reference && !reference->empty() && !all.empty()) {
        r.has_ffd = true;
        r.ffd = frechet_feature_distance(all, *reference, &r.ffd_diagonal);
    }
    return r;
}

MetricsReport evaluate_run(const ModelState& m, const std::vector<EvalPrompt>& prompts,
                           const EvalRunConfig& cfg, const std::vector<VideoClip>* reference,
                           std::vector<std::vector<VideoClip>>* out_clips) {
    if (prompts.empty()) throw ParameterError("evaluate_run needs at least one prompt");
    if (cfg.seeds_per_prompt < 1) throw ParameterError("evaluate_run needs at least one seed");

    AdapterBinder<float> binder = m.adapter_binder(nullptr);
    std::vector<std::vector<VideoClip>> groups(prompts.size());
    for (size_t pi = 0; pi < prompts.size(); ++pi) {
        PromptSpec spec = tokenize(prompts[pi].text, m.vocab);
        MatF ctx = m.prompt_context(spec);
        groups[pi].reserve(static_cast<size_t>(cfg.seeds_per_prompt));
        for (int si = 0; si < cfg.seeds_per_prompt; ++si) {
            SampleOptions opt;
            opt.steps = cfg.sample_steps;
            opt.seed = derive_seed(derive_seed(cfg.seed, "prompt", pi), "sample",
                                   static_cast<uint64_t>(si));
            try {
                groups[pi].push_back(ddim_sample(m.backbone, m.base, ctx, opt, binder));
            } catch (const std::exception& e) {
                throw EvalError("sampling failed for prompt \"" + prompts[pi].text +
                                "\" seed index " + std::to_string(si) + ": " + e.what());
            }
        }
    }
    MetricsReport r = score_clips(m, prompts, groups, cfg, reference);
    if (out_clips) *out_clips = std::move(groups);
    return r;
}

// ---- report serialization -----------------------------------------------------

nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["config"] = {{"prompt_count", r.prompt_count},
                   {"seeds_per_prompt", r.seeds_per_prompt},
                   {"sample_steps", r.sample_steps},
                   {"seed", r.seed}};
    j["proxy_metrics"] = r.proxy_metrics;
    j["clip_total"] = r.clip_total;
    j["motion_accuracy"] = r.motion_accuracy;
    j["subject_accuracy"] = r.subject_accuracy;
    j["motion_smoothness"] = stat_json(r.smoothness);
    j["subject_consistency"] = stat_json(r.subject_consistency);
    j["dynamic_degree"] = stat_json(r.dynamic_degree);
    j["background_consistency"] = stat_json(r.background_consistency);
    j["imaging_quality"] = stat_json(r.imaging_quality);
    j["flow_score"] = stat_json(r.flow);
    j["temporal_consistency"] = stat_json(r.temporal_consistency);
    j["text_alignment"] = stat_json(r.text_alignment);
    if (r.has_ffd) {
        j["ffd"] = r.ffd;
        j["ffd_diagonal"] = r.ffd_diagonal;
    }
    nlohmann::json clips = nlohmann::json::array();
    for (const ClipScore& c : r.clips) {
        clips.push_back({{"prompt_index", c.prompt_index},
                         {"seed_index", c.seed_index},
                         {"sample_seed", c.sample_seed},
                         {"oracle_motion", c.oracle_motion},
                         {"motion_confidence", c.motion_confidence},
                         {"motion_match", c.motion_match},
                         {"oracle_shape", c.oracle_shape},
                         {"oracle_color", c.oracle_color},
                         {"subject_confidence", c.subject_confidence},
                         {"subject_match", c.subject_match},
                         {"motion_smoothness", c.smoothness},
                         {"subject_consistency", c.subject_consistency},
                         {"dynamic_degree", c.dynamic_degree},
                         {"background_consistency", c.background_consistency},
                         {"imaging_quality", c.imaging_quality},
                         {"flow_score", c.flow},
                         {"temporal_consistency", c.temporal_consistency},
                         {"text_alignment", c.text_alignment}});
    }
    j["clips"] = std::move(clips);
    return j;
}

std::string report_table(const MetricsReport& r) {
    std::ostringstream os;
    char line[128];
    os << "metric                      mean      stdev\n";
    std::snprintf(line, sizeof(line), "%-24s %8.4f\n", "motion_accuracy", r.motion_accuracy);
    os << line;
    std::snprintf(line, sizeof(line), "%-24s %8.4f\n", "subject_accuracy", r.subject_accuracy);
    os << line;
    auto row = [&](const char* name, const MetricStat& s) {
        std::snprintf(line, sizeof(line), "%-24s %8.4f   %8.4f\n", name, s.mean, s.stdev);
        os << line;
    };
    row("motion_smoothness", r.smoothness);
    row("subject_consistency", r.subject_consistency);
    row("dynamic_degree", r.dynamic_degree);
    row("background_consistency", r.background_consistency);
    row("imaging_quality", r.imaging_quality);
    row("flow_score", r.flow);
    row("temporal_consistency", r.temporal_consistency);
    row("text_alignment", r.text_alignment);
    if (r.has_ffd) {
        std::snprintf(line, sizeof(line), "%-24s %8.4f%s\n", "ffd", r.ffd,
                      r.ffd_diagonal ? "   (diagonal)" : "");
        os << line;
    }
    os << "clips: " << r.clip_total << "  (all metrics are analytic proxies)\n";
    return os.str();
}

}  // namespace motionlab
