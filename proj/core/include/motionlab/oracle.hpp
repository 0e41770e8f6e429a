#pragma once

#include <array>
#include <limits>
#include <string>

#include "motionlab/clip.hpp"
#include "motionlab/world.hpp"

namespace motionlab {

// Per-frame subject measurements extracted by saturation segmentation.
// Coordinates are unit-frame; scale is the per-frame size multiplier
// normalized to mean 1 over valid frames; angle is cumulative rotation
// relative to frame 0 (radians), only meaningful when angle_reliable.
struct PathTrack {
    std::array<double, VideoClip::F> cx{};
    std::array<double, VideoClip::F> cy{};
    std::array<double, VideoClip::F> scale{};
    std::array<double, VideoClip::F> angle{};
    std::array<double, VideoClip::F> mass{};  // color-normalized coverage, pixels
    std::array<bool, VideoClip::F> valid{};
    int valid_count = 0;
    bool angle_reliable = false;
};

PathTrack extract_track(const VideoClip& clip);

struct MotionVerdict {
    std::string family = "none";
    double confidence = 0.0;
    double residual = std::numeric_limits<double>::infinity();
    // Normalized fit residual per family, indexed in all_families() order.
    std::array<double, kFamilyCount> residuals{};
};

// Fits every family's trajectory template to the extracted track
// (grid search over period/phase, closed-form least squares for
// amplitudes and offsets, amplitudes clamped to documented ranges) and
// returns the family with minimal normalized residual. Confidence is the
// softmin weight of the winner at temperature 0.1.
MotionVerdict oracle_classify_motion(const VideoClip& clip);

struct SubjectVerdict {
    std::string shape = "none";
    std::string color = "none";
    double confidence = 0.0;
};

// Color by nearest anchor hue of the segmented foreground; shape by
// rotation-invariant radial/moment descriptors matched against templates
// re-rendered at the measured size. Ring vs circle resolves through the
// interior-coverage (hole) descriptor.
SubjectVerdict oracle_classify_subject(const VideoClip& clip);

// Fixed 32-dimensional deterministic clip descriptor. Layout:
//   [0..3]   centroid-x cubic fit coefficients (basis 1, u, u^2, u^3)
//   [4..7]   centroid-y cubic fit coefficients
//   [8..11]  scale path mean, std, min, max
//   [12..15] net rotation, mean |per-frame rotation|, rotation std,
//            angle-reliable flag
//   [16..21] foreground color histogram over the six color anchors
//   [22..25] centroid speed mean, std, max, total path length
//   [26..31] background mean, background std, foreground area fraction
//            mean, area fraction std, overall pixel mean, valid-frame
//            fraction
constexpr int kClipFeatureDim = 32;
std::array<double, kClipFeatureDim> clip_features(const VideoClip& clip);

}  // namespace motionlab
