#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "motionlab/clip.hpp"
#include "motionlab/rng.hpp"

namespace motionlab {

struct ParameterError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RenderError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Shape { circle, square, triangle, star, cross, ring };
enum class Color { red, green, blue, yellow, magenta, cyan };

enum class MotionFamily {
    slide_left,
    slide_right,
    bounce,
    spin,
    grow_shrink,
    figure_eight,
    zigzag,
    spiral_in,
    hop_pause,
    orbit,
};

enum class MotionCategory { COMMON, UNCOMMON };

constexpr int kShapeCount = 6;
constexpr int kColorCount = 6;
constexpr int kFamilyCount = 10;

const std::array<Shape, kShapeCount>& all_shapes();
const std::array<Color, kColorCount>& all_colors();
const std::array<MotionFamily, kFamilyCount>& all_families();
std::vector<MotionFamily> families_of(MotionCategory cat);

MotionCategory family_category(MotionFamily f);

const char* to_string(Shape s);
const char* to_string(Color c);
const char* to_string(MotionFamily f);
const char* to_string(MotionCategory c);
Shape shape_from_string(const std::string& s);
Color color_from_string(const std::string& s);
MotionFamily family_from_string(const std::string& s);

// Anchor RGB for each color; rendered shapes use these scaled by a
// per-clip shade factor. All anchors are strongly saturated so the
// channel spread separates them from the gray background.
std::array<double, 3> color_rgb(Color c);

struct SubjectSpec {
    Shape shape = Shape::circle;
    Color color = Color::red;
    double size = 0.22;  // fraction of frame width, in [0.15, 0.3]
};

// Family-specific parameter slots. amplitude/period/phase follow each
// family's documented meaning; (x0, y0) anchor the trajectory.
struct MotionParams {
    double amplitude = 0.0;
    double period = 0.0;
    double phase = 0.0;
    double x0 = 0.5;
    double y0 = 0.5;
};

struct MotionSpec {
    MotionFamily family = MotionFamily::slide_left;
    MotionParams params;
    MotionCategory category() const { return family_category(family); }
};

// Pose of the subject at frame t: center in unit frame coords (y down),
// scale multiplier on subject size, rotation in radians.
struct PosePoint {
    double cx = 0.5;
    double cy = 0.5;
    double scale = 1.0;
    double angle = 0.0;
};

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return v >= lo && v <= hi; }
    double mid() const { return 0.5 * (lo + hi); }
};

// Documented sampling ranges per family. Families that ignore a slot
// report a degenerate {0,0} range for it.
ParamRange amplitude_range(MotionFamily f);
ParamRange period_range(MotionFamily f);
ParamRange phase_range(MotionFamily f);
ParamRange x0_range(MotionFamily f);
ParamRange y0_range(MotionFamily f);
bool family_uses_period(MotionFamily f);
bool family_uses_phase(MotionFamily f);

// Deterministic trajectory map. t indexes frames [0, VideoClip::F).
// Time is normalized as u = t / (F-1), so u spans [0, 1] inclusive.
PosePoint motion_pose(const MotionSpec& motion, int t);

void validate_motion(const MotionSpec& motion);  // throws ParameterError
void validate_subject(const SubjectSpec& subject);

MotionSpec sample_motion(MotionFamily family, Rng& rng);
SubjectSpec sample_subject(Rng& rng);

// Canonical motion phrase, at most 3 words (the prompt slot holds the
// phrase plus an end marker in 4 token positions).
std::string motion_phrase(MotionFamily f);
// "a <color> <shape> <motion phrase>"
std::string prompt_text(const SubjectSpec& subject, MotionFamily family);

// Unit-square point-in-shape test in the shape's local frame, with
// |px|,|py| <= 1 covering the shape's bounding box.
bool inside_shape(Shape s, double px, double py);

// Rasterizes the subject along the motion trajectory over a static
// noise background. background_seed fixes the background texture; seed
// fixes shade and sub-pixel jitter. Deterministic in all arguments.
VideoClip render_clip(const SubjectSpec& subject, const MotionSpec& motion,
                      uint64_t background_seed, uint64_t seed);

}  // namespace motionlab
