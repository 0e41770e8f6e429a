#include "motionlab/world.hpp"

#include <algorithm>
#include <cmath>

namespace motionlab {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Background: static per-pixel gray noise, identical across frames and
// channels. Gray means zero channel spread, which is what the
// segmentation oracle keys on.
constexpr double kBackgroundBase = 0.42;
constexpr double kBackgroundAmp = 0.08;

constexpr double kZigzagSweep = 0.45;   // fixed horizontal sweep
constexpr double kHopHeightRatio = 0.45;  // hop height as fraction of sweep

constexpr double kShadeLo = 0.92;  // per-clip color shade factor
constexpr double kShadeHi = 1.0;
constexpr double kJitter = 0.015;  // constant sub-pixel center offset

double frac(double v) { return v - std::floor(v); }

// Triangle wave with period 1, range [-1,1], tri(0)=0 rising.
double tri_wave(double v) { return 4.0 * std::abs(frac(v - 0.25) - 0.5) - 1.0; }

struct FamilyRanges {
    ParamRange amplitude, period, phase, x0, y0;
    bool uses_period = false;
    bool uses_phase = false;
};

const FamilyRanges& ranges_of(MotionFamily f) {
    static const FamilyRanges table[kFamilyCount] = {
        // slide_left
        {{0.35, 0.5}, {0, 0}, {0, 0}, {0.45, 0.55}, {0.3, 0.7}, false, false},
        // slide_right
        {{0.35, 0.5}, {0, 0}, {0, 0}, {0.45, 0.55}, {0.3, 0.7}, false, false},
        // bounce
        {{0.25, 0.38}, {1.0, 2.0}, {0.0, 0.4}, {0.3, 0.7}, {0.62, 0.72}, true, true},
        // spin (amplitude = revolutions)
        {{0.5, 1.0}, {0, 0}, {0.0, kTwoPi}, {0.4, 0.6}, {0.4, 0.6}, false, true},
        // grow_shrink
        {{0.25, 0.38}, {0.75, 1.25}, {0.0, 0.6}, {0.42, 0.58}, {0.42, 0.58}, true, true},
        // figure_eight
        {{0.18, 0.26}, {0.8, 1.2}, {0.0, kTwoPi}, {0.45, 0.55}, {0.45, 0.55}, true, true},
        // zigzag (amplitude = vertical extent; horizontal sweep fixed)
        {{0.12, 0.2}, {2.0, 3.0}, {0.0, 0.5}, {0.45, 0.55}, {0.4, 0.6}, true, true},
        // spiral_in (amplitude = initial radius)
        {{0.18, 0.26}, {1.0, 1.5}, {0.0, kTwoPi}, {0.45, 0.55}, {0.45, 0.55}, true, true},
        // hop_pause (amplitude = horizontal sweep)
        {{0.3, 0.45}, {0, 0}, {0, 0}, {0.45, 0.55}, {0.55, 0.7}, false, false},
        // orbit (amplitude = radius)
        {{0.2, 0.28}, {0.8, 1.2}, {0.0, kTwoPi}, {0.46, 0.54}, {0.46, 0.54}, true, true},
    };
    return table[static_cast<int>(f)];
}

}  // namespace

const std::array<Shape, kShapeCount>& all_shapes() {
    static const std::array<Shape, kShapeCount> v = {Shape::circle, Shape::square, Shape::triangle,
                                                     Shape::star,   Shape::cross,  Shape::ring};
    return v;
}

const std::array<Color, kColorCount>& all_colors() {
    static const std::array<Color, kColorCount> v = {Color::red,    Color::green,   Color::blue,
                                                     Color::yellow, Color::magenta, Color::cyan};
    return v;
}

const std::array<MotionFamily, kFamilyCount>& all_families() {
    static const std::array<MotionFamily, kFamilyCount> v = {
        MotionFamily::slide_left, MotionFamily::slide_right, MotionFamily::bounce,
        MotionFamily::spin,       MotionFamily::grow_shrink, MotionFamily::figure_eight,
        MotionFamily::zigzag,     MotionFamily::spiral_in,   MotionFamily::hop_pause,
        MotionFamily::orbit};
    return v;
}

std::vector<MotionFamily> families_of(MotionCategory cat) {
    std::vector<MotionFamily> out;
    for (MotionFamily f : all_families())
        if (family_category(f) == cat) out.push_back(f);
    return out;
}

MotionCategory family_category(MotionFamily f) {
    return static_cast<int>(f) < 5 ? MotionCategory::COMMON : MotionCategory::UNCOMMON;
}

const char* to_string(Shape s) {
    switch (s) {
        case Shape::circle: return "circle";
        case Shape::square: return "square";
        case Shape::triangle: return "triangle";
        case Shape::star: return "star";
        case Shape::cross: return "cross";
        case Shape::ring: return "ring";
    }
    return "?";
}

const char* to_string(Color c) {
    switch (c) {
        case Color::red: return "red";
        case Color::green: return "green";
        case Color::blue: return "blue";
        case Color::yellow: return "yellow";
        case Color::magenta: return "magenta";
        case Color::cyan: return "cyan";
    }
    return "?";
}

const char* to_string(MotionFamily f) {
    switch (f) {
        case MotionFamily::slide_left: return "slide_left";
        case MotionFamily::slide_right: return "slide_right";
        case MotionFamily::bounce: return "bounce";
        case MotionFamily::spin: return "spin";
        case MotionFamily::grow_shrink: return "grow_shrink";
        case MotionFamily::figure_eight: return "figure_eight";
        case MotionFamily::zigzag: return "zigzag";
        case MotionFamily::spiral_in: return "spiral_in";
        case MotionFamily::hop_pause: return "hop_pause";
        case MotionFamily::orbit: return "orbit";
    }
    return "?";
}

const char* to_string(MotionCategory c) {
    return c == MotionCategory::COMMON ? "COMMON" : "UNCOMMON";
}

Shape shape_from_string(const std::string& s) {
    for (Shape v : all_shapes())
        if (s == to_string(v)) return v;
    throw ParameterError("unknown shape: " + s);
}

Color color_from_string(const std::string& s) {
    for (Color v : all_colors())
        if (s == to_string(v)) return v;
    throw ParameterError("unknown color: " + s);
}

MotionFamily family_from_string(const std::string& s) {
    for (MotionFamily v : all_families())
        if (s == to_string(v)) return v;
    throw ParameterError("unknown motion family: " + s);
}

std::array<double, 3> color_rgb(Color c) {
    switch (c) {
        case Color::red: return {0.90, 0.10, 0.10};
        case Color::green: return {0.10, 0.80, 0.12};
        case Color::blue: return {0.15, 0.20, 0.95};
        case Color::yellow: return {0.95, 0.90, 0.10};
        case Color::magenta: return {0.90, 0.15, 0.85};
        case Color::cyan: return {0.10, 0.85, 0.90};
    }
    return {0, 0, 0};
}

ParamRange amplitude_range(MotionFamily f) { return ranges_of(f).amplitude; }
ParamRange period_range(MotionFamily f) { return ranges_of(f).period; }
ParamRange phase_range(MotionFamily f) { return ranges_of(f).phase; }
ParamRange x0_range(MotionFamily f) { return ranges_of(f).x0; }
ParamRange y0_range(MotionFamily f) { return ranges_of(f).y0; }
bool family_uses_period(MotionFamily f) { return ranges_of(f).uses_period; }
bool family_uses_phase(MotionFamily f) { return ranges_of(f).uses_phase; }

PosePoint motion_pose(const MotionSpec& motion, int t) {
    const MotionParams& p = motion.params;
    double u = static_cast<double>(t) / (VideoClip::F - 1);
    PosePoint pose;
    pose.cx = p.x0;
    pose.cy = p.y0;
    switch (motion.family) {
        case MotionFamily::slide_left:
            pose.cx = p.x0 - p.amplitude * (u - 0.5);
            break;
        case MotionFamily::slide_right:
            pose.cx = p.x0 + p.amplitude * (u - 0.5);
            break;
        case MotionFamily::bounce:
            pose.cy = p.y0 - p.amplitude * std::abs(std::sin(kPi * p.period * u + p.phase));
            break;
        case MotionFamily::spin:
            pose.angle = p.phase + kTwoPi * p.amplitude * u;
            break;
        case MotionFamily::grow_shrink:
            pose.scale = 1.0 + p.amplitude * std::sin(kTwoPi * p.period * u + p.phase);
            break;
        case MotionFamily::figure_eight: {
            double th = kTwoPi * p.period * u + p.phase;
            pose.cx = p.x0 + p.amplitude * std::sin(th);
            pose.cy = p.y0 + 0.5 * p.amplitude * std::sin(2.0 * th);
            break;
        }
        case MotionFamily::zigzag:
            pose.cx = p.x0 + kZigzagSweep * (u - 0.5);
            pose.cy = p.y0 + p.amplitude * tri_wave(p.period * u + p.phase);
            break;
        case MotionFamily::spiral_in: {
            double r = p.amplitude * (1.0 - 0.8 * u);
            double th = p.phase + kTwoPi * p.period * u;
            pose.cx = p.x0 + r * std::cos(th);
            pose.cy = p.y0 + r * std::sin(th);
            break;
        }
        case MotionFamily::hop_pause: {
            double h = kHopHeightRatio * p.amplitude;
            double xi, lift;
            if (u < 0.4) {
                double s = u / 0.4;
                xi = 0.5 * s;
                lift = 4.0 * s * (1.0 - s);
            } else if (u < 0.6) {
                xi = 0.5;
                lift = 0.0;
            } else {
                double s = (u - 0.6) / 0.4;
                xi = 0.5 + 0.5 * s;
                lift = 4.0 * s * (1.0 - s);
            }
            pose.cx = p.x0 + p.amplitude * (xi - 0.5);
            pose.cy = p.y0 - h * lift;
            break;
        }
        case MotionFamily::orbit: {
            double th = p.phase + kTwoPi * p.period * u;
            pose.cx = p.x0 + p.amplitude * std::cos(th);
            pose.cy = p.y0 + p.amplitude * std::sin(th);
            break;
        }
    }
    return pose;
}

void validate_motion(const MotionSpec& motion) {
    const FamilyRanges& r = ranges_of(motion.family);
    const MotionParams& p = motion.params;
    auto check = [&](const char* slot, double v, const ParamRange& range) {
        if (v < range.lo - 1e-9 || v > range.hi + 1e-9)
            throw ParameterError(std::string(to_string(motion.family)) + ": " + slot +
                                 " out of range");
    };
    check("amplitude", p.amplitude, r.amplitude);
    if (r.uses_period) check("period", p.period, r.period);
    if (r.uses_phase) check("phase", p.phase, r.phase);
    check("x0", p.x0, r.x0);
    check("y0", p.y0, r.y0);
}

void validate_subject(const SubjectSpec& subject) {
    if (subject.size < 0.15 - 1e-9 || subject.size > 0.3 + 1e-9)
        throw ParameterError("subject size out of range");
}

MotionSpec sample_motion(MotionFamily family, Rng& rng) {
    const FamilyRanges& r = ranges_of(family);
    MotionSpec m;
    m.family = family;
    // Fixed draw order keeps sampled specs reproducible per seed.
    m.params.amplitude = rng.uniform(r.amplitude.lo, r.amplitude.hi);
    m.params.period = r.uses_period ? rng.uniform(r.period.lo, r.period.hi) : 0.0;
    m.params.phase = r.uses_phase ? rng.uniform(r.phase.lo, r.phase.hi) : 0.0;
    m.params.x0 = rng.uniform(r.x0.lo, r.x0.hi);
    m.params.y0 = rng.uniform(r.y0.lo, r.y0.hi);
    return m;
}

SubjectSpec sample_subject(Rng& rng) {
    SubjectSpec s;
    s.shape = all_shapes()[static_cast<size_t>(rng.uniform_int(0, kShapeCount - 1))];
    s.color = all_colors()[static_cast<size_t>(rng.uniform_int(0, kColorCount - 1))];
    s.size = rng.uniform(0.15, 0.3);
    return s;
}

std::string motion_phrase(MotionFamily f) {
    switch (f) {
        case MotionFamily::slide_left: return "slides left";
        case MotionFamily::slide_right: return "slides right";
        case MotionFamily::bounce: return "bounces";
        case MotionFamily::spin: return "spins";
        case MotionFamily::grow_shrink: return "grows and shrinks";
        case MotionFamily::figure_eight: return "performs figure eight";
        case MotionFamily::zigzag: return "zigzags";
        case MotionFamily::spiral_in: return "spirals inward";
        case MotionFamily::hop_pause: return "hops then pauses";
        case MotionFamily::orbit: return "orbits";
    }
    return "?";
}

std::string prompt_text(const SubjectSpec& subject, MotionFamily family) {
    return std::string("a ") + to_string(subject.color) + " " + to_string(subject.shape) + " " +
           motion_phrase(family);
}

bool inside_shape(Shape s, double px, double py) {
    switch (s) {
        case Shape::circle:
            return px * px + py * py <= 1.0;
        case Shape::square:
            return std::max(std::abs(px), std::abs(py)) <= 1.0;
        case Shape::triangle: {
            // Equilateral, apex up (negative y), circumradius 1.
            constexpr double ax = 0.0, ay = -1.0;
            constexpr double bx = 0.8660254037844387, by = 0.5;
            constexpr double cx = -0.8660254037844387, cy = 0.5;
            auto side = [&](double x1, double y1, double x2, double y2) {
                return (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
            };
            double d1 = side(ax, ay, bx, by);
            double d2 = side(bx, by, cx, cy);
            double d3 = side(cx, cy, ax, ay);
            bool has_neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
            bool has_pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
            return !(has_neg && has_pos);
        }
        case Shape::star: {
            // 5-pointed star as a 10-vertex polygon, even-odd rule.
            static const std::array<std::array<double, 2>, 10> verts = [] {
                std::array<std::array<double, 2>, 10> v{};
                for (int i = 0; i < 10; ++i) {
                    double r = (i % 2 == 0) ? 1.0 : 0.45;
                    double a = -kPi / 2 + i * kPi / 5;
                    v[static_cast<size_t>(i)] = {r * std::cos(a), r * std::sin(a)};
                }
                return v;
            }();
            bool in = false;
            for (size_t i = 0, j = verts.size() - 1; i < verts.size(); j = i++) {
                double xi = verts[i][0], yi = verts[i][1];
                double xj = verts[j][0], yj = verts[j][1];
                if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi)
                    in = !in;
            }
            return in;
        }
        case Shape::cross:
            return (std::abs(px) <= 0.34 && std::abs(py) <= 1.0) ||
                   (std::abs(py) <= 0.34 && std::abs(px) <= 1.0);
        case Shape::ring: {
            double r2 = px * px + py * py;
            return r2 >= 0.55 * 0.55 && r2 <= 1.0;
        }
    }
    return false;
}

VideoClip render_clip(const SubjectSpec& subject, const MotionSpec& motion,
                      uint64_t background_seed, uint64_t seed) {
    validate_subject(subject);
    validate_motion(motion);

    constexpr int H = VideoClip::H, W = VideoClip::W, F = VideoClip::F;
    const double half = subject.size * 0.5;

    Rng style(derive_seed(seed, "clip_style"));
    const double shade = style.uniform(kShadeLo, kShadeHi);
    const double jx = style.uniform(-kJitter, kJitter);
    const double jy = style.uniform(-kJitter, kJitter);

    std::array<PosePoint, VideoClip::F> poses;
    for (int t = 0; t < F; ++t) {
        PosePoint pose = motion_pose(motion, t);
        pose.cx += jx;
        pose.cy += jy;
        double ext = half * pose.scale;
        if (pose.cx - ext < 0.0 || pose.cx + ext > 1.0 || pose.cy - ext < 0.0 ||
            pose.cy + ext > 1.0)
            throw RenderError("subject leaves the frame at frame " + std::to_string(t));
        poses[static_cast<size_t>(t)] = pose;
    }

    Rng bg_rng(derive_seed(background_seed, "background"));
    std::array<double, static_cast<size_t>(H) * W> bg{};
    for (auto& v : bg) v = kBackgroundBase + bg_rng.uniform(-kBackgroundAmp, kBackgroundAmp);

    const std::array<double, 3> anchor = color_rgb(subject.color);
    const std::array<double, 3> fg = {anchor[0] * shade, anchor[1] * shade, anchor[2] * shade};

    VideoClip clip;
    for (int t = 0; t < F; ++t) {
        const PosePoint& pose = poses[static_cast<size_t>(t)];
        const double h = half * pose.scale;
        const double ca = std::cos(-pose.angle), sa = std::sin(-pose.angle);
        const double cxp = pose.cx * W, cyp = pose.cy * H;
        const double extp = h * W + 1.0;  // pixel-space bound, AA margin
        const int x_lo = std::max(0, static_cast<int>(std::floor(cxp - extp)));
        const int x_hi = std::min(W - 1, static_cast<int>(std::ceil(cxp + extp)));
        const int y_lo = std::max(0, static_cast<int>(std::floor(cyp - extp)));
        const int y_hi = std::min(H - 1, static_cast<int>(std::ceil(cyp + extp)));
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                double v = bg[static_cast<size_t>(y) * W + x];
                double r = v, g = v, b = v;
                if (x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi) {
                    // 4x4 supersampled coverage; boundary pixels blend, which
                    // gives the oracle sub-pixel centroid information.
                    int hits = 0;
                    for (int sy = 0; sy < 4; ++sy) {
                        for (int sx = 0; sx < 4; ++sx) {
                            double fx = (x + (sx + 0.5) / 4.0) / W - pose.cx;
                            double fy = (y + (sy + 0.5) / 4.0) / H - pose.cy;
                            double lx = (ca * fx - sa * fy) / h;
                            double ly = (sa * fx + ca * fy) / h;
                            if (std::abs(lx) <= 1.0 && std::abs(ly) <= 1.0 &&
                                inside_shape(subject.shape, lx, ly))
                                ++hits;
                        }
                    }
                    if (hits > 0) {
                        double cov = hits / 16.0;
                        r = v + cov * (fg[0] - v);
                        g = v + cov * (fg[1] - v);
                        b = v + cov * (fg[2] - v);
                    }
                }
                clip.at(t, y, x, 0) = static_cast<float>(r);
                clip.at(t, y, x, 1) = static_cast<float>(g);
                clip.at(t, y, x, 2) = static_cast<float>(b);
            }
        }
    }
    return clip;
}

}  // namespace motionlab
