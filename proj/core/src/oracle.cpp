#include "motionlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace motionlab {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

constexpr double kSpreadFloor = 0.05;   // absolute channel-spread floor
constexpr double kMaskRatio = 0.15;     // mask threshold vs reference spread
constexpr double kMinMass = 1.5;        // minimum foreground mass per frame
constexpr double kSoftminTemp = 0.1;

// Residual variance floors: measurement noise scale per channel.
constexpr double kPosFloor = 0.01;    // unit-frame centroid noise
constexpr double kScaleFloor = 0.02;
constexpr double kAngleFloor = 0.05;  // radians

constexpr int kProfileBins = 48;

struct FramePixel {
    int x, y;
    double w;
};

struct FrameSeg {
    bool valid = false;
    double cx = 0, cy = 0;   // unit coords
    double cx_px = 0, cy_px = 0;
    double mass = 0;         // color-normalized coverage, in pixels
    double r_rms = 0;        // pixels
    double max_w = 0;
    std::vector<FramePixel> px;                 // largest component
    std::array<double, kProfileBins> profile{};  // normalized polar mass
    double mean_r = 0, mean_g = 0, mean_b = 0;   // interior mean color
    double bg_sum = 0, bg_sq = 0;                // non-mask luminance stats
    int bg_count = 0;
};

double pixel_spread(const VideoClip& clip, int f, int y, int x) {
    float r = clip.at(f, y, x, 0), g = clip.at(f, y, x, 1), b = clip.at(f, y, x, 2);
    return static_cast<double>(std::max({r, g, b}) - std::min({r, g, b}));
}

// Saturation segmentation of one frame. The background is gray (zero
// spread), the subject strongly saturated; mixed boundary pixels carry
// spread proportional to coverage, so the normalized spread recovers the
// rasterizer's sub-pixel coverage up to one global color factor.
FrameSeg segment_frame(const VideoClip& clip, int f) {
    constexpr int H = VideoClip::H, W = VideoClip::W;
    FrameSeg seg;

    std::array<double, static_cast<size_t>(H) * W> spread{};
    std::vector<double> candidates;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = pixel_spread(clip, f, y, x);
            spread[static_cast<size_t>(y) * W + x] = s;
            if (s > kSpreadFloor) candidates.push_back(s);
        }

    auto lum = [&](int y, int x) {
        return (clip.at(f, y, x, 0) + clip.at(f, y, x, 1) + clip.at(f, y, x, 2)) / 3.0;
    };

    if (candidates.empty()) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double v = lum(y, x);
                seg.bg_sum += v;
                seg.bg_sq += v * v;
            }
        seg.bg_count = H * W;
        return seg;
    }

    // Reference spread: 90th percentile of candidate spreads. Dividing by
    // it removes the color-dependent spread factor.
    std::sort(candidates.begin(), candidates.end());
    double ref = candidates[static_cast<size_t>(0.9 * (candidates.size() - 1))];
    double thresh = std::max(kSpreadFloor, kMaskRatio * ref);

    std::array<int, static_cast<size_t>(H) * W> comp{};
    comp.fill(-1);
    int ncomp = 0;
    std::vector<double> comp_mass;
    std::vector<std::vector<FramePixel>> comp_px;
    for (int y0 = 0; y0 < H; ++y0) {
        for (int x0 = 0; x0 < W; ++x0) {
            size_t i0 = static_cast<size_t>(y0) * W + x0;
            if (spread[i0] < thresh || comp[i0] != -1) continue;
            // BFS flood fill, 4-connectivity.
            std::vector<FramePixel> pixels;
            double mass = 0;
            std::vector<std::pair<int, int>> queue = {{x0, y0}};
            comp[i0] = ncomp;
            while (!queue.empty()) {
                auto [x, y] = queue.back();
                queue.pop_back();
                double w = std::min(1.1, spread[static_cast<size_t>(y) * W + x] / ref);
                pixels.push_back({x, y, w});
                mass += w;
                constexpr int dx[4] = {1, -1, 0, 0};
                constexpr int dy[4] = {0, 0, 1, -1};
                for (int k = 0; k < 4; ++k) {
                    int nx = x + dx[k], ny = y + dy[k];
                    if (nx < 0 || nx >= W || ny < 0 || ny >= H) continue;
                    size_t ni = static_cast<size_t>(ny) * W + nx;
                    if (spread[ni] < thresh || comp[ni] != -1) continue;
                    comp[ni] = ncomp;
                    queue.push_back({nx, ny});
                }
            }
            comp_mass.push_back(mass);
            comp_px.push_back(std::move(pixels));
            ++ncomp;
        }
    }

    int best = static_cast<int>(std::max_element(comp_mass.begin(), comp_mass.end()) -
                                comp_mass.begin());
    seg.px = std::move(comp_px[static_cast<size_t>(best)]);
    seg.mass = comp_mass[static_cast<size_t>(best)];

    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (comp[static_cast<size_t>(y) * W + x] == best) continue;
            double v = lum(y, x);
            seg.bg_sum += v;
            seg.bg_sq += v * v;
            ++seg.bg_count;
        }

    if (seg.mass < kMinMass) {
        seg.px.clear();
        return seg;
    }

    double sx = 0, sy = 0;
    for (const FramePixel& p : seg.px) {
        sx += p.w * (p.x + 0.5);
        sy += p.w * (p.y + 0.5);
        seg.max_w = std::max(seg.max_w, p.w);
    }
    seg.cx_px = sx / seg.mass;
    seg.cy_px = sy / seg.mass;
    seg.cx = seg.cx_px / W;
    seg.cy = seg.cy_px / H;

    double sr2 = 0;
    for (const FramePixel& p : seg.px) {
        double dx = p.x + 0.5 - seg.cx_px, dy = p.y + 0.5 - seg.cy_px;
        sr2 += p.w * (dx * dx + dy * dy);
    }
    seg.r_rms = std::sqrt(sr2 / seg.mass);

    // Polar mass profile with 2x2 sub-pixel splitting and linear bin
    // interpolation; used for frame-to-frame rotation tracking.
    for (const FramePixel& p : seg.px) {
        for (int sy2 = 0; sy2 < 2; ++sy2)
            for (int sx2 = 0; sx2 < 2; ++sx2) {
                double dx = p.x + 0.25 + 0.5 * sx2 - seg.cx_px;
                double dy = p.y + 0.25 + 0.5 * sy2 - seg.cy_px;
                if (dx * dx + dy * dy < 1e-12) continue;
                double phi = std::atan2(dy, dx);
                double pos = (phi + kPi) / kTwoPi * kProfileBins;
                int b0 = static_cast<int>(std::floor(pos)) % kProfileBins;
                double fracb = pos - std::floor(pos);
                int b1 = (b0 + 1) % kProfileBins;
                seg.profile[static_cast<size_t>(b0)] += p.w * 0.25 * (1.0 - fracb);
                seg.profile[static_cast<size_t>(b1)] += p.w * 0.25 * fracb;
            }
    }
    double psum = std::accumulate(seg.profile.begin(), seg.profile.end(), 0.0);
    if (psum > 0)
        for (double& v : seg.profile) v /= psum;

    // Interior color: pixels with near-full coverage, minimal bg mixing.
    double csum = 0;
    for (const FramePixel& p : seg.px) {
        if (p.w < 0.7 * seg.max_w) continue;
        seg.mean_r += p.w * clip.at(f, p.y, p.x, 0);
        seg.mean_g += p.w * clip.at(f, p.y, p.x, 1);
        seg.mean_b += p.w * clip.at(f, p.y, p.x, 2);
        csum += p.w;
    }
    if (csum > 0) {
        seg.mean_r /= csum;
        seg.mean_g /= csum;
        seg.mean_b /= csum;
    }

    seg.valid = true;
    return seg;
}

// ---- shape descriptors ------------------------------------------------

constexpr int kRadialBins = 12;
constexpr double kRadialReach = 2.4;  // bins span r in [0, reach * r_rms]

// Angular lobe harmonics k = 2..8. Magnitudes of the radius-weighted
// angular mass spectrum: rotation-invariant, and each polygon family
// lights up its own order (3 triangle, 4 square/cross, 5 star; circle
// and ring stay flat).
constexpr int kHarmonicLo = 2;
constexpr int kHarmonicCount = 7;
constexpr double kHarmWeight = 2.0;

struct ShapeDescriptor {
    std::array<double, kRadialBins> radial{};
    std::array<double, kHarmonicCount> harm{};
    double interior = 0;  // mean coverage within 0.45 r_rms (hole detector)
    double phi1 = 0;      // second-moment invariant
    double third = 0;     // third-moment invariant magnitude
};

// Descriptor over a weighted pixel set. Interior coverage scans the full
// disk around the centroid (not just component pixels) so holes count.
ShapeDescriptor describe(const std::vector<FramePixel>& px, double cx_px, double cy_px,
                         double r_rms, double max_w) {
    ShapeDescriptor d;
    if (px.empty() || r_rms <= 0 || max_w <= 0) return d;
    double mass = 0;
    double mu20 = 0, mu02 = 0, mu30 = 0, mu03 = 0, mu21 = 0, mu12 = 0;
    std::array<double, kHarmonicCount> hre{}, him{};
    double wr_sum = 0;
    for (const FramePixel& p : px) {
        double dx = p.x + 0.5 - cx_px, dy = p.y + 0.5 - cy_px;
        double r = std::sqrt(dx * dx + dy * dy);
        double pos = r / (kRadialReach * r_rms) * kRadialBins;
        if (pos < kRadialBins) {
            int b0 = static_cast<int>(std::floor(pos));
            double fracb = pos - b0;
            d.radial[static_cast<size_t>(b0)] += p.w * (1.0 - fracb);
            if (b0 + 1 < kRadialBins) d.radial[static_cast<size_t>(b0) + 1] += p.w * fracb;
        }
        mass += p.w;
        mu20 += p.w * dx * dx;
        mu02 += p.w * dy * dy;
        mu30 += p.w * dx * dx * dx;
        mu03 += p.w * dy * dy * dy;
        mu21 += p.w * dx * dx * dy;
        mu12 += p.w * dx * dy * dy;
        // Harmonics over a 2x2 sub-pixel split: the radius weight favors
        // the boundary, where the lobes live.
        for (int sy = 0; sy < 2; ++sy)
            for (int sx = 0; sx < 2; ++sx) {
                double sdx = p.x + 0.25 + 0.5 * sx - cx_px;
                double sdy = p.y + 0.25 + 0.5 * sy - cy_px;
                double sr = std::sqrt(sdx * sdx + sdy * sdy);
                if (sr < 1e-9) continue;
                double wq = 0.25 * p.w * sr;
                double cre = sdx / sr, cim = sdy / sr;
                double zre = cre, zim = cim;
                for (int k = kHarmonicLo; k < kHarmonicLo + kHarmonicCount; ++k) {
                    double nre = zre * cre - zim * cim;
                    double nim = zre * cim + zim * cre;
                    zre = nre;
                    zim = nim;
                    hre[static_cast<size_t>(k - kHarmonicLo)] += wq * zre;
                    him[static_cast<size_t>(k - kHarmonicLo)] += wq * zim;
                }
                wr_sum += wq;
            }
    }
    double rsum = std::accumulate(d.radial.begin(), d.radial.end(), 0.0);
    if (rsum > 0)
        for (double& v : d.radial) v /= rsum;
    if (wr_sum > 0)
        for (int k = 0; k < kHarmonicCount; ++k)
            d.harm[static_cast<size_t>(k)] =
                std::hypot(hre[static_cast<size_t>(k)], him[static_cast<size_t>(k)]) / wr_sum;

    if (mass > 0) {
        double n2 = mass * mass;
        double n3 = std::pow(mass, 2.5);
        d.phi1 = (mu20 + mu02) / n2;
        double a = (mu30 + mu12) / n3, b = (mu03 + mu21) / n3;
        d.third = std::sqrt(a * a + b * b);
    }

    // Interior coverage: dense grid over the central disk, weight looked
    // up from the pixel set (absent pixels count as zero coverage).
    std::array<std::array<double, VideoClip::W>, VideoClip::H> wmap{};
    for (const FramePixel& p : px) wmap[static_cast<size_t>(p.y)][static_cast<size_t>(p.x)] = p.w;
    double inner_r = 0.45 * r_rms;
    double acc = 0;
    int cnt = 0;
    for (int y = 0; y < VideoClip::H; ++y)
        for (int x = 0; x < VideoClip::W; ++x) {
            double dx = x + 0.5 - cx_px, dy = y + 0.5 - cy_px;
            if (dx * dx + dy * dy > inner_r * inner_r) continue;
            acc += wmap[static_cast<size_t>(y)][static_cast<size_t>(x)];
            ++cnt;
        }
    d.interior = cnt > 0 ? acc / (cnt * max_w) : 1.0;
    return d;
}

double descriptor_distance(const ShapeDescriptor& a, const ShapeDescriptor& b) {
    double d = 0;
    for (int i = 0; i < kRadialBins; ++i) {
        double e = a.radial[static_cast<size_t>(i)] - b.radial[static_cast<size_t>(i)];
        d += e * e;
    }
    for (int i = 0; i < kHarmonicCount; ++i) {
        double eh = kHarmWeight * (a.harm[static_cast<size_t>(i)] - b.harm[static_cast<size_t>(i)]);
        d += eh * eh;
    }
    double ei = a.interior - b.interior;
    double e1 = 10.0 * (a.phi1 - b.phi1);
    double e3 = 10.0 * (a.third - b.third);
    return d + ei * ei + e1 * e1 + e3 * e3;
}

// r_rms / half-extent per shape, measured once from a fine rasterization.
const std::array<double, kShapeCount>& unit_rrms() {
    static const std::array<double, kShapeCount> v = [] {
        std::array<double, kShapeCount> out{};
        constexpr int N = 192;
        constexpr double h = 80.0;
        for (int si = 0; si < kShapeCount; ++si) {
            Shape s = all_shapes()[static_cast<size_t>(si)];
            double mass = 0, sr2 = 0, sx = 0, sy = 0;
            std::vector<std::array<double, 3>> pts;
            for (int y = 0; y < N; ++y)
                for (int x = 0; x < N; ++x) {
                    double lx = (x + 0.5 - N / 2.0) / h, ly = (y + 0.5 - N / 2.0) / h;
                    if (std::abs(lx) <= 1 && std::abs(ly) <= 1 && inside_shape(s, lx, ly)) {
                        pts.push_back({x + 0.5, y + 0.5, 1.0});
                        mass += 1.0;
                        sx += x + 0.5;
                        sy += y + 0.5;
                    }
                }
            double cx = sx / mass, cy = sy / mass;
            for (auto& p : pts) {
                double dx = p[0] - cx, dy = p[1] - cy;
                sr2 += dx * dx + dy * dy;
            }
            out[static_cast<size_t>(si)] = std::sqrt(sr2 / mass) / h;
        }
        return out;
    }();
    return v;
}

// Renders a clean coverage template of `shape` with half-extent h_px
// centered at (cx_px, cy_px), matching the clip rasterizer's sampling.
std::vector<FramePixel> render_template(Shape shape, double h_px, double cx_px, double cy_px) {
    std::vector<FramePixel> px;
    int x_lo = std::max(0, static_cast<int>(std::floor(cx_px - h_px - 1)));
    int x_hi = std::min(VideoClip::W - 1, static_cast<int>(std::ceil(cx_px + h_px + 1)));
    int y_lo = std::max(0, static_cast<int>(std::floor(cy_px - h_px - 1)));
    int y_hi = std::min(VideoClip::H - 1, static_cast<int>(std::ceil(cy_px + h_px + 1)));
    for (int y = y_lo; y <= y_hi; ++y)
        for (int x = x_lo; x <= x_hi; ++x) {
            int hits = 0;
            for (int sy = 0; sy < 4; ++sy)
                for (int sx = 0; sx < 4; ++sx) {
                    double lx = (x + (sx + 0.5) / 4.0 - cx_px) / h_px;
                    double ly = (y + (sy + 0.5) / 4.0 - cy_px) / h_px;
                    if (std::abs(lx) <= 1 && std::abs(ly) <= 1 && inside_shape(shape, lx, ly))
                        ++hits;
                }
            if (hits > 0) px.push_back({x, y, hits / 16.0});
        }
    return px;
}

struct ShapeMatch {
    int shape_index = -1;
    double best = std::numeric_limits<double>::infinity();
    double second = std::numeric_limits<double>::infinity();
};

// Clean template descriptor for shape `si` sized to the frame's measured
// r_rms and centered at the measured sub-pixel phase, so both sides
// discretize alike. Returns false when the template degenerates.
bool template_descriptor(int si, const FrameSeg& seg, ShapeDescriptor& out) {
    double h_px = seg.r_rms / unit_rrms()[static_cast<size_t>(si)];
    h_px = std::clamp(h_px, 1.2, 10.0);
    std::vector<FramePixel> tpx =
        render_template(all_shapes()[static_cast<size_t>(si)], h_px, seg.cx_px, seg.cy_px);
    double mass = 0, sx = 0, sy = 0, maxw = 0;
    for (const FramePixel& p : tpx) {
        mass += p.w;
        sx += p.w * (p.x + 0.5);
        sy += p.w * (p.y + 0.5);
        maxw = std::max(maxw, p.w);
    }
    if (mass <= 0) return false;
    double tcx = sx / mass, tcy = sy / mass, sr2 = 0;
    for (const FramePixel& p : tpx) {
        double dx = p.x + 0.5 - tcx, dy = p.y + 0.5 - tcy;
        sr2 += p.w * (dx * dx + dy * dy);
    }
    double trms = std::sqrt(sr2 / mass);
    out = describe(tpx, tcx, tcy, trms, maxw);
    return true;
}

ShapeMatch match_shape(const FrameSeg& seg) {
    ShapeMatch m;
    if (!seg.valid) return m;
    ShapeDescriptor measured = describe(seg.px, seg.cx_px, seg.cy_px, seg.r_rms, seg.max_w);
    for (int si = 0; si < kShapeCount; ++si) {
        ShapeDescriptor td;
        if (!template_descriptor(si, seg, td)) continue;
        double dist = descriptor_distance(measured, td);
        if (dist < m.best) {
            m.second = m.best;
            m.best = dist;
            m.shape_index = si;
        } else if (dist < m.second) {
            m.second = dist;
        }
    }
    return m;
}

// ---- rotation tracking --------------------------------------------------

// Circular cross-correlation shift between consecutive polar profiles,
// parabolic sub-bin refinement, searched within +-10 bins (+-75 deg).
double profile_shift(const std::array<double, kProfileBins>& a,
                     const std::array<double, kProfileBins>& b) {
    auto corr = [&](int k) {
        double c = 0;
        for (int i = 0; i < kProfileBins; ++i)
            c += a[static_cast<size_t>(i)] *
                 b[static_cast<size_t>(((i + k) % kProfileBins + kProfileBins) % kProfileBins)];
        return c;
    };
    int best_k = 0;
    double best_c = -1;
    for (int k = -10; k <= 10; ++k) {
        double c = corr(k);
        if (c > best_c) {
            best_c = c;
            best_k = k;
        }
    }
    double cm = corr(best_k - 1), c0 = corr(best_k), cp = corr(best_k + 1);
    double denom = cm - 2 * c0 + cp;
    double delta = std::abs(denom) > 1e-15 ? 0.5 * (cm - cp) / denom : 0.0;
    delta = std::clamp(delta, -0.5, 0.5);
    return (best_k + delta) * kTwoPi / kProfileBins;
}

std::vector<FrameSeg> segment_all(const VideoClip& clip) {
    std::vector<FrameSeg> segs;
    segs.reserve(VideoClip::F);
    for (int f = 0; f < VideoClip::F; ++f) segs.push_back(segment_frame(clip, f));
    return segs;
}

PathTrack build_track(const std::vector<FrameSeg>& segs) {
    PathTrack track;
    double mass_sum = 0;
    int best_frame = -1;
    double best_mass = 0;
    for (int t = 0; t < VideoClip::F; ++t) {
        const FrameSeg& s = segs[static_cast<size_t>(t)];
        track.valid[static_cast<size_t>(t)] = s.valid;
        if (!s.valid) continue;
        ++track.valid_count;
        track.cx[static_cast<size_t>(t)] = s.cx;
        track.cy[static_cast<size_t>(t)] = s.cy;
        track.mass[static_cast<size_t>(t)] = s.mass;
        mass_sum += s.mass;
        if (s.mass > best_mass) {
            best_mass = s.mass;
            best_frame = t;
        }
    }
    if (track.valid_count == 0) return track;

    double mean_mass = mass_sum / track.valid_count;
    for (int t = 0; t < VideoClip::F; ++t)
        if (track.valid[static_cast<size_t>(t)])
            track.scale[static_cast<size_t>(t)] =
                std::sqrt(track.mass[static_cast<size_t>(t)] / mean_mass);

    // Rotation is unobservable for rotationally symmetric subjects; gate
    // the angle channel on the shape verdict of the heaviest frame.
    ShapeMatch sm = match_shape(segs[static_cast<size_t>(best_frame)]);
    bool symmetric = sm.shape_index < 0 ||
                     all_shapes()[static_cast<size_t>(sm.shape_index)] == Shape::circle ||
                     all_shapes()[static_cast<size_t>(sm.shape_index)] == Shape::ring;
    track.angle_reliable = !symmetric && track.valid_count >= 2;

    if (track.angle_reliable) {
        double theta = 0;
        int prev = -1;
        for (int t = 0; t < VideoClip::F; ++t) {
            if (!track.valid[static_cast<size_t>(t)]) continue;
            if (prev >= 0)
                theta += profile_shift(segs[static_cast<size_t>(prev)].profile,
                                       segs[static_cast<size_t>(t)].profile);
            track.angle[static_cast<size_t>(t)] = theta;
            prev = t;
        }
    }
    return track;
}

// ---- motion template fitting ---------------------------------------------

struct Series {
    std::vector<double> u, cx, cy, s, th;
};

Series series_of(const PathTrack& t) {
    Series out;
    for (int i = 0; i < VideoClip::F; ++i) {
        if (!t.valid[static_cast<size_t>(i)]) continue;
        out.u.push_back(static_cast<double>(i) / (VideoClip::F - 1));
        out.cx.push_back(t.cx[static_cast<size_t>(i)]);
        out.cy.push_back(t.cy[static_cast<size_t>(i)]);
        out.s.push_back(t.scale[static_cast<size_t>(i)]);
        out.th.push_back(t.angle[static_cast<size_t>(i)]);
    }
    return out;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
    double m = mean_of(v), acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / static_cast<double>(v.size());
}

double const_ssr(const std::vector<double>& v) {
    double m = mean_of(v), acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc;
}

// SSR of v against offset + coef * g with coef clamped into [lo, hi]
// (sign-free when allow_neg, clamping |coef| and keeping its sign).
double clamped_basis_ssr(const std::vector<double>& v, const std::vector<double>& g, double lo,
                         double hi, bool allow_neg) {
    size_t n = v.size();
    double gm = mean_of(g), vm = mean_of(v);
    double cov = 0, gv = 0;
    for (size_t i = 0; i < n; ++i) {
        cov += (g[i] - gm) * (v[i] - vm);
        gv += (g[i] - gm) * (g[i] - gm);
    }
    double coef = gv > 1e-12 ? cov / gv : 0.0;
    if (allow_neg) {
        double sign = coef >= 0 ? 1.0 : -1.0;
        coef = sign * std::clamp(std::abs(coef), lo, hi);
    } else {
        coef = std::clamp(coef, lo, hi);
    }
    double off = vm - coef * gm, ssr = 0;
    for (size_t i = 0; i < n; ++i) {
        double e = v[i] - off - coef * g[i];
        ssr += e * e;
    }
    return ssr;
}

// Joint two-channel fit with one shared amplitude:
// cx = x0 + A gx, cy = y0 + A gy; A clamped into [lo, hi].
// Returns the per-channel SSR pair (x, y).
std::pair<double, double> shared_amp_ssr(const Series& s, const std::vector<double>& gx,
                                         const std::vector<double>& gy, double lo, double hi) {
    size_t n = s.u.size();
    double gxm = mean_of(gx), gym = mean_of(gy);
    double cxm = mean_of(s.cx), cym = mean_of(s.cy);
    double num = 0, den = 0;
    for (size_t i = 0; i < n; ++i) {
        num += (gx[i] - gxm) * (s.cx[i] - cxm) + (gy[i] - gym) * (s.cy[i] - cym);
        den += (gx[i] - gxm) * (gx[i] - gxm) + (gy[i] - gym) * (gy[i] - gym);
    }
    double A = den > 1e-12 ? num / den : 0.0;
    A = std::clamp(A, lo, hi);
    double x0 = cxm - A * gxm, y0 = cym - A * gym, ssr_x = 0, ssr_y = 0;
    for (size_t i = 0; i < n; ++i) {
        double ex = s.cx[i] - x0 - A * gx[i];
        double ey = s.cy[i] - y0 - A * gy[i];
        ssr_x += ex * ex;
        ssr_y += ey * ey;
    }
    return {ssr_x, ssr_y};
}

double frac(double v) { return v - std::floor(v); }
double tri_wave(double v) { return 4.0 * std::abs(frac(v - 0.25) - 0.5) - 1.0; }

// 2-D grid minimization with two zoom rounds around the incumbent cell.
template <typename F>
double grid_min(double klo, double khi, int nk, double plo, double phi, int np, F&& eval) {
    double best = std::numeric_limits<double>::infinity();
    double bestk = klo, bestp = plo;
    for (int round = 0; round < 3; ++round) {
        double bk = bestk, bp = bestp;
        for (int i = 0; i < nk; ++i) {
            double k = nk > 1 ? klo + (khi - klo) * i / (nk - 1) : klo;
            for (int j = 0; j < np; ++j) {
                double p = np > 1 ? plo + (phi - plo) * j / (np - 1) : plo;
                double r = eval(k, p);
                if (r < best) {
                    best = r;
                    bk = k;
                    bp = p;
                }
            }
        }
        bestk = bk;
        bestp = bp;
        double dk = nk > 1 ? (khi - klo) / (nk - 1) : 0;
        double dp = np > 1 ? (phi - plo) / (np - 1) : 0;
        klo = bestk - dk;
        khi = bestk + dk;
        plo = bestp - dp;
        phi = bestp + dp;
        nk = nk > 1 ? 5 : 1;
        np = np > 1 ? 5 : 1;
    }
    return best;
}

struct Normalizers {
    double pos_x, pos_y, scale, angle;
    bool use_angle;
    size_t n;
};

// Residual for one family: per-channel SSRs, each normalized by that
// channel's measured variance plus a noise floor. Channels a family
// leaves static still count (via the constant fit), so families that
// "explain" motion with clamped amplitudes in the wrong channel pay for
// it in full. Amplitude and frequency bounds mirror the catalogue's
// documented parameter ranges; the scale and angle bounds carry a small
// margin because those channels are measured less directly.
double family_residual(MotionFamily fam, const Series& s, const Normalizers& nz) {
    size_t n = s.u.size();
    double dn = static_cast<double>(nz.n);
    auto norm_x = [&](double ssr) { return ssr / (dn * nz.pos_x); };
    auto norm_y = [&](double ssr) { return ssr / (dn * nz.pos_y); };
    std::vector<double> g(n), gy(n);
    double pos = 0;
    double scale = const_ssr(s.s) / (dn * nz.scale);
    double angle = nz.use_angle ? const_ssr(s.th) / (dn * nz.angle) : 0.0;

    switch (fam) {
        case MotionFamily::slide_left:
        case MotionFamily::slide_right: {
            for (size_t i = 0; i < n; ++i) g[i] = s.u[i] - 0.5;
            bool left = fam == MotionFamily::slide_left;
            pos = norm_x(clamped_basis_ssr(s.cx, g, left ? -0.5 : 0.35, left ? -0.35 : 0.5,
                                           false)) +
                  norm_y(const_ssr(s.cy));
            break;
        }
        case MotionFamily::bounce: {
            pos = norm_x(const_ssr(s.cx)) +
                  grid_min(1.0, 2.0, 11, 0.0, 0.4, 5, [&](double k, double p) {
                      for (size_t i = 0; i < n; ++i)
                          g[i] = -std::abs(std::sin(kPi * k * s.u[i] + p));
                      return norm_y(clamped_basis_ssr(s.cy, g, 0.25, 0.38, false));
                  });
            break;
        }
        case MotionFamily::spin: {
            pos = norm_x(const_ssr(s.cx)) + norm_y(const_ssr(s.cy));
            if (nz.use_angle) {
                for (size_t i = 0; i < n; ++i) g[i] = kTwoPi * s.u[i];
                angle = clamped_basis_ssr(s.th, g, 0.45, 1.05, true) / (dn * nz.angle);
            }
            break;
        }
        case MotionFamily::grow_shrink: {
            pos = norm_x(const_ssr(s.cx)) + norm_y(const_ssr(s.cy));
            scale = grid_min(0.75, 1.25, 11, 0.0, 0.6, 5, [&](double k, double p) {
                for (size_t i = 0; i < n; ++i) g[i] = std::sin(kTwoPi * k * s.u[i] + p);
                return clamped_basis_ssr(s.s, g, 0.22, 0.41, false) / (dn * nz.scale);
            });
            break;
        }
        case MotionFamily::figure_eight: {
            pos = grid_min(0.8, 1.2, 9, 0.0, kTwoPi, 16, [&](double k, double p) {
                for (size_t i = 0; i < n; ++i) {
                    double th = kTwoPi * k * s.u[i] + p;
                    g[i] = std::sin(th);
                    gy[i] = 0.5 * std::sin(2 * th);
                }
                auto [sx, sy] = shared_amp_ssr(s, g, gy, 0.18, 0.26);
                return norm_x(sx) + norm_y(sy);
            });
            break;
        }
        case MotionFamily::zigzag: {
            for (size_t i = 0; i < n; ++i) g[i] = s.u[i] - 0.5;
            double rx = norm_x(clamped_basis_ssr(s.cx, g, 0.43, 0.47, false));
            double ry = grid_min(2.0, 3.0, 11, 0.0, 0.5, 6, [&](double k, double p) {
                std::vector<double> h(n);
                for (size_t i = 0; i < n; ++i) h[i] = tri_wave(k * s.u[i] + p);
                return norm_y(clamped_basis_ssr(s.cy, h, 0.12, 0.2, false));
            });
            pos = rx + ry;
            break;
        }
        case MotionFamily::spiral_in: {
            pos = grid_min(1.0, 1.5, 9, 0.0, kTwoPi, 16, [&](double k, double p) {
                for (size_t i = 0; i < n; ++i) {
                    double r = 1.0 - 0.8 * s.u[i];
                    double th = kTwoPi * k * s.u[i] + p;
                    g[i] = r * std::cos(th);
                    gy[i] = r * std::sin(th);
                }
                auto [sx, sy] = shared_amp_ssr(s, g, gy, 0.18, 0.26);
                return norm_x(sx) + norm_y(sy);
            });
            break;
        }
        case MotionFamily::hop_pause: {
            for (size_t i = 0; i < n; ++i) {
                double u = s.u[i], xi, lift;
                if (u < 0.4) {
                    double t2 = u / 0.4;
                    xi = 0.5 * t2;
                    lift = 4 * t2 * (1 - t2);
                } else if (u < 0.6) {
                    xi = 0.5;
                    lift = 0;
                } else {
                    double t2 = (u - 0.6) / 0.4;
                    xi = 0.5 + 0.5 * t2;
                    lift = 4 * t2 * (1 - t2);
                }
                g[i] = xi - 0.5;
                gy[i] = -0.45 * lift;
            }
            auto [sx, sy] = shared_amp_ssr(s, g, gy, 0.3, 0.45);
            pos = norm_x(sx) + norm_y(sy);
            break;
        }
        case MotionFamily::orbit: {
            pos = grid_min(0.8, 1.2, 11, 0, 0, 1, [&](double k, double) {
                // cx = x0 + a cos - b sin, cy = y0 + b cos + a sin: linear
                // normal equations in (a, b) after centering.
                std::vector<double> C(n), S(n);
                for (size_t i = 0; i < n; ++i) {
                    C[i] = std::cos(kTwoPi * k * s.u[i]);
                    S[i] = std::sin(kTwoPi * k * s.u[i]);
                }
                double Cm = mean_of(C), Sm = mean_of(S);
                double cxm = mean_of(s.cx), cym = mean_of(s.cy);
                double num_a = 0, num_b = 0, den = 0;
                for (size_t i = 0; i < n; ++i) {
                    double Cc = C[i] - Cm, Sc = S[i] - Sm;
                    num_a += Cc * (s.cx[i] - cxm) + Sc * (s.cy[i] - cym);
                    num_b += Cc * (s.cy[i] - cym) - Sc * (s.cx[i] - cxm);
                    den += Cc * Cc + Sc * Sc;
                }
                double a = den > 1e-12 ? num_a / den : 0;
                double b = den > 1e-12 ? num_b / den : 0;
                double R = std::hypot(a, b);
                double Rc = std::clamp(R, 0.2, 0.28);
                if (R > 1e-12 && Rc != R) {
                    a *= Rc / R;
                    b *= Rc / R;
                } else if (R <= 1e-12) {
                    a = Rc;
                    b = 0;
                }
                double x0 = cxm - a * Cm + b * Sm;
                double y0 = cym - b * Cm - a * Sm;
                double ssr_x = 0, ssr_y = 0;
                for (size_t i = 0; i < n; ++i) {
                    double ex = s.cx[i] - x0 - a * C[i] + b * S[i];
                    double ey = s.cy[i] - y0 - b * C[i] - a * S[i];
                    ssr_x += ex * ex;
                    ssr_y += ey * ey;
                }
                return norm_x(ssr_x) + norm_y(ssr_y);
            });
            break;
        }
    }

    double r = pos + scale;
    if (nz.use_angle) r += angle;
    return r;
}

}  // namespace

PathTrack extract_track(const VideoClip& clip) { return build_track(segment_all(clip)); }

MotionVerdict oracle_classify_motion(const VideoClip& clip) {
    MotionVerdict verdict;
    verdict.residuals.fill(std::numeric_limits<double>::infinity());
    PathTrack track = extract_track(clip);
    if (track.valid_count < VideoClip::F / 2) return verdict;

    Series s = series_of(track);
    Normalizers nz;
    nz.n = s.u.size();
    nz.pos_x = var_of(s.cx) + kPosFloor * kPosFloor;
    nz.pos_y = var_of(s.cy) + kPosFloor * kPosFloor;
    nz.scale = var_of(s.s) + kScaleFloor * kScaleFloor;
    nz.angle = var_of(s.th) + kAngleFloor * kAngleFloor;
    nz.use_angle = track.angle_reliable;

    int best = 0;
    for (int fi = 0; fi < kFamilyCount; ++fi) {
        verdict.residuals[static_cast<size_t>(fi)] =
            family_residual(all_families()[static_cast<size_t>(fi)], s, nz);
        if (verdict.residuals[static_cast<size_t>(fi)] < verdict.residuals[static_cast<size_t>(best)])
            best = fi;
    }
    verdict.family = to_string(all_families()[static_cast<size_t>(best)]);
    verdict.residual = verdict.residuals[static_cast<size_t>(best)];

    double denom = 0;
    for (double r : verdict.residuals)
        denom += std::exp(-(r - verdict.residual) / kSoftminTemp);
    verdict.confidence = 1.0 / denom;
    return verdict;
}

SubjectVerdict oracle_classify_subject(const VideoClip& clip) {
    SubjectVerdict verdict;
    std::vector<FrameSeg> segs = segment_all(clip);
    std::vector<const FrameSeg*> valid;
    for (const FrameSeg& s : segs)
        if (s.valid) valid.push_back(&s);
    if (valid.empty()) return verdict;

    // Shape: mean template distance across all frames. Raster noise varies
    // with each frame's sub-pixel phase, so averaging per-frame distances
    // sharpens the margin well past any single frame.
    std::vector<ShapeDescriptor> measured;
    measured.reserve(valid.size());
    for (const FrameSeg* s : valid)
        measured.push_back(describe(s->px, s->cx_px, s->cy_px, s->r_rms, s->max_w));

    double sbest = std::numeric_limits<double>::infinity(), ssecond = sbest;
    int best_si = -1;
    for (int si = 0; si < kShapeCount; ++si) {
        double total = 0;
        int cnt = 0;
        for (size_t f = 0; f < valid.size(); ++f) {
            ShapeDescriptor td;
            if (!template_descriptor(si, *valid[f], td)) continue;
            total += descriptor_distance(measured[f], td);
            ++cnt;
        }
        if (cnt == 0) continue;
        double mean = total / cnt;
        if (mean < sbest) {
            ssecond = sbest;
            sbest = mean;
            best_si = si;
        } else if (mean < ssecond) {
            ssecond = mean;
        }
    }
    if (best_si < 0) return verdict;
    verdict.shape = to_string(all_shapes()[static_cast<size_t>(best_si)]);

    // Color: mass-weighted interior mean across frames, then nearest
    // anchor after max-normalization (removes shade).
    double mr = 0, mg = 0, mb = 0, msum = 0;
    for (const FrameSeg* s : valid) {
        mr += s->mass * s->mean_r;
        mg += s->mass * s->mean_g;
        mb += s->mass * s->mean_b;
        msum += s->mass;
    }
    mr /= msum;
    mg /= msum;
    mb /= msum;
    double mx = std::max({mr, mg, mb, 1e-9});
    double nr = mr / mx, ng = mg / mx, nb = mb / mx;
    double cbest = std::numeric_limits<double>::infinity(), csecond = cbest;
    int cidx = 0;
    for (int ci = 0; ci < kColorCount; ++ci) {
        std::array<double, 3> a = color_rgb(all_colors()[static_cast<size_t>(ci)]);
        double am = std::max({a[0], a[1], a[2]});
        double d = (nr - a[0] / am) * (nr - a[0] / am) + (ng - a[1] / am) * (ng - a[1] / am) +
                   (nb - a[2] / am) * (nb - a[2] / am);
        if (d < cbest) {
            csecond = cbest;
            cbest = d;
            cidx = ci;
        } else if (d < csecond) {
            csecond = d;
        }
    }
    verdict.color = to_string(all_colors()[static_cast<size_t>(cidx)]);

    double shape_conf = ssecond / (sbest + ssecond + 1e-12);
    double color_conf = csecond / (cbest + csecond + 1e-12);
    verdict.confidence = std::min(shape_conf, color_conf);
    return verdict;
}

std::array<double, kClipFeatureDim> clip_features(const VideoClip& clip) {
    std::array<double, kClipFeatureDim> feat{};
    std::vector<FrameSeg> segs = segment_all(clip);
    PathTrack track = build_track(segs);
    Series s = series_of(track);

    // Cubic centroid fits (zeros when under-determined).
    if (s.u.size() >= 4) {
        Eigen::Matrix4d M = Eigen::Matrix4d::Zero();
        Eigen::Vector4d bx = Eigen::Vector4d::Zero(), by = Eigen::Vector4d::Zero();
        for (size_t i = 0; i < s.u.size(); ++i) {
            Eigen::Vector4d basis(1.0, s.u[i], s.u[i] * s.u[i], s.u[i] * s.u[i] * s.u[i]);
            M += basis * basis.transpose();
            bx += basis * s.cx[i];
            by += basis * s.cy[i];
        }
        Eigen::Vector4d cx = M.ldlt().solve(bx), cy = M.ldlt().solve(by);
        for (int k = 0; k < 4; ++k) {
            feat[static_cast<size_t>(k)] = cx[k];
            feat[static_cast<size_t>(4 + k)] = cy[k];
        }
    }

    if (!s.s.empty()) {
        feat[8] = mean_of(s.s);
        feat[9] = std::sqrt(var_of(s.s));
        feat[10] = *std::min_element(s.s.begin(), s.s.end());
        feat[11] = *std::max_element(s.s.begin(), s.s.end());
    }

    if (track.angle_reliable && s.th.size() >= 2) {
        feat[12] = s.th.back() - s.th.front();
        double acc = 0;
        for (size_t i = 1; i < s.th.size(); ++i) acc += std::abs(s.th[i] - s.th[i - 1]);
        feat[13] = acc / static_cast<double>(s.th.size() - 1);
        feat[14] = std::sqrt(var_of(s.th));
        feat[15] = 1.0;
    }

    // Foreground color histogram over anchors: each valid frame's
    // interior mean color votes for its nearest anchor, weighted by mass.
    {
        std::array<double, kColorCount> hist{};
        double total = 0;
        for (const FrameSeg& seg : segs) {
            if (!seg.valid) continue;
            double mx = std::max({seg.mean_r, seg.mean_g, seg.mean_b, 1e-9});
            double nr = seg.mean_r / mx, ng = seg.mean_g / mx, nb = seg.mean_b / mx;
            double dbest = std::numeric_limits<double>::infinity();
            int ci_best = 0;
            for (int ci = 0; ci < kColorCount; ++ci) {
                std::array<double, 3> a = color_rgb(all_colors()[static_cast<size_t>(ci)]);
                double am = std::max({a[0], a[1], a[2]});
                double d = (nr - a[0] / am) * (nr - a[0] / am) +
                           (ng - a[1] / am) * (ng - a[1] / am) +
                           (nb - a[2] / am) * (nb - a[2] / am);
                if (d < dbest) {
                    dbest = d;
                    ci_best = ci;
                }
            }
            hist[static_cast<size_t>(ci_best)] += seg.mass;
            total += seg.mass;
        }
        for (int ci = 0; ci < kColorCount; ++ci)
            feat[static_cast<size_t>(16 + ci)] = total > 0 ? hist[static_cast<size_t>(ci)] / total : 0.0;
    }

    // Centroid speed statistics over consecutive valid frames.
    {
        std::vector<double> speeds;
        int prev = -1;
        for (int t = 0; t < VideoClip::F; ++t) {
            if (!track.valid[static_cast<size_t>(t)]) continue;
            if (prev >= 0 && t == prev + 1) {
                double dx = track.cx[static_cast<size_t>(t)] - track.cx[static_cast<size_t>(prev)];
                double dy = track.cy[static_cast<size_t>(t)] - track.cy[static_cast<size_t>(prev)];
                speeds.push_back(std::hypot(dx, dy));
            }
            prev = t;
        }
        if (!speeds.empty()) {
            feat[22] = mean_of(speeds);
            feat[23] = std::sqrt(var_of(speeds));
            feat[24] = *std::max_element(speeds.begin(), speeds.end());
            feat[25] = std::accumulate(speeds.begin(), speeds.end(), 0.0);
        }
    }

    // Background and coverage statistics.
    {
        double bsum = 0, bsq = 0;
        int bcount = 0;
        std::vector<double> fracs;
        for (const FrameSeg& seg : segs) {
            bsum += seg.bg_sum;
            bsq += seg.bg_sq;
            bcount += seg.bg_count;
            fracs.push_back(seg.mass / (VideoClip::H * VideoClip::W));
        }
        if (bcount > 0) {
            double bm = bsum / bcount;
            feat[26] = bm;
            feat[27] = std::sqrt(std::max(0.0, bsq / bcount - bm * bm));
        }
        feat[28] = mean_of(fracs);
        feat[29] = std::sqrt(var_of(fracs));
        double total = 0;
        for (float v : clip.pixels) total += v;
        feat[30] = total / static_cast<double>(clip.pixels.size());
        feat[31] = static_cast<double>(track.valid_count) / VideoClip::F;
    }

    return feat;
}

}  // namespace motionlab
