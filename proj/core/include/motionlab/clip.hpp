#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace motionlab {

// Fixed-geometry video clip: 16 frames of 32x32 RGB, float32 in [0,1].
// Pixel math elsewhere runs in double; values are quantized to float32
// exactly once at creation so disk round-trips are bit-exact.
struct VideoClip {
    static constexpr int F = 16;
    static constexpr int H = 32;
    static constexpr int W = 32;
    static constexpr int C = 3;
    static constexpr size_t PIXELS = static_cast<size_t>(F) * H * W * C;

    std::vector<float> pixels;  // [f][y][x][c], row-major

    VideoClip() : pixels(PIXELS, 0.0f) {}

    float& at(int f, int y, int x, int c) {
        return pixels[((static_cast<size_t>(f) * H + y) * W + x) * C + c];
    }
    float at(int f, int y, int x, int c) const {
        return pixels[((static_cast<size_t>(f) * H + y) * W + x) * C + c];
    }

    bool finite() const;
    bool in_unit_range() const;
    void clamp01();
};

// Binary container: magic "VCLP", u32 version, u32 dims[4], then
// little-endian float32 payload in index order.
void save_clip(const std::filesystem::path& path, const VideoClip& clip);
VideoClip load_clip(const std::filesystem::path& path);

uint64_t clip_hash(const VideoClip& clip);

// Left-right mirror of every frame. Used by evaluation probes.
VideoClip mirror_horizontal(const VideoClip& clip);

// Mean absolute per-pixel difference between two clips' frame f.
double frame_mad(const VideoClip& a, const VideoClip& b, int f);

// Writes frame f as a binary PPM (P6, 8-bit); preview aid only, the
// float container above is the format of record.
void export_frame_ppm(const std::filesystem::path& path, const VideoClip& clip, int f);

}  // namespace motionlab
