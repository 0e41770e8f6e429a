#include "motionlab/clip.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "motionlab/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "clip container I/O assumes a little-endian host");

namespace motionlab {

namespace {

constexpr char kMagic[4] = {'V', 'C', 'L', 'P'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

bool VideoClip::finite() const {
    return std::all_of(pixels.begin(), pixels.end(), [](float v) { return std::isfinite(v); });
}

bool VideoClip::in_unit_range() const {
    return std::all_of(pixels.begin(), pixels.end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

void VideoClip::clamp01() {
    for (float& v : pixels) v = std::clamp(v, 0.0f, 1.0f);
}

void save_clip(const std::filesystem::path& path, const VideoClip& clip) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open clip file for writing: " + path.string());
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, VideoClip::F);
    write_u32(os, VideoClip::H);
    write_u32(os, VideoClip::W);
    write_u32(os, VideoClip::C);
    os.write(reinterpret_cast<const char*>(clip.pixels.data()),
             static_cast<std::streamsize>(clip.pixels.size() * sizeof(float)));
    if (!os) throw std::runtime_error("short write on clip file: " + path.string());
}

VideoClip load_clip(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open clip file: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad clip magic in " + path.string());
    if (read_u32(is) != kVersion) throw std::runtime_error("unsupported clip version in " + path.string());
    uint32_t dims[4] = {read_u32(is), read_u32(is), read_u32(is), read_u32(is)};
    if (dims[0] != VideoClip::F || dims[1] != VideoClip::H || dims[2] != VideoClip::W ||
        dims[3] != VideoClip::C)
        throw std::runtime_error("unexpected clip dimensions in " + path.string());
    VideoClip clip;
    is.read(reinterpret_cast<char*>(clip.pixels.data()),
            static_cast<std::streamsize>(clip.pixels.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated clip payload in " + path.string());
    if (!clip.finite()) throw std::runtime_error("non-finite pixels in " + path.string());
    return clip;
}

uint64_t clip_hash(const VideoClip& clip) {
    return fnv1a64(clip.pixels.data(), clip.pixels.size() * sizeof(float));
}

VideoClip mirror_horizontal(const VideoClip& clip) {
    VideoClip out;
    for (int f = 0; f < VideoClip::F; ++f)
        for (int y = 0; y < VideoClip::H; ++y)
            for (int x = 0; x < VideoClip::W; ++x)
                for (int c = 0; c < VideoClip::C; ++c)
                    out.at(f, y, x, c) = clip.at(f, y, VideoClip::W - 1 - x, c);
    return out;
}

double frame_mad(const VideoClip& a, const VideoClip& b, int f) {
    double acc = 0;
    for (int y = 0; y < VideoClip::H; ++y)
        for (int x = 0; x < VideoClip::W; ++x)
            for (int c = 0; c < VideoClip::C; ++c)
                acc += std::abs(static_cast<double>(a.at(f, y, x, c)) - b.at(f, y, x, c));
    return acc / (VideoClip::H * VideoClip::W * VideoClip::C);
}

void export_frame_ppm(const std::filesystem::path& path, const VideoClip& clip, int f) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open ppm file for writing: " + path.string());
    os << "P6\n" << VideoClip::W << " " << VideoClip::H << "\n255\n";
    for (int y = 0; y < VideoClip::H; ++y)
        for (int x = 0; x < VideoClip::W; ++x)
            for (int c = 0; c < VideoClip::C; ++c) {
                float v = std::clamp(clip.at(f, y, x, c), 0.0f, 1.0f);
                os.put(static_cast<char>(std::lround(v * 255.0f)));
            }
}

}  // namespace motionlab
