#include "motionlab/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "motionlab/rng.hpp"

namespace motionlab {

using nlohmann::json;

const char* to_string(Split s) {
    switch (s) {
        case Split::PRETRAIN: return "PRETRAIN";
        case Split::EXEMPLAR: return "EXEMPLAR";
        case Split::SPV: return "SPV";
        case Split::EVAL: return "EVAL";
    }
    return "?";
}

const char* to_string(ClipSource s) {
    return s == ClipSource::RENDERED ? "RENDERED" : "MODEL_GENERATED";
}

Split split_from_string(const std::string& s) {
    for (Split v : {Split::PRETRAIN, Split::EXEMPLAR, Split::SPV, Split::EVAL})
        if (s == to_string(v)) return v;
    throw std::runtime_error("unknown split: " + s);
}

ClipSource source_from_string(const std::string& s) {
    for (ClipSource v : {ClipSource::RENDERED, ClipSource::MODEL_GENERATED})
        if (s == to_string(v)) return v;
    throw std::runtime_error("unknown clip source: " + s);
}

uint64_t entry_background_seed(uint64_t seed) { return derive_seed(seed, "bg"); }

VideoClip render_entry(const ManifestEntry& entry) {
    return render_clip(entry.subject, entry.motion, entry_background_seed(entry.seed), entry.seed);
}

namespace {

json entry_to_json(const ManifestEntry& e, Split split) {
    return json{{"clip_path", e.clip_path},
                {"prompt_text", e.prompt_text},
                {"subject",
                 {{"shape", to_string(e.subject.shape)},
                  {"color", to_string(e.subject.color)},
                  {"size", e.subject.size}}},
                {"motion",
                 {{"family", to_string(e.motion.family)},
                  {"amplitude", e.motion.params.amplitude},
                  {"period", e.motion.params.period},
                  {"phase", e.motion.params.phase},
                  {"x0", e.motion.params.x0},
                  {"y0", e.motion.params.y0}}},
                {"source", to_string(e.source)},
                {"seed", e.seed},
                {"split", to_string(split)}};
}

ManifestEntry entry_from_json(const json& j) {
    ManifestEntry e;
    e.clip_path = j.at("clip_path").get<std::string>();
    e.prompt_text = j.at("prompt_text").get<std::string>();
    const json& s = j.at("subject");
    e.subject.shape = shape_from_string(s.at("shape").get<std::string>());
    e.subject.color = color_from_string(s.at("color").get<std::string>());
    e.subject.size = s.at("size").get<double>();
    const json& m = j.at("motion");
    e.motion.family = family_from_string(m.at("family").get<std::string>());
    e.motion.params.amplitude = m.at("amplitude").get<double>();
    e.motion.params.period = m.at("period").get<double>();
    e.motion.params.phase = m.at("phase").get<double>();
    e.motion.params.x0 = m.at("x0").get<double>();
    e.motion.params.y0 = m.at("y0").get<double>();
    e.source = source_from_string(j.at("source").get<std::string>());
    e.seed = j.at("seed").get<uint64_t>();
    return e;
}

// Writes a rendered clip for an entry and fills its clip_path.
void write_entry_clip(const std::filesystem::path& root, ManifestEntry& e, const char* prefix,
                      int index) {
    std::filesystem::create_directories(root / "clips");
    e.clip_path = std::string("clips/") + prefix + "_" + std::to_string(index) + ".clip";
    save_clip(root / e.clip_path, render_entry(e));
}

}  // namespace

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open manifest for writing: " + path.string());
    for (const ManifestEntry& e : manifest.entries)
        os << entry_to_json(e, manifest.split).dump() << "\n";
    if (!os) throw std::runtime_error("short write on manifest: " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open manifest: " + path.string());
    DatasetManifest m;
    bool first = true;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        Split split = split_from_string(j.at("split").get<std::string>());
        if (first) {
            m.split = split;
            first = false;
        } else if (split != m.split) {
            throw std::runtime_error("mixed splits in manifest: " + path.string());
        }
        m.entries.push_back(entry_from_json(j));
    }
    if (first) throw std::runtime_error("empty manifest: " + path.string());
    return m;
}

void validate_manifest(const std::filesystem::path& root, const DatasetManifest& manifest) {
    for (const ManifestEntry& e : manifest.entries) {
        VideoClip clip = load_clip(root / e.clip_path);
        if (!clip.in_unit_range())
            throw std::runtime_error("clip out of range: " + e.clip_path);
        if (e.prompt_text != prompt_text(e.subject, e.motion.family))
            throw std::runtime_error("prompt does not match grammar: " + e.prompt_text);
    }
}

DatasetManifest make_pretrain_corpus(const std::filesystem::path& root, int n_per_pair,
                                     uint64_t seed) {
    if (n_per_pair < 1) throw ParameterError("n_per_pair must be >= 1");
    DatasetManifest m;
    m.split = Split::PRETRAIN;
    int index = 0;
    const std::vector<MotionFamily> common = families_of(MotionCategory::COMMON);
    for (Shape shape : all_shapes()) {
        for (Color color : all_colors()) {
            for (MotionFamily family : common) {
                for (int rep = 0; rep < n_per_pair; ++rep) {
                    ManifestEntry e;
                    e.seed = derive_seed(seed, "pretrain", static_cast<uint64_t>(index));
                    Rng rng(derive_seed(e.seed, "spec"));
                    e.subject.shape = shape;
                    e.subject.color = color;
                    e.subject.size = rng.uniform(0.15, 0.3);
                    e.motion = sample_motion(family, rng);
                    e.prompt_text = prompt_text(e.subject, family);
                    e.source = ClipSource::RENDERED;
                    write_entry_clip(root, e, "pretrain", index);
                    m.entries.push_back(std::move(e));
                    ++index;
                }
            }
        }
    }
    return m;
}

DatasetManifest make_exemplar_set(const std::filesystem::path& root, const MotionSpec& motion,
                                  int k, uint64_t seed) {
    if (motion.category() != MotionCategory::UNCOMMON)
        throw ParameterError("exemplar motion must be UNCOMMON");
    if (k < 1) throw ParameterError("k must be >= 1");
    if (k > kShapeCount * kColorCount) throw ParameterError("k exceeds distinct subject count");
    validate_motion(motion);

    // Distinct subjects: draw (shape, color) pairs without replacement.
    std::vector<int> pair_ids(kShapeCount * kColorCount);
    std::iota(pair_ids.begin(), pair_ids.end(), 0);
    Rng shuffle_rng(derive_seed(seed, "exemplar_subjects"));
    for (size_t i = pair_ids.size() - 1; i > 0; --i)
        std::swap(pair_ids[i], pair_ids[static_cast<size_t>(
                                   shuffle_rng.uniform_int(0, static_cast<int64_t>(i)))]);

    DatasetManifest m;
    m.split = Split::EXEMPLAR;
    for (int i = 0; i < k; ++i) {
        ManifestEntry e;
        e.seed = derive_seed(seed, "exemplar", static_cast<uint64_t>(i));
        Rng rng(derive_seed(e.seed, "spec"));
        e.subject.shape = all_shapes()[static_cast<size_t>(pair_ids[static_cast<size_t>(i)] / kColorCount)];
        e.subject.color = all_colors()[static_cast<size_t>(pair_ids[static_cast<size_t>(i)] % kColorCount)];
        e.subject.size = rng.uniform(0.15, 0.3);
        // Param jitter: each used slot re-drawn near the given value,
        // clamped to the family range.
        e.motion.family = motion.family;
        auto jitter = [&](double v, ParamRange r) {
            double width = r.hi - r.lo;
            double j = v + rng.uniform(-0.15, 0.15) * width;
            return std::clamp(j, r.lo, r.hi);
        };
        e.motion.params.amplitude = jitter(motion.params.amplitude, amplitude_range(motion.family));
        e.motion.params.period = family_uses_period(motion.family)
                                     ? jitter(motion.params.period, period_range(motion.family))
                                     : 0.0;
        e.motion.params.phase = family_uses_phase(motion.family)
                                    ? jitter(motion.params.phase, phase_range(motion.family))
                                    : 0.0;
        e.motion.params.x0 = jitter(motion.params.x0, x0_range(motion.family));
        e.motion.params.y0 = jitter(motion.params.y0, y0_range(motion.family));
        e.prompt_text = prompt_text(e.subject, motion.family);
        e.source = ClipSource::RENDERED;
        write_entry_clip(root, e, "exemplar", i);
        m.entries.push_back(std::move(e));
    }
    return m;
}

DatasetManifest make_spv_set_rendered(const std::filesystem::path& root, int n, uint64_t seed) {
    if (n < 1) throw ParameterError("spv size must be >= 1");
    DatasetManifest m;
    m.split = Split::SPV;
    const std::vector<MotionFamily> common = families_of(MotionCategory::COMMON);
    for (int i = 0; i < n; ++i) {
        ManifestEntry e;
        e.seed = derive_seed(seed, "spv", static_cast<uint64_t>(i));
        Rng rng(derive_seed(e.seed, "spec"));
        e.subject = sample_subject(rng);
        e.motion = sample_motion(
            common[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(common.size()) - 1))],
            rng);
        e.prompt_text = prompt_text(e.subject, e.motion.family);
        e.source = ClipSource::RENDERED;
        write_entry_clip(root, e, "spv", i);
        m.entries.push_back(std::move(e));
    }
    return m;
}

}  // namespace motionlab
