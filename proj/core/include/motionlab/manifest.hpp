#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "motionlab/clip.hpp"
#include "motionlab/world.hpp"

namespace motionlab {

enum class Split { PRETRAIN, EXEMPLAR, SPV, EVAL };
enum class ClipSource { RENDERED, MODEL_GENERATED };

const char* to_string(Split s);
const char* to_string(ClipSource s);
Split split_from_string(const std::string& s);
ClipSource source_from_string(const std::string& s);

// One dataset record. clip_path is relative to the dataset root; seed is
// sufficient to re-render RENDERED entries bit-identically (the
// background seed is derived from it).
struct ManifestEntry {
    std::string clip_path;
    std::string prompt_text;
    SubjectSpec subject;
    MotionSpec motion;
    ClipSource source = ClipSource::RENDERED;
    uint64_t seed = 0;
};

struct DatasetManifest {
    Split split = Split::PRETRAIN;
    std::vector<ManifestEntry> entries;
};

uint64_t entry_background_seed(uint64_t seed);
VideoClip render_entry(const ManifestEntry& entry);

// Line-delimited JSON, one entry per line, split carried on each record.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Checks that every clip decodes and every prompt matches the grammar
// output for its subject and motion. Throws on the first violation.
void validate_manifest(const std::filesystem::path& root, const DatasetManifest& manifest);

// Corpus builders. All write clips under root/clips/ and return the
// manifest; callers persist it with save_manifest.
DatasetManifest make_pretrain_corpus(const std::filesystem::path& root, int n_per_pair,
                                     uint64_t seed);
DatasetManifest make_exemplar_set(const std::filesystem::path& root, const MotionSpec& motion,
                                  int k, uint64_t seed);
// The RENDERED flavor of subject-prior data; the model-sampled flavor
// lives beside the sampler and falls back to this per entry.
DatasetManifest make_spv_set_rendered(const std::filesystem::path& root, int n, uint64_t seed);

}  // namespace motionlab
