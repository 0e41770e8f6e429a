#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "motionlab/params.hpp"

namespace motionlab {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Single-file tensor container: magic/version, a JSON directory with
// per-tensor shapes, dtypes, and content hashes, then a raw little-endian
// payload. Hashes are verified on every read.
class CheckpointWriter {
public:
    nlohmann::json meta = nlohmann::json::object();

    void add_f32(const std::string& name, const MatF& m);
    void add_f64(const std::string& name, const MatD& m);
    void write(const std::string& path) const;

private:
    struct Entry {
        std::string name;
        int rows, cols;
        bool is_f64;
        std::vector<char> bytes;
    };
    std::vector<Entry> entries_;
};

class CheckpointReader {
public:
    explicit CheckpointReader(const std::string& path);

    const nlohmann::json& meta() const { return meta_; }
    bool has(const std::string& name) const;
    std::vector<std::string> names() const;

    MatF read_f32(const std::string& name) const;
    MatD read_f64(const std::string& name) const;

private:
    struct Entry {
        int rows, cols;
        bool is_f64;
        std::vector<char> bytes;
    };
    const Entry& find(const std::string& name) const;

    nlohmann::json meta_;
    std::vector<std::pair<std::string, Entry>> entries_;
};

// Whole-store convenience wrappers. Loading requires the store to be
// registered already and the file to carry exactly its tensors.
void save_params(const std::string& path, const ParamStore<float>& ps,
                 const nlohmann::json& meta);
nlohmann::json load_params(const std::string& path, ParamStore<float>& ps);
nlohmann::json read_checkpoint_meta(const std::string& path);

// Hash of a file's raw bytes, for run manifests.
uint64_t file_hash(const std::string& path);

}  // namespace motionlab
