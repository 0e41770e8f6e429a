#include "motionlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "motionlab/hash.hpp"

namespace motionlab {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian");

namespace {
constexpr char kMagic[4] = {'M', 'L', 'C', 'K'};
constexpr uint32_t kVersion = 1;

template <typename S>
std::vector<char> to_bytes(const Mat<S>& m) {
    std::vector<char> out(m.size() * sizeof(S));
    std::memcpy(out.data(), m.data.data(), out.size());
    return out;
}
}  // namespace

void CheckpointWriter::add_f32(const std::string& name, const MatF& m) {
    entries_.push_back({name, m.rows, m.cols, false, to_bytes(m)});
}

void CheckpointWriter::add_f64(const std::string& name, const MatD& m) {
    entries_.push_back({name, m.rows, m.cols, true, to_bytes(m)});
}

void CheckpointWriter::write(const std::string& path) const {
    nlohmann::json dir = nlohmann::json::array();
    size_t offset = 0;
    for (const Entry& e : entries_) {
        dir.push_back({{"name", e.name},
                       {"rows", e.rows},
                       {"cols", e.cols},
                       {"dtype", e.is_f64 ? "f64" : "f32"},
                       {"offset", offset},
                       {"bytes", e.bytes.size()},
                       {"hash", hash_hex(fnv1a64(e.bytes.data(), e.bytes.size()))}});
        offset += e.bytes.size();
    }
    nlohmann::json header = {{"meta", meta}, {"tensors", dir}};
    std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open for write: " + path);
    out.write(kMagic, 4);
    uint32_t ver = kVersion;
    out.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
    uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Entry& e : entries_)
        out.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
    if (!out) throw CheckpointError("write failed: " + path);
}

CheckpointReader::CheckpointReader(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError("not a checkpoint file: " + path);
    uint32_t ver = 0;
    in.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (!in || ver != kVersion)
        throw CheckpointError("unsupported checkpoint version in " + path);
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!in) throw CheckpointError("truncated checkpoint header: " + path);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw CheckpointError("truncated checkpoint header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs);
    meta_ = header.at("meta");

    for (const auto& t : header.at("tensors")) {
        Entry e;
        e.rows = t.at("rows").get<int>();
        e.cols = t.at("cols").get<int>();
        std::string dtype = t.at("dtype").get<std::string>();
        if (dtype != "f32" && dtype != "f64")
            throw CheckpointError("unknown tensor dtype: " + dtype);
        e.is_f64 = dtype == "f64";
        size_t nbytes = t.at("bytes").get<size_t>();
        size_t expect = static_cast<size_t>(e.rows) * static_cast<size_t>(e.cols) *
                        (e.is_f64 ? sizeof(double) : sizeof(float));
        if (nbytes != expect) throw CheckpointError("tensor size mismatch in " + path);
        e.bytes.resize(nbytes);
        in.read(e.bytes.data(), static_cast<std::streamsize>(nbytes));
        if (!in) throw CheckpointError("truncated checkpoint payload: " + path);
        if (hash_hex(fnv1a64(e.bytes.data(), e.bytes.size())) != t.at("hash").get<std::string>())
            throw CheckpointError("tensor hash mismatch for " + t.at("name").get<std::string>() +
                                     " in " + path);
        entries_.emplace_back(t.at("name").get<std::string>(), std::move(e));
    }
}

bool CheckpointReader::has(const std::string& name) const {
    for (const auto& [n, e] : entries_)
        if (n == name) return true;
    return false;
}

std::vector<std::string> CheckpointReader::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [n, e] : entries_) out.push_back(n);
    return out;
}

const CheckpointReader::Entry& CheckpointReader::find(const std::string& name) const {
    for (const auto& [n, e] : entries_)
        if (n == name) return e;
    throw CheckpointError("checkpoint has no tensor named " + name);
}

MatF CheckpointReader::read_f32(const std::string& name) const {
    const Entry& e = find(name);
    if (e.is_f64) throw CheckpointError("tensor " + name + " is f64, expected f32");
    MatF m(e.rows, e.cols);
    std::memcpy(m.data.data(), e.bytes.data(), e.bytes.size());
    return m;
}

MatD CheckpointReader::read_f64(const std::string& name) const {
    const Entry& e = find(name);
    if (!e.is_f64) throw CheckpointError("tensor " + name + " is f32, expected f64");
    MatD m(e.rows, e.cols);
    std::memcpy(m.data.data(), e.bytes.data(), e.bytes.size());
    return m;
}

void save_params(const std::string& path, const ParamStore<float>& ps,
                 const nlohmann::json& meta) {
    CheckpointWriter w;
    w.meta = meta;
    for (int i = 0; i < ps.size(); ++i) w.add_f32(ps.name(i), ps.value(i));
    w.write(path);
}

nlohmann::json load_params(const std::string& path, ParamStore<float>& ps) {
    CheckpointReader r(path);
    std::vector<std::string> file_names = r.names();
    if (static_cast<int>(file_names.size()) != ps.size())
        throw CheckpointError("checkpoint tensor count mismatch: " + path);
    for (int i = 0; i < ps.size(); ++i) {
        MatF m = r.read_f32(ps.name(i));
        if (!m.same_shape(ps.value(i)))
            throw CheckpointError("tensor shape mismatch for " + ps.name(i) + " in " + path);
        ps.value(i) = std::move(m);
    }
    return r.meta();
}

nlohmann::json read_checkpoint_meta(const std::string& path) {
    return CheckpointReader(path).meta();
}

uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open for hashing: " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        if (got > 0) h = fnv1a64(buf, static_cast<size_t>(got), h);
    }
    return h;
}

}  // namespace motionlab
