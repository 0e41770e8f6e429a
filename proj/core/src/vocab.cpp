#include "motionlab/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "motionlab/hash.hpp"
#include "motionlab/world.hpp"

namespace motionlab {

namespace {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

}  // namespace

Vocab Vocab::standard() {
    Vocab v;
    // ids 0 and 1 are reserved markers; "gray"/"thing" are the carrier
    // subject used for bare motion-phrase encoding.
    std::vector<std::string> toks = {"<pad>", "<eos>", "a", "gray", "thing"};
    for (Color c : all_colors()) toks.emplace_back(to_string(c));
    for (Shape s : all_shapes()) toks.emplace_back(to_string(s));
    for (MotionFamily f : all_families())
        for (const std::string& w : split_words(motion_phrase(f)))
            if (std::find(toks.begin(), toks.end(), w) == toks.end()) toks.push_back(w);
    for (int i = 0; i < static_cast<int>(toks.size()); ++i) {
        v.ids_.emplace(toks[static_cast<size_t>(i)], i);
        v.tokens_.push_back(toks[static_cast<size_t>(i)]);
    }
    return v;
}

int Vocab::id(const std::string& tok) const {
    auto it = ids_.find(tok);
    if (it == ids_.end()) throw ParseError("token not in vocabulary: " + tok);
    return it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw ParseError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<size_t>(id)];
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open vocab file for writing: " + path.string());
    for (int i = 0; i < size(); ++i) os << tokens_[static_cast<size_t>(i)] << "\t" << i << "\n";
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open vocab file: " + path.string());
    Vocab v;
    std::string line;
    int expect = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        size_t tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("malformed vocab line: " + line);
        std::string tok = line.substr(0, tab);
        int id = std::stoi(line.substr(tab + 1));
        if (id != expect) throw std::runtime_error("non-contiguous vocab ids in " + path.string());
        v.ids_.emplace(tok, id);
        v.tokens_.push_back(tok);
        ++expect;
    }
    if (v.tokens_.empty()) throw std::runtime_error("empty vocab file: " + path.string());
    return v;
}

uint64_t Vocab::hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const std::string& t : tokens_) {
        h = fnv1a64(t.data(), t.size(), h);
        h = fnv1a64("\n", 1, h);
    }
    return h;
}

std::array<int, kMotionSpan> motion_slot_ids(const std::string& phrase, const Vocab& vocab) {
    std::vector<std::string> words = split_words(phrase);
    if (words.empty() || words.size() > kMotionSpan - 1)
        throw ParseError("motion phrase must be 1-3 words: " + phrase);
    std::array<int, kMotionSpan> ids{};
    size_t at = 0;
    for (const std::string& w : words) ids[at++] = vocab.id(w);
    ids[at++] = vocab.eos_id();
    while (at < kMotionSpan) ids[at++] = vocab.pad_id();
    return ids;
}

PromptSpec tokenize(const std::string& text, const Vocab& vocab) {
    std::vector<std::string> words = split_words(text);
    if (words.size() < 4) throw ParseError("prompt too short: " + text);
    if (words[0] != "a") throw ParseError("token not in grammar position: " + words[0]);

    // Subject slot: a <color> <shape>, or the carrier "a gray thing".
    bool carrier = words[1] == "gray";
    if (carrier) {
        if (words[2] != "thing") throw ParseError("carrier subject must be 'gray thing'");
    } else {
        bool color_ok = false, shape_ok = false;
        for (Color c : all_colors())
            if (words[1] == to_string(c)) color_ok = true;
        for (Shape s : all_shapes())
            if (words[2] == to_string(s)) shape_ok = true;
        if (!color_ok) throw ParseError("not a color word: " + words[1]);
        if (!shape_ok) throw ParseError("not a shape word: " + words[2]);
    }

    std::string phrase;
    for (size_t i = 3; i < words.size(); ++i) {
        if (!vocab.has(words[i])) throw ParseError("token not in vocabulary: " + words[i]);
        if (!phrase.empty()) phrase += " ";
        phrase += words[i];
    }
    bool known = false;
    for (MotionFamily f : all_families())
        if (phrase == motion_phrase(f)) known = true;
    if (!known) throw ParseError("unknown motion phrase: " + phrase);

    PromptSpec spec;
    spec.token_ids[0] = vocab.id(words[0]);
    spec.token_ids[1] = vocab.id(words[1]);
    spec.token_ids[2] = vocab.id(words[2]);
    std::array<int, kMotionSpan> slot = motion_slot_ids(phrase, vocab);
    for (int i = 0; i < kMotionSpan; ++i) spec.token_ids[static_cast<size_t>(kSubjectSpan + i)] = slot[static_cast<size_t>(i)];

    std::string norm;
    for (const std::string& w : words) {
        if (!norm.empty()) norm += " ";
        norm += w;
    }
    spec.text = norm;
    return spec;
}

std::string detokenize(const PromptSpec& prompt, const Vocab& vocab) {
    std::string out;
    for (int id : prompt.token_ids) {
        if (id == vocab.pad_id() || id == vocab.eos_id()) continue;
        if (!out.empty()) out += " ";
        out += vocab.token(id);
    }
    return out;
}

}  // namespace motionlab
