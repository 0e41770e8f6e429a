#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace motionlab {

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Closed vocabulary of the prompt grammar. Token order is part of the
// model contract (embedding rows index by id), so standard() is fixed.
class Vocab {
public:
    static Vocab standard();

    int size() const { return static_cast<int>(tokens_.size()); }
    bool has(const std::string& tok) const { return ids_.count(tok) > 0; }
    int id(const std::string& tok) const;
    const std::string& token(int id) const;
    int pad_id() const { return 0; }
    int eos_id() const { return 1; }

    // "token\tid" lines.
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

    uint64_t hash() const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

constexpr int kPromptLen = 7;
constexpr int kSubjectSpan = 3;  // positions [0, 3)
constexpr int kMotionSpan = 4;   // positions [3, 7)

// Tokenized prompt: "a <color> <shape> <motion phrase>". The subject
// slot is exactly 3 tokens; the motion slot holds the phrase followed by
// EOS, right-padded with PAD to 4 positions.
struct PromptSpec {
    std::string text;
    std::array<int, kPromptLen> token_ids{};
    // spans are fixed by the template: subject [0,3), motion [3,7)
};

// Case-insensitive, whitespace-normalized. Throws ParseError naming the
// offending token on out-of-vocabulary words or malformed prompts.
PromptSpec tokenize(const std::string& text, const Vocab& vocab);

// Inverse on grammar strings: drops EOS/PAD, joins with single spaces.
std::string detokenize(const PromptSpec& prompt, const Vocab& vocab);

// Motion-slot ids (phrase + EOS + padding) for a bare motion phrase.
std::array<int, kMotionSpan> motion_slot_ids(const std::string& phrase, const Vocab& vocab);

}  // namespace motionlab
