#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace attnedit {

// Lowercases and splits on whitespace and punctuation (anything outside
// [a-z0-9'] after lowercasing is a separator, apostrophes are kept inside
// words). Throws std::invalid_argument when no tokens survive.
std::vector<std::string> tokenize(const std::string& raw);

// Flat word-level token -> id map, shipped as a JSON object. Out-of-vocabulary
// words fall back to the "<unk>" entry when present.
class Vocabulary {
public:
    static constexpr const char* kUnknownToken = "<unk>";

    Vocabulary() = default;
    explicit Vocabulary(std::map<std::string, int> entries);

    // Builds ids 0..n-1: <unk> first, remaining tokens sorted.
    static Vocabulary build(const std::vector<std::string>& tokens);

    static Vocabulary load_json_file(const std::string& path);
    std::string to_json() const;

    int id_of(const std::string& token) const;  // throws on OOV without <unk>
    bool contains(const std::string& token) const;
    int size() const { return static_cast<int>(token_to_id_.size()); }
    const std::map<std::string, int>& entries() const { return token_to_id_; }

private:
    std::map<std::string, int> token_to_id_;
    int unk_id_ = -1;
};

struct Prompt {
    std::string raw;
    std::vector<int> tokens;

    int length() const { return static_cast<int>(tokens.size()); }
    bool operator==(const Prompt&) const = default;

    static Prompt from_text(const std::string& raw, const Vocabulary& vocab);
};

// For each target-token index j, the matched source index or nullopt. Matched
// source indices are strictly increasing over matched j and used at most once.
struct Alignment {
    std::vector<std::optional<int>> map;

    int size() const { return static_cast<int>(map.size()); }
    const std::optional<int>& at(int j) const { return map[static_cast<size_t>(j)]; }
    int matched_count() const;
    bool operator==(const Alignment&) const = default;
};

// Longest common subsequence over token ids; when several optimal alignments
// exist, matches are taken greedily from the left so each matched target token
// gets the leftmost viable source index. Unmatched target tokens map to
// nullopt.
Alignment align_token_ids(const std::vector<int>& source, const std::vector<int>& target);

Alignment align_prompts(const Prompt& p, const Prompt& p_star);

}  // namespace attnedit
