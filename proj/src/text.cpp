#include "attnedit/text.hpp"

#include <json.hpp>

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace attnedit {

std::vector<std::string> tokenize(const std::string& raw) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char ch : raw) {
        const char lower = static_cast<char>(std::tolower(ch));
        const bool word_char = (lower >= 'a' && lower <= 'z') || (lower >= '0' && lower <= '9') || lower == '\'';
        if (word_char) {
            current.push_back(lower);
        } else if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(current);
    }
    if (tokens.empty()) {
        throw std::invalid_argument("tokenize: no tokens in input text");
    }
    return tokens;
}

Vocabulary::Vocabulary(std::map<std::string, int> entries) : token_to_id_(std::move(entries)) {
    auto it = token_to_id_.find(kUnknownToken);
    unk_id_ = it == token_to_id_.end() ? -1 : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& tokens) {
    std::map<std::string, int> entries;
    entries[kUnknownToken] = 0;
    for (const auto& tok : tokens) {
        entries.emplace(tok, 0);
    }
    int next_id = 1;
    for (auto& [tok, id] : entries) {
        if (tok != kUnknownToken) {
            id = next_id++;
        }
    }
    return Vocabulary(std::move(entries));
}

Vocabulary Vocabulary::load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("Vocabulary: cannot open " + path);
    }
    nlohmann::json j = nlohmann::json::parse(in);
    std::map<std::string, int> entries;
    for (auto it = j.begin(); it != j.end(); ++it) {
        entries[it.key()] = it.value().get<int>();
    }
    return Vocabulary(std::move(entries));
}

std::string Vocabulary::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [tok, id] : token_to_id_) {
        j[tok] = id;
    }
    return j.dump(2);
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) {
        return it->second;
    }
    if (unk_id_ < 0) {
        throw std::out_of_range("Vocabulary: '" + token + "' is out of vocabulary and no fallback token exists");
    }
    return unk_id_;
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

Prompt Prompt::from_text(const std::string& raw, const Vocabulary& vocab) {
    Prompt prompt;
    prompt.raw = raw;
    for (const auto& tok : tokenize(raw)) {
        prompt.tokens.push_back(vocab.id_of(tok));
    }
    return prompt;
}

int Alignment::matched_count() const {
    int n = 0;
    for (const auto& m : map) {
        if (m.has_value()) ++n;
    }
    return n;
}

Alignment align_token_ids(const std::vector<int>& source, const std::vector<int>& target) {
    const int n = static_cast<int>(source.size());
    const int m = static_cast<int>(target.size());
    // dp[i][j] = LCS length of source[i:], target[j:]
    std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
    for (int i = n - 1; i >= 0; --i) {
        for (int j = m - 1; j >= 0; --j) {
            if (source[i] == target[j]) {
                dp[i][j] = dp[i + 1][j + 1] + 1;
            } else {
                dp[i][j] = std::max(dp[i + 1][j], dp[i][j + 1]);
            }
        }
    }
    Alignment alignment;
    alignment.map.assign(m, std::nullopt);
    int i = 0, j = 0;
    while (i < n && j < m) {
        if (source[i] == target[j]) {
            alignment.map[j] = i;
            ++i;
            ++j;
        } else if (dp[i + 1][j] >= dp[i][j + 1]) {
            ++i;  // skipping this source token loses nothing; keeps matches leftmost
        } else {
            ++j;  // target token j stays unmatched
        }
    }
    return alignment;
}

Alignment align_prompts(const Prompt& p, const Prompt& p_star) { return align_token_ids(p.tokens, p_star.tokens); }

}  // namespace attnedit
