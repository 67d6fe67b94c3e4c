#include "attnedit/codec.hpp"

#include <json.hpp>

#include <stdexcept>
#include <string>

namespace attnedit {

void CodecConfig::validate() const {
    if (codebooks < 1) throw std::invalid_argument("CodecConfig: codebooks must be >= 1");
    if (codebook_size < 2) throw std::invalid_argument("CodecConfig: codebook_size must be >= 2");
    if (frames < 1) throw std::invalid_argument("CodecConfig: frames must be >= 1");
    if (!(frame_rate > 0.0)) throw std::invalid_argument("CodecConfig: frame_rate must be positive");
}

TokenGrid::TokenGrid(const CodecConfig& config)
    : config_(config), tokens_(config.codebooks, std::vector<int>(config.frames, 0)) {
    config.validate();
}

TokenGrid::TokenGrid(const CodecConfig& config, std::vector<std::vector<int>> tokens)
    : config_(config), tokens_(std::move(tokens)) {
    config.validate();
    if (static_cast<int>(tokens_.size()) != config.codebooks) {
        throw std::invalid_argument("TokenGrid: expected " + std::to_string(config.codebooks) + " codebook rows");
    }
    for (const auto& row : tokens_) {
        if (static_cast<int>(row.size()) != config.frames) {
            throw std::invalid_argument("TokenGrid: every codebook row must hold " + std::to_string(config.frames) +
                                        " frames");
        }
        for (int tok : row) {
            if (tok < 0 || tok >= config.codebook_size) {
                throw std::invalid_argument("TokenGrid: token " + std::to_string(tok) + " outside [0, " +
                                            std::to_string(config.codebook_size) + ")");
            }
        }
    }
}

int TokenGrid::at(int codebook, int frame) const {
    if (codebook < 0 || codebook >= config_.codebooks || frame < 0 || frame >= config_.frames) {
        throw std::out_of_range("TokenGrid::at: index outside grid");
    }
    return tokens_[codebook][frame];
}

void TokenGrid::set(int codebook, int frame, int token) {
    if (codebook < 0 || codebook >= config_.codebooks || frame < 0 || frame >= config_.frames) {
        throw std::out_of_range("TokenGrid::set: index outside grid");
    }
    if (token < 0 || token >= config_.codebook_size) {
        throw std::invalid_argument("TokenGrid::set: token outside [0, codebook_size)");
    }
    tokens_[codebook][frame] = token;
}

std::string TokenGrid::to_json() const {
    nlohmann::json j;
    j["K"] = config_.codebooks;
    j["M"] = config_.codebook_size;
    j["T"] = config_.frames;
    j["tokens"] = tokens_;
    return j.dump();
}

TokenGrid TokenGrid::from_json(const std::string& text, double frame_rate) {
    nlohmann::json j = nlohmann::json::parse(text);
    CodecConfig config;
    config.codebooks = j.at("K").get<int>();
    config.codebook_size = j.at("M").get<int>();
    config.frames = j.at("T").get<int>();
    config.frame_rate = frame_rate;
    return TokenGrid(config, j.at("tokens").get<std::vector<std::vector<int>>>());
}

DelaySchedule apply_delay_pattern(const TokenGrid& grid) {
    const CodecConfig& config = grid.config();
    DelaySchedule schedule;
    schedule.config = config;
    schedule.slots.reserve(static_cast<size_t>(config.num_steps()) * config.codebooks);
    for (int step = 0; step < config.num_steps(); ++step) {
        for (int k = 0; k < config.codebooks; ++k) {
            const int frame = step - k;
            const bool live = frame >= 0 && frame < config.frames;
            schedule.slots.push_back({step, k, live ? grid.at(k, frame) : config.pad_token()});
        }
    }
    return schedule;
}

TokenGrid invert_delay_pattern(const DelaySchedule& schedule) {
    const CodecConfig& config = schedule.config;
    config.validate();
    const size_t expected = static_cast<size_t>(config.num_steps()) * config.codebooks;
    if (schedule.slots.size() != expected) {
        throw std::invalid_argument("invert_delay_pattern: schedule has " + std::to_string(schedule.slots.size()) +
                                    " slots, expected " + std::to_string(expected));
    }
    std::vector<std::vector<int>> tokens(config.codebooks, std::vector<int>(config.frames, -1));
    std::vector<std::vector<bool>> pad_seen(config.codebooks, std::vector<bool>(config.num_steps(), false));
    for (const DelaySlot& slot : schedule.slots) {
        if (slot.codebook < 0 || slot.codebook >= config.codebooks || slot.step < 0 ||
            slot.step >= config.num_steps()) {
            throw std::invalid_argument("invert_delay_pattern: slot outside schedule bounds");
        }
        const int frame = slot.step - slot.codebook;
        const bool live = frame >= 0 && frame < config.frames;
        if (live) {
            if (slot.token == config.pad_token()) {
                throw std::invalid_argument("invert_delay_pattern: padding token in a live slot");
            }
            if (tokens[slot.codebook][frame] != -1) {
                throw std::invalid_argument("invert_delay_pattern: overlapping slot for codebook " +
                                            std::to_string(slot.codebook) + ", frame " + std::to_string(frame));
            }
            tokens[slot.codebook][frame] = slot.token;
        } else {
            if (slot.token != config.pad_token()) {
                throw std::invalid_argument("invert_delay_pattern: non-padding token in a padding slot");
            }
            if (pad_seen[slot.codebook][slot.step]) {
                throw std::invalid_argument("invert_delay_pattern: duplicate padding slot");
            }
            pad_seen[slot.codebook][slot.step] = true;
        }
    }
    for (int k = 0; k < config.codebooks; ++k) {
        for (int t = 0; t < config.frames; ++t) {
            if (tokens[k][t] == -1) {
                throw std::invalid_argument("invert_delay_pattern: missing slot for codebook " + std::to_string(k) +
                                            ", frame " + std::to_string(t));
            }
        }
    }
    return TokenGrid(config, std::move(tokens));
}

namespace {

// FNV-1a over [salt byte] ++ per-codebook little-endian uint64 token bytes.
uint64_t column_hash(const TokenGrid& grid, int frame, uint8_t salt) {
    constexpr uint64_t kOffset = 0xCBF29CE484222325ULL;
    constexpr uint64_t kPrime = 0x100000001B3ULL;
    uint64_t h = kOffset;
    auto absorb = [&h](uint8_t byte) {
        h ^= byte;
        h *= kPrime;
    };
    absorb(salt);
    for (int k = 0; k < grid.config().codebooks; ++k) {
        uint64_t tok = static_cast<uint64_t>(grid.at(k, frame));
        for (int b = 0; b < 8; ++b) {
            absorb(static_cast<uint8_t>(tok & 0xFF));
            tok >>= 8;
        }
    }
    return h;
}

}  // namespace

FeatureFrames decode_features(const TokenGrid& grid) {
    const CodecConfig& config = grid.config();
    FeatureFrames frames;
    frames.frame_rate = config.frame_rate;
    frames.pitch_class.resize(config.frames);
    frames.dynamics.resize(config.frames);
    frames.beat_prob.resize(config.frames);
    for (int t = 0; t < config.frames; ++t) {
        frames.pitch_class[t] = static_cast<int>(column_hash(grid, t, 1) % 12);
        frames.dynamics[t] = static_cast<double>(column_hash(grid, t, 2) % 1000) / 999.0;
        const double u3 = static_cast<double>(column_hash(grid, t, 3) % 1000) / 999.0;
        frames.beat_prob[t] = (t % kBeatPeriodFrames == 0) ? 0.3 + 0.7 * u3 : 0.15 * u3;
    }
    return frames;
}

}  // namespace attnedit
