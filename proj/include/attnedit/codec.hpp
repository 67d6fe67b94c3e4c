#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attnedit {

// Discrete-token clip layout: `codebooks` parallel streams (K), each holding
// `frames` tokens (T) drawn from [0, codebook_size) (M). frame_rate is the
// abstract time base used by beat timestamps.
struct CodecConfig {
    int codebooks = 2;
    int codebook_size = 64;
    int frames = 64;
    double frame_rate = 25.0;

    // Reserved index used only in the interleaved view; grids never hold it.
    int pad_token() const { return codebook_size; }
    // Length of the delay schedule: T + K - 1 decoder steps.
    int num_steps() const { return frames + codebooks - 1; }

    void validate() const;
    bool operator==(const CodecConfig&) const = default;
};

class TokenGrid {
public:
    TokenGrid() = default;
    explicit TokenGrid(const CodecConfig& config);  // zero-filled
    TokenGrid(const CodecConfig& config, std::vector<std::vector<int>> tokens);

    int at(int codebook, int frame) const;
    void set(int codebook, int frame, int token);

    const CodecConfig& config() const { return config_; }
    const std::vector<std::vector<int>>& tokens() const { return tokens_; }

    bool operator==(const TokenGrid&) const = default;

    // {"K":int,"M":int,"T":int,"tokens":[[int]]}. frame_rate is not part of
    // the wire format; the loader takes it from the caller.
    std::string to_json() const;
    static TokenGrid from_json(const std::string& text, double frame_rate = 25.0);

private:
    CodecConfig config_;
    std::vector<std::vector<int>> tokens_;
};

struct DelaySlot {
    int step = 0;
    int codebook = 0;
    int token = 0;  // == config.pad_token() marks padding
    bool operator==(const DelaySlot&) const = default;
};

struct DelaySchedule {
    CodecConfig config;
    std::vector<DelaySlot> slots;
};

// Schedules codebook k's frame t at decoder step t + k. Every (step, codebook)
// pair of the T+K-1 steps gets a slot; out-of-range frames carry the padding
// token.
DelaySchedule apply_delay_pattern(const TokenGrid& grid);

// Exact inverse; throws std::invalid_argument on an incomplete, overlapping,
// or otherwise malformed schedule.
TokenGrid invert_delay_pattern(const DelaySchedule& schedule);

struct FeatureFrames {
    std::vector<int> pitch_class;    // per frame, in [0, 12)
    std::vector<double> dynamics;    // per frame, in [0, 1]
    std::vector<double> beat_prob;   // per frame, in [0, 1]
    double frame_rate = 25.0;

    size_t size() const { return pitch_class.size(); }
};

// Beat-template period of the decoded beat_prob signal, in frames.
inline constexpr int kBeatPeriodFrames = 10;

// Deterministic stand-in for neural decoding + feature extraction. Per frame t
// all three features are functions of column t alone, via salted FNV-1a hashes
// of the column tokens (see README.md for the exact byte layout):
//   pitch_class = h(col, salt=1) mod 12
//   dynamics    = (h(col, salt=2) mod 1000) / 999
//   beat_prob   = 0.3 + 0.7*u3  on beat frames (t mod period == 0)
//                 0.15*u3       elsewhere,  u3 = (h(col, salt=3) mod 1000) / 999
FeatureFrames decode_features(const TokenGrid& grid);

}  // namespace attnedit
