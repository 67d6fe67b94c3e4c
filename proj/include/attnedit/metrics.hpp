#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "attnedit/codec.hpp"
#include "attnedit/text.hpp"

namespace attnedit {

// Beat instants in seconds, strictly increasing.
using BeatTimestamps = std::vector<double>;

inline constexpr int kEmbeddingDim = 32;
inline constexpr double kBeatMatchTolerance = 0.070;   // strict: |delta| < tolerance
inline constexpr double kBeatThreshold = 0.5;
inline constexpr double kBeatRefractorySeconds = 0.1;

using Embedding = std::array<double, kEmbeddingDim>;

struct MetricsReport {
    double melody_accuracy = 0.0;
    double dynamics_correlation = 0.0;  // NaN when either dynamics sequence is constant
    double rhythm_f1 = 0.0;
    double a2a_similarity = 0.0;
    double t2a_similarity_source = 0.0;
    double t2a_similarity_edited = 0.0;

    // Flat JSON object keyed by field name. A NaN correlation serializes as
    // null with "dynamics_correlation_degenerate": true alongside.
    std::string to_json() const;
};

// Fraction of frames whose pitch classes agree. Throws on length mismatch or
// empty input.
double melody_accuracy(const FeatureFrames& src, const FeatureFrames& edit);

// Sample Pearson correlation. Needs >= 2 points; returns NaN when either side
// has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

double dynamics_correlation(const FeatureFrames& src, const FeatureFrames& edit);

// Local maxima of beat_prob with value >= 0.5, at least 100 ms after the last
// kept beat. Timestamp = frame_index / frame_rate.
BeatTimestamps detect_beats(const FeatureFrames& frames);

// Greedy in-order one-to-one matching within |delta| < tolerance;
// F1 = 2*matches / (len(ref) + len(est)). Both empty -> 1, one empty -> 0.
double rhythm_f1(const BeatTimestamps& reference, const BeatTimestamps& estimated,
                 double tolerance = kBeatMatchTolerance);

// Deterministic stand-in embeddings (not a pretrained audio/text model);
// absolute similarity values are not comparable to published CLAP scores.
// Audio: 12-bin pitch-class histogram, 8-bin dynamics histogram, beat
// autocorrelation at lags 1..8, then mean/std of dynamics and beat. Text:
// seeded-hash bag of token ids. Both L2-normalized.
Embedding embed_audio(const FeatureFrames& frames);
Embedding embed_text(const Prompt& prompt);

// u.v / (|u||v|). Throws on dimension mismatch or zero-norm input.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Full report for one edit run: frame metrics source vs edited, A2A between
// the two audio embeddings, T2A of the edited audio against both prompts.
MetricsReport compute_report(const FeatureFrames& source, const FeatureFrames& edited,
                             const Prompt& p, const Prompt& p_star);

}  // namespace attnedit
