#include "attnedit/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace attnedit {

namespace {

void check_same_length(const FeatureFrames& a, const FeatureFrames& b, const char* what) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(what) + ": frame counts differ");
    }
}

// splitmix64 finalizer, used as the text-embedding hash.
uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

void l2_normalize(Embedding& v) {
    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    if (norm_sq == 0.0) {
        v[0] = 1.0;  // canonical direction for the degenerate all-zero case
        return;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
}

void mean_and_std(std::span<const double> xs, double& mean, double& stddev) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    stddev = std::sqrt(var);
}

}  // namespace

double melody_accuracy(const FeatureFrames& src, const FeatureFrames& edit) {
    check_same_length(src, edit, "melody_accuracy");
    if (src.size() == 0) {
        throw std::invalid_argument("melody_accuracy: no frames");
    }
    size_t hits = 0;
    for (size_t t = 0; t < src.size(); ++t) {
        if (src.pitch_class[t] == edit.pitch_class[t]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(src.size());
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("pearson: length mismatch");
    }
    if (x.size() < 2) {
        throw std::invalid_argument("pearson: need at least two points");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return sxy / std::sqrt(sxx * syy);
}

double dynamics_correlation(const FeatureFrames& src, const FeatureFrames& edit) {
    check_same_length(src, edit, "dynamics_correlation");
    return pearson(src.dynamics, edit.dynamics);
}

BeatTimestamps detect_beats(const FeatureFrames& frames) {
    const auto& b = frames.beat_prob;
    BeatTimestamps beats;
    for (size_t i = 0; i < b.size(); ++i) {
        const bool rising = i == 0 || b[i] > b[i - 1];
        const bool falling = i + 1 == b.size() || b[i] >= b[i + 1];
        if (!rising || !falling || b[i] < kBeatThreshold) continue;
        const double t = static_cast<double>(i) / frames.frame_rate;
        // Suppressed peaks do not extend the refractory window; the epsilon
        // keeps an exactly-100ms gap (a representable boundary at typical
        // frame rates) on the accepted side.
        if (!beats.empty() && t - beats.back() < kBeatRefractorySeconds - 1e-9) continue;
        beats.push_back(t);
    }
    return beats;
}

double rhythm_f1(const BeatTimestamps& reference, const BeatTimestamps& estimated, double tolerance) {
    if (reference.empty() && estimated.empty()) return 1.0;
    if (reference.empty() || estimated.empty()) return 0.0;
    size_t i = 0, j = 0;
    size_t matches = 0;
    while (i < reference.size() && j < estimated.size()) {
        if (std::abs(reference[i] - estimated[j]) < tolerance) {
            ++matches;
            ++i;
            ++j;
        } else if (estimated[j] < reference[i]) {
            ++j;
        } else {
            ++i;
        }
    }
    return 2.0 * static_cast<double>(matches) /
           static_cast<double>(reference.size() + estimated.size());
}

Embedding embed_audio(const FeatureFrames& frames) {
    if (frames.size() == 0) {
        throw std::invalid_argument("embed_audio: no frames");
    }
    const double n = static_cast<double>(frames.size());
    Embedding v{};
    for (int pc : frames.pitch_class) {
        v[static_cast<size_t>(pc)] += 1.0 / n;
    }
    for (double d : frames.dynamics) {
        const int bin = std::min(7, static_cast<int>(std::floor(d * 8.0)));
        v[static_cast<size_t>(12 + bin)] += 1.0 / n;
    }
    const auto& b = frames.beat_prob;
    for (int lag = 1; lag <= 8; ++lag) {
        double acf = 0.0;
        for (size_t t = 0; t + static_cast<size_t>(lag) < b.size(); ++t) {
            acf += b[t] * b[t + static_cast<size_t>(lag)];
        }
        v[static_cast<size_t>(19 + lag)] = acf / n;
    }
    mean_and_std(frames.dynamics, v[28], v[29]);
    mean_and_std(frames.beat_prob, v[30], v[31]);
    l2_normalize(v);
    return v;
}

Embedding embed_text(const Prompt& prompt) {
    Embedding v{};
    for (int tok : prompt.tokens) {
        const uint64_t base = (static_cast<uint64_t>(tok) + 1) * 0x9E3779B97F4A7C15ULL;
        for (int d = 0; d < kEmbeddingDim; ++d) {
            const uint64_t r = mix64(base + static_cast<uint64_t>(d));
            v[static_cast<size_t>(d)] += 2.0 * (static_cast<double>(r >> 11) * 0x1.0p-53) - 1.0;
        }
    }
    l2_normalize(v);
    return v;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    }
    double dot = 0.0, uu = 0.0, vv = 0.0;
    for (size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (uu == 0.0 || vv == 0.0) {
        throw std::invalid_argument("cosine_similarity: zero-norm input");
    }
    return dot / std::sqrt(uu * vv);
}

MetricsReport compute_report(const FeatureFrames& source, const FeatureFrames& edited,
                             const Prompt& p, const Prompt& p_star) {
    MetricsReport report;
    report.melody_accuracy = melody_accuracy(source, edited);
    report.dynamics_correlation = dynamics_correlation(source, edited);
    report.rhythm_f1 = rhythm_f1(detect_beats(source), detect_beats(edited));
    const Embedding src_audio = embed_audio(source);
    const Embedding edit_audio = embed_audio(edited);
    report.a2a_similarity = cosine_similarity(src_audio, edit_audio);
    report.t2a_similarity_source = cosine_similarity(embed_text(p), edit_audio);
    report.t2a_similarity_edited = cosine_similarity(embed_text(p_star), edit_audio);
    return report;
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["melody_accuracy"] = melody_accuracy;
    if (std::isnan(dynamics_correlation)) {
        j["dynamics_correlation"] = nullptr;
        j["dynamics_correlation_degenerate"] = true;
    } else {
        j["dynamics_correlation"] = dynamics_correlation;
    }
    j["rhythm_f1"] = rhythm_f1;
    j["a2a_similarity"] = a2a_similarity;
    j["t2a_similarity_source"] = t2a_similarity_source;
    j["t2a_similarity_edited"] = t2a_similarity_edited;
    return j.dump();
}

}  // namespace attnedit
