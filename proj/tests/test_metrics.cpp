#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "attnedit/metrics.hpp"
#include "attnedit/prng.hpp"

using namespace attnedit;

namespace {

FeatureFrames make_frames(std::vector<int> pitch, std::vector<double> dynamics,
                          std::vector<double> beat, double frame_rate = 25.0) {
    FeatureFrames frames;
    frames.pitch_class = std::move(pitch);
    frames.dynamics = std::move(dynamics);
    frames.beat_prob = std::move(beat);
    frames.frame_rate = frame_rate;
    return frames;
}

FeatureFrames beat_only(std::vector<double> beat, double frame_rate = 25.0) {
    const size_t n = beat.size();
    return make_frames(std::vector<int>(n, 0), std::vector<double>(n, 0.5), std::move(beat), frame_rate);
}

// Optimal in-order one-to-one matching size; both inputs sorted, so the
// maximum matching is achieved by some non-crossing one and plain DP finds it.
int best_matching(const BeatTimestamps& r, const BeatTimestamps& e, double tol) {
    std::vector<std::vector<int>> dp(r.size() + 1, std::vector<int>(e.size() + 1, 0));
    for (size_t i = 1; i <= r.size(); ++i) {
        for (size_t j = 1; j <= e.size(); ++j) {
            const int hit = std::abs(r[i - 1] - e[j - 1]) < tol ? 1 : 0;
            dp[i][j] = std::max({dp[i - 1][j], dp[i][j - 1], dp[i - 1][j - 1] + hit});
        }
    }
    return dp[r.size()][e.size()];
}

BeatTimestamps random_timestamps(Prng& rng, int max_len) {
    const int n = static_cast<int>(rng.next_u64() % static_cast<uint64_t>(max_len + 1));
    BeatTimestamps out;
    double t = 0.0;
    for (int i = 0; i < n; ++i) {
        t += 0.02 + 0.2 * rng.next_double();
        out.push_back(t);
    }
    return out;
}

}  // namespace

TEST_CASE("melody accuracy counts agreeing pitch classes") {
    const FeatureFrames a = make_frames({0, 1, 2, 3}, {0, 0, 0, 0}, {0, 0, 0, 0});
    const FeatureFrames b = make_frames({0, 1, 5, 3}, {0, 0, 0, 0}, {0, 0, 0, 0});
    CHECK(melody_accuracy(a, b) == 0.75);
    CHECK(melody_accuracy(b, a) == 0.75);
    CHECK(melody_accuracy(a, a) == 1.0);
    const FeatureFrames c = make_frames({4, 5, 6, 7}, {0, 0, 0, 0}, {0, 0, 0, 0});
    CHECK(melody_accuracy(a, c) == 0.0);

    const FeatureFrames shorter = make_frames({0, 1}, {0, 0}, {0, 0});
    CHECK_THROWS_AS(melody_accuracy(a, shorter), std::invalid_argument);
    const FeatureFrames empty = make_frames({}, {}, {});
    CHECK_THROWS_AS(melody_accuracy(empty, empty), std::invalid_argument);
}

TEST_CASE("pearson correlation hits the textbook cases") {
    const std::vector<double> x{1, 2, 3, 4};
    CHECK(pearson(x, std::vector<double>{2, 4, 6, 8}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson(x, std::vector<double>{8, 6, 4, 2}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pearson(x, std::vector<double>{2, 4, 5, 9}) ==
          doctest::Approx(0.9647638212377322).epsilon(1e-15));
    CHECK(std::isnan(pearson(std::vector<double>{5, 5, 5}, std::vector<double>{1, 2, 3})));
    CHECK(std::isnan(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{7, 7, 7})));
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}), std::invalid_argument);
}

TEST_CASE("pearson correlation is symmetric and affine invariant") {
    Prng rng(91);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(8), y(8);
        for (int i = 0; i < 8; ++i) {
            x[static_cast<size_t>(i)] = rng.next_double();
            y[static_cast<size_t>(i)] = rng.next_double();
        }
        const double r = pearson(x, y);
        CHECK(pearson(y, x) == doctest::Approx(r).epsilon(1e-12));

        std::vector<double> scaled = x;
        for (double& v : scaled) v = 3.5 * v + 2.0;
        CHECK(pearson(scaled, y) == doctest::Approx(r).epsilon(1e-9));

        std::vector<double> negated = y;
        for (double& v : negated) v = -v;
        CHECK(pearson(x, negated) == doctest::Approx(-r).epsilon(1e-9));
    }
}

TEST_CASE("beat detection picks thresholded local maxima") {
    CHECK(detect_beats(beat_only({0, 0, 0, 0})).empty());

    std::vector<double> spike(20, 0.0);
    spike[10] = 0.8;
    const BeatTimestamps one = detect_beats(beat_only(spike));
    REQUIRE(one.size() == 1);
    CHECK(one[0] == 0.4);  // frame 10 at 25 fps

    std::vector<double> weak(20, 0.0);
    weak[10] = 0.49;
    CHECK(detect_beats(beat_only(weak)).empty());

    std::vector<double> exact(20, 0.0);
    exact[10] = 0.5;
    CHECK(detect_beats(beat_only(exact)).size() == 1);

    std::vector<double> plateau(20, 0.0);
    plateau[5] = plateau[6] = 0.9;
    const BeatTimestamps flat = detect_beats(beat_only(plateau));
    REQUIRE(flat.size() == 1);
    CHECK(flat[0] == 5.0 / 25.0);  // a flat top counts once, at its first frame
}

TEST_CASE("beat detection enforces the refractory gap from the last kept beat") {
    std::vector<double> close(20, 0.0);
    close[10] = 0.9;
    close[12] = 0.9;  // 80 ms later
    const BeatTimestamps suppressed = detect_beats(beat_only(close));
    REQUIRE(suppressed.size() == 1);
    CHECK(suppressed[0] == 0.4);

    std::vector<double> apart(20, 0.0);
    apart[10] = 0.9;
    apart[13] = 0.9;  // 120 ms later
    CHECK(detect_beats(beat_only(apart)).size() == 2);

    // A suppressed peak must not push the window forward: 10 -> 12 is too
    // close, but 10 -> 14 is fine even though 12 -> 14 would not be.
    std::vector<double> chain(20, 0.0);
    chain[10] = 0.9;
    chain[12] = 0.9;
    chain[14] = 0.9;
    const BeatTimestamps kept = detect_beats(beat_only(chain));
    REQUIRE(kept.size() == 2);
    CHECK(kept[0] == 0.4);
    CHECK(kept[1] == doctest::Approx(0.56).epsilon(1e-12));

    // An exactly-100ms gap stays on the accepted side (two frames at 20 fps).
    std::vector<double> boundary(8, 0.0);
    boundary[2] = 0.9;
    boundary[4] = 0.9;
    CHECK(detect_beats(beat_only(boundary, 20.0)).size() == 2);
}

TEST_CASE("rhythm f1 matches in order within a strict tolerance") {
    const BeatTimestamps ref{0.4, 1.0, 1.6};
    CHECK(rhythm_f1(ref, ref) == 1.0);

    BeatTimestamps shifted = ref;
    for (double& t : shifted) t += 0.060;
    CHECK(rhythm_f1(ref, shifted) == 1.0);

    CHECK(rhythm_f1({0.4}, {0.48}) == 0.0);  // 80 ms off

    CHECK(rhythm_f1({1.0, 2.0, 3.0}, {1.05, 2.5}) == 0.4);

    CHECK(rhythm_f1({}, {}) == 1.0);
    CHECK(rhythm_f1(ref, {}) == 0.0);
    CHECK(rhythm_f1({}, ref) == 0.0);

    CHECK(rhythm_f1({0.0}, {0.07}) == 0.0);  // the boundary itself does not match
    CHECK(rhythm_f1({0.0}, {0.0699}) == 1.0);
}

TEST_CASE("greedy beat matching is optimal for short sequences") {
    Prng rng(123);
    for (int trial = 0; trial < 500; ++trial) {
        const BeatTimestamps ref = random_timestamps(rng, 6);
        const BeatTimestamps est = random_timestamps(rng, 6);
        double expected;
        if (ref.empty() && est.empty()) {
            expected = 1.0;
        } else if (ref.empty() || est.empty()) {
            expected = 0.0;
        } else {
            const int m = best_matching(ref, est, kBeatMatchTolerance);
            expected = 2.0 * m / static_cast<double>(ref.size() + est.size());
        }
        CHECK(rhythm_f1(ref, est) == expected);
    }
}

TEST_CASE("audio embeddings land in the documented slots") {
    const FeatureFrames frames =
        make_frames({0, 0, 5}, {0.0, 0.5, 0.999}, {0.2, 0.6, 0.4});
    const Embedding v = embed_audio(frames);

    double norm_sq = 0.0;
    for (double x : v) norm_sq += x * x;
    CHECK(norm_sq == doctest::Approx(1.0).epsilon(1e-9));

    CHECK(embed_audio(frames) == v);

    // normalization preserves ratios, so the layout can be read off directly
    CHECK(v[0] / v[5] == doctest::Approx(2.0).epsilon(1e-12));            // pitch histogram
    CHECK(v[12] == v[16]);                                                // dynamics bins 0 and 4
    CHECK(v[19] == v[16]);                                                // dynamics bin 7
    const double lag1 = (0.2 * 0.6 + 0.6 * 0.4) / 3.0;
    const double lag2 = (0.2 * 0.4) / 3.0;
    CHECK(v[20] / v[21] == doctest::Approx(lag1 / lag2).epsilon(1e-12));  // beat autocorrelation
    for (int idx : {1, 2, 3, 4, 6, 7, 8, 9, 10, 11, 13, 14, 15, 17, 18, 22, 23, 24, 25, 26, 27}) {
        CHECK(v[static_cast<size_t>(idx)] == 0.0);
    }
    CHECK(v[28] > 0.0);  // dynamics mean
    CHECK(v[30] > 0.0);  // beat mean

    CHECK_THROWS_AS(embed_audio(make_frames({}, {}, {})), std::invalid_argument);
}

TEST_CASE("text embeddings follow the seeded-hash construction") {
    Prompt p;
    p.raw = "x";
    p.tokens = {3};
    const Embedding v = embed_text(p);

    Embedding expected{};
    const uint64_t base = 4ULL * 0x9E3779B97F4A7C15ULL;
    double norm_sq = 0.0;
    for (int d = 0; d < kEmbeddingDim; ++d) {
        uint64_t z = base + static_cast<uint64_t>(d);
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        expected[static_cast<size_t>(d)] = 2.0 * (static_cast<double>(z >> 11) * 0x1.0p-53) - 1.0;
        norm_sq += expected[static_cast<size_t>(d)] * expected[static_cast<size_t>(d)];
    }
    for (double& x : expected) x /= std::sqrt(norm_sq);
    for (int d = 0; d < kEmbeddingDim; ++d) {
        CHECK(v[static_cast<size_t>(d)] == doctest::Approx(expected[static_cast<size_t>(d)]).epsilon(1e-15));
    }

    CHECK(embed_text(p) == v);

    Prompt q;
    q.raw = "y";
    q.tokens = {4, 9};
    const Embedding w = embed_text(q);
    CHECK(cosine_similarity(v, w) < 1.0);

    double wn = 0.0;
    for (double x : w) wn += x * x;
    CHECK(wn == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cosine similarity behaves like an inner product should") {
    const std::vector<double> u{0.3, 0.4, 0.5};
    CHECK(cosine_similarity(u, u) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
    CHECK(cosine_similarity(std::vector<double>{1, 1}, std::vector<double>{1, 0}) ==
          doctest::Approx(0.70710678).epsilon(1e-5));
    CHECK_THROWS_AS(cosine_similarity(u, std::vector<double>{1, 2}), std::invalid_argument);
    CHECK_THROWS_AS(cosine_similarity(u, std::vector<double>{0, 0, 0}), std::invalid_argument);
}

TEST_CASE("the report wires every metric to the right field") {
    const FeatureFrames src =
        make_frames({0, 1, 2, 3, 4}, {0.1, 0.5, 0.3, 0.8, 0.2}, {0.9, 0.0, 0.0, 0.0, 0.8});
    const FeatureFrames edit =
        make_frames({0, 1, 5, 3, 4}, {0.2, 0.4, 0.35, 0.7, 0.25}, {0.85, 0.0, 0.0, 0.0, 0.0});
    Prompt p;
    p.tokens = {1, 2};
    Prompt p_star;
    p_star.tokens = {1, 3};

    const MetricsReport report = compute_report(src, edit, p, p_star);
    CHECK(report.melody_accuracy == melody_accuracy(src, edit));
    CHECK(report.dynamics_correlation == dynamics_correlation(src, edit));
    CHECK(report.rhythm_f1 == rhythm_f1(detect_beats(src), detect_beats(edit)));
    CHECK(report.a2a_similarity ==
          cosine_similarity(embed_audio(src), embed_audio(edit)));
    CHECK(report.t2a_similarity_source ==
          cosine_similarity(embed_text(p), embed_audio(edit)));
    CHECK(report.t2a_similarity_edited ==
          cosine_similarity(embed_text(p_star), embed_audio(edit)));
}

TEST_CASE("report json flags a degenerate correlation instead of emitting NaN") {
    MetricsReport report;
    report.melody_accuracy = 0.5;
    report.dynamics_correlation = std::numeric_limits<double>::quiet_NaN();
    report.rhythm_f1 = 0.25;
    const auto degenerate = nlohmann::json::parse(report.to_json());
    CHECK(degenerate["dynamics_correlation"].is_null());
    CHECK(degenerate["dynamics_correlation_degenerate"] == true);
    CHECK(degenerate["melody_accuracy"] == 0.5);

    report.dynamics_correlation = 0.75;
    const auto normal = nlohmann::json::parse(report.to_json());
    CHECK(normal["dynamics_correlation"] == 0.75);
    CHECK_FALSE(normal.contains("dynamics_correlation_degenerate"));
}
