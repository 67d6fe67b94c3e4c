#include "attnedit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "attnedit/prng.hpp"

namespace attnedit {

void ModelConfig::validate() const {
    codec.validate();
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0) {
        throw std::invalid_argument("ModelConfig: d_model must be a positive multiple of n_heads");
    }
    if (n_layers < 2) {
        throw std::invalid_argument("ModelConfig: n_layers must be >= 2");
    }
    if (vocab_size < 1) {
        throw std::invalid_argument("ModelConfig: vocab_size must be >= 1");
    }
    if (top_k < 1) {
        throw std::invalid_argument("ModelConfig: top_k must be >= 1");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("ModelConfig: temperature must be positive");
    }
}

std::vector<double> positional_encoding(int position, int d_model) {
    std::vector<double> pe(static_cast<size_t>(d_model));
    for (int d = 0; d < d_model; d += 2) {
        const double rate = std::pow(10000.0, -static_cast<double>(d) / d_model);
        pe[static_cast<size_t>(d)] = std::sin(position * rate);
        if (d + 1 < d_model) {
            pe[static_cast<size_t>(d) + 1] = std::cos(position * rate);
        }
    }
    return pe;
}

namespace {

// Weight matrices are filled row-major with uniform draws in
// [-1/sqrt(d_model), 1/sqrt(d_model)], in the documented declaration order.
// LayerNorm params and feed-forward biases are constants (1/0) and consume no
// draws.
Matrix init_matrix(int rows, int cols, double scale, Prng& rng) {
    Matrix m(rows, cols);
    for (double& w : m.data()) {
        w = rng.next_uniform(-scale, scale);
    }
    return m;
}

void add_inplace(std::vector<double>& a, std::span<const double> b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

uint64_t fnv1a_bytes(uint64_t h, const void* data, size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

constexpr double kLayerNormEps = 1e-5;

// Deterministic top-k sampling: the top_k largest logits (ties to the lower
// index), softmaxed at `temperature`, one uniform draw via the categorical
// sampler.
int sample_top_k(std::span<const double> logits, int top_k, double temperature, Prng& rng) {
    const int n = static_cast<int>(logits.size());
    const int k = std::min(top_k, n);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        if (logits[static_cast<size_t>(a)] != logits[static_cast<size_t>(b)]) {
            return logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(b)];
        }
        return a < b;
    });
    double max_logit = logits[static_cast<size_t>(order[0])];
    std::vector<double> probs(static_cast<size_t>(k));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        probs[static_cast<size_t>(i)] = std::exp((logits[static_cast<size_t>(order[static_cast<size_t>(i)])] - max_logit) / temperature);
        sum += probs[static_cast<size_t>(i)];
    }
    for (double& p : probs) p /= sum;
    return order[static_cast<size_t>(sample_categorical(probs, rng))];
}

}  // namespace

Model::Model(const ModelConfig& config) : config_(config) {
    config.validate();
    Prng rng(config.weight_seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));
    const int d = config.d_model;
    const int d_ff = 4 * d;
    const int pad_rows = config.codec.codebook_size + 1;

    auto make_ln = [d]() {
        return LayerNormParams{std::vector<double>(static_cast<size_t>(d), 1.0),
                               std::vector<double>(static_cast<size_t>(d), 0.0)};
    };
    auto make_attention = [&](Prng& r) {
        return AttentionWeights{init_matrix(d, d, scale, r), init_matrix(d, d, scale, r),
                                init_matrix(d, d, scale, r), init_matrix(d, d, scale, r)};
    };
    auto make_ffn = [&](Prng& r) {
        return FeedForward{init_matrix(d, d_ff, scale, r), init_matrix(d_ff, d, scale, r),
                           std::vector<double>(static_cast<size_t>(d_ff), 0.0),
                           std::vector<double>(static_cast<size_t>(d), 0.0)};
    };

    text_embedding_ = init_matrix(config.vocab_size, d, scale, rng);
    encoder_ = EncoderBlock{make_ln(), make_ln(), make_ln(), make_attention(rng), make_ffn(rng)};
    audio_embeddings_.reserve(static_cast<size_t>(config.codec.codebooks));
    for (int k = 0; k < config.codec.codebooks; ++k) {
        audio_embeddings_.push_back(init_matrix(pad_rows, d, scale, rng));
    }
    layers_.reserve(static_cast<size_t>(config.n_layers));
    for (int l = 0; l < config.n_layers; ++l) {
        layers_.push_back(DecoderLayer{make_ln(), make_ln(), make_ln(), make_attention(rng), make_attention(rng),
                                       make_ffn(rng)});
    }
    final_ln_ = make_ln();
    output_heads_.reserve(static_cast<size_t>(config.codec.codebooks));
    for (int k = 0; k < config.codec.codebooks; ++k) {
        output_heads_.push_back(init_matrix(d, config.codec.codebook_size, scale, rng));
    }
}

uint64_t Model::weight_checksum() const {
    uint64_t h = 0xCBF29CE484222325ULL;
    auto absorb_vec = [&h](const std::vector<double>& v) {
        h = fnv1a_bytes(h, v.data(), v.size() * sizeof(double));
    };
    auto absorb_mat = [&absorb_vec](const Matrix& m) { absorb_vec(m.data()); };
    absorb_mat(text_embedding_);
    absorb_mat(encoder_.attn.wq);
    absorb_mat(encoder_.attn.wk);
    absorb_mat(encoder_.attn.wv);
    absorb_mat(encoder_.attn.wo);
    absorb_mat(encoder_.ffn.w1);
    absorb_mat(encoder_.ffn.w2);
    for (const auto& emb : audio_embeddings_) absorb_mat(emb);
    for (const auto& layer : layers_) {
        absorb_mat(layer.self_attn.wq);
        absorb_mat(layer.self_attn.wk);
        absorb_mat(layer.self_attn.wv);
        absorb_mat(layer.self_attn.wo);
        absorb_mat(layer.cross_attn.wq);
        absorb_mat(layer.cross_attn.wk);
        absorb_mat(layer.cross_attn.wv);
        absorb_mat(layer.cross_attn.wo);
        absorb_mat(layer.ffn.w1);
        absorb_mat(layer.ffn.w2);
    }
    for (const auto& head : output_heads_) absorb_mat(head);
    return h;
}

Matrix Model::encode_text(const Prompt& prompt) const {
    if (prompt.tokens.empty()) {
        throw std::invalid_argument("encode_text: prompt has no tokens");
    }
    const int d = config_.d_model;
    const int len = prompt.length();
    Matrix x(len, d);
    for (int pos = 0; pos < len; ++pos) {
        const int tok = prompt.tokens[static_cast<size_t>(pos)];
        if (tok < 0 || tok >= config_.vocab_size) {
            throw std::out_of_range("encode_text: token id " + std::to_string(tok) + " outside the vocabulary");
        }
        const auto emb = text_embedding_.row(tok);
        const auto pe = positional_encoding(pos, d);
        for (int c = 0; c < d; ++c) {
            x.at(pos, c) = emb[static_cast<size_t>(c)] + pe[static_cast<size_t>(c)];
        }
    }

    // One bidirectional pre-LN block: attention, feed-forward, output norm.
    Matrix normed(len, d);
    for (int pos = 0; pos < len; ++pos) {
        const auto h = layer_norm(x.row(pos), encoder_.ln_attn.gain, encoder_.ln_attn.bias, kLayerNormEps);
        std::copy(h.begin(), h.end(), normed.row(pos).begin());
    }
    const Matrix queries = matmul(normed, encoder_.attn.wq);
    const Matrix keys = matmul(normed, encoder_.attn.wk);
    const Matrix values = matmul(normed, encoder_.attn.wv);
    for (int pos = 0; pos < len; ++pos) {
        const AttentionMap map = attention_scores(queries.row(pos), keys);
        auto attn = weighted_values(map, values);
        auto out = vecmat(attn, encoder_.attn.wo);
        for (int c = 0; c < d; ++c) {
            x.at(pos, c) += out[static_cast<size_t>(c)];
        }
    }
    for (int pos = 0; pos < len; ++pos) {
        const auto h = layer_norm(x.row(pos), encoder_.ln_ffn.gain, encoder_.ln_ffn.bias, kLayerNormEps);
        const auto ffn = feed_forward(encoder_.ffn, h);
        for (int c = 0; c < d; ++c) {
            x.at(pos, c) += ffn[static_cast<size_t>(c)];
        }
    }
    Matrix out(len, d);
    for (int pos = 0; pos < len; ++pos) {
        const auto h = layer_norm(x.row(pos), encoder_.ln_out.gain, encoder_.ln_out.bias, kLayerNormEps);
        std::copy(h.begin(), h.end(), out.row(pos).begin());
    }
    return out;
}

std::vector<double> Model::decoder_input(int step, const TokenGrid& grid) const {
    const int d = config_.d_model;
    std::vector<double> x = positional_encoding(step, d);
    for (int k = 0; k < config_.codec.codebooks; ++k) {
        const int prev_frame = step - 1 - k;  // token this codebook emitted at step-1
        const bool live = prev_frame >= 0 && prev_frame < config_.codec.frames;
        const int tok = live ? grid.at(k, prev_frame) : config_.codec.pad_token();
        add_inplace(x, audio_embeddings_[static_cast<size_t>(k)].row(tok));
    }
    return x;
}

AttentionMap Model::attention_scores(std::span<const double> query, const Matrix& keys) const {
    const int n_heads = config_.n_heads;
    const int head_dim = config_.head_dim();
    Matrix scores(n_heads, keys.rows());
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * head_dim;
        for (int j = 0; j < keys.rows(); ++j) {
            const auto key = keys.row(j);
            double dot = 0.0;
            for (int c = 0; c < head_dim; ++c) {
                dot += query[static_cast<size_t>(off + c)] * key[static_cast<size_t>(off + c)];
            }
            scores.at(h, j) = dot;
        }
    }
    return softmax_rows(scores, 1.0 / std::sqrt(static_cast<double>(head_dim)));
}

std::vector<double> Model::weighted_values(const AttentionMap& map, const Matrix& values) const {
    const int n_heads = config_.n_heads;
    const int head_dim = config_.head_dim();
    std::vector<double> out(static_cast<size_t>(config_.d_model), 0.0);
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * head_dim;
        for (int j = 0; j < values.rows(); ++j) {
            const double w = map.at(h, j);
            const auto value = values.row(j);
            for (int c = 0; c < head_dim; ++c) {
                out[static_cast<size_t>(off + c)] += w * value[static_cast<size_t>(off + c)];
            }
        }
    }
    return out;
}

std::vector<double> Model::feed_forward(const FeedForward& ffn, std::span<const double> x) const {
    auto hidden = vecmat(x, ffn.w1);
    for (size_t i = 0; i < hidden.size(); ++i) {
        hidden[i] = std::max(0.0, hidden[i] + ffn.b1[i]);
    }
    auto out = vecmat(hidden, ffn.w2);
    add_inplace(out, ffn.b2);
    return out;
}

GenerationResult Model::generate(const Prompt& prompt, uint64_t sample_seed, const GenerationHook* hook) const {
    const CodecConfig& codec = config_.codec;
    const int n_steps = codec.num_steps();
    const int n_layers = config_.n_layers;

    const Matrix encoded = encode_text(prompt);
    // Per-layer projected text keys/values, fixed for the whole generation.
    std::vector<Matrix> cross_keys, cross_values;
    cross_keys.reserve(static_cast<size_t>(n_layers));
    cross_values.reserve(static_cast<size_t>(n_layers));
    for (const auto& layer : layers_) {
        cross_keys.push_back(matmul(encoded, layer.cross_attn.wk));
        cross_values.push_back(matmul(encoded, layer.cross_attn.wv));
    }

    TokenGrid grid(codec);
    AttentionTrace trace(n_steps, n_layers);
    Prng rng(sample_seed);

    struct KvCache {
        Matrix keys, values;  // grows one row per step
    };
    std::vector<KvCache> caches(static_cast<size_t>(n_layers));

    auto apply_hook = [](const std::function<AttentionMap(int, int, const AttentionMap&)>& fn, int step, int layer,
                         const AttentionMap& free_map, const char* kind) {
        if (!fn) return free_map;
        AttentionMap replaced = fn(step, layer, free_map);
        if (!replaced.same_shape(free_map)) {
            throw std::runtime_error(std::string("generate: hook returned a wrong-shape ") + kind + " map at step " +
                                     std::to_string(step));
        }
        return replaced;
    };

    for (int step = 0; step < n_steps; ++step) {
        std::vector<double> x = decoder_input(step, grid);

        for (int l = 0; l < n_layers; ++l) {
            const DecoderLayer& layer = layers_[static_cast<size_t>(l)];
            KvCache& cache = caches[static_cast<size_t>(l)];

            // Causal self-attention: the cache holds exactly positions 0..step,
            // so the map cannot place mass on the future.
            auto h = layer_norm(x, layer.ln_self.gain, layer.ln_self.bias, kLayerNormEps);
            const auto q = vecmat(h, layer.self_attn.wq);
            const auto key_row = vecmat(h, layer.self_attn.wk);
            const auto value_row = vecmat(h, layer.self_attn.wv);
            {
                Matrix grown_keys(step + 1, config_.d_model);
                Matrix grown_values(step + 1, config_.d_model);
                if (step > 0) {
                    std::copy(cache.keys.data().begin(), cache.keys.data().end(), grown_keys.data().begin());
                    std::copy(cache.values.data().begin(), cache.values.data().end(), grown_values.data().begin());
                }
                std::copy(key_row.begin(), key_row.end(), grown_keys.row(step).begin());
                std::copy(value_row.begin(), value_row.end(), grown_values.row(step).begin());
                cache.keys = std::move(grown_keys);
                cache.values = std::move(grown_values);
            }
            const AttentionMap self_free = attention_scores(q, cache.keys);
            const AttentionMap self_used = apply_hook(hook ? hook->self : nullptr, step, l, self_free, "self");
            auto attn = weighted_values(self_used, cache.values);
            add_inplace(x, vecmat(attn, layer.self_attn.wo));

            // Cross-attention into the encoded text.
            h = layer_norm(x, layer.ln_cross.gain, layer.ln_cross.bias, kLayerNormEps);
            const auto cq = vecmat(h, layer.cross_attn.wq);
            const AttentionMap cross_free = attention_scores(cq, cross_keys[static_cast<size_t>(l)]);
            const AttentionMap cross_used = apply_hook(hook ? hook->cross : nullptr, step, l, cross_free, "cross");
            auto cross_out = weighted_values(cross_used, cross_values[static_cast<size_t>(l)]);
            add_inplace(x, vecmat(cross_out, layer.cross_attn.wo));

            h = layer_norm(x, layer.ln_ffn.gain, layer.ln_ffn.bias, kLayerNormEps);
            add_inplace(x, feed_forward(layer.ffn, h));

            trace.at(step, l) = TraceEntry{cross_used, cross_free, self_used, self_free};
        }

        const auto y = layer_norm(x, final_ln_.gain, final_ln_.bias, kLayerNormEps);
        // Codebook k emits frame step-k; draws happen codebook 0 first so the
        // stream stays aligned across runs regardless of hooks.
        for (int k = 0; k < codec.codebooks; ++k) {
            const int frame = step - k;
            if (frame < 0 || frame >= codec.frames) continue;
            const auto logits = vecmat(y, output_heads_[static_cast<size_t>(k)]);
            grid.set(k, frame, sample_top_k(logits, config_.top_k, config_.temperature, rng));
        }
    }
    return GenerationResult{std::move(grid), std::move(trace)};
}

}  // namespace attnedit
