#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "attnedit/codec.hpp"
#include "attnedit/matrix.hpp"
#include "attnedit/text.hpp"

namespace attnedit {

struct ModelConfig {
    int d_model = 64;
    int n_layers = 4;
    int n_heads = 4;
    CodecConfig codec{};
    int vocab_size = 0;
    uint64_t weight_seed = 7;
    int top_k = 8;
    double temperature = 1.0;

    int head_dim() const { return d_model / n_heads; }
    void validate() const;
};

// rows = heads, cols = keys. Rows sum to 1 as produced by the model; edited
// maps fed back through hooks may break that on purpose.
using AttentionMap = Matrix;

struct TraceEntry {
    AttentionMap cross_used;   // map consumed by the value-weighted sum (post-hook)
    AttentionMap cross_free;   // map as computed before any hook
    AttentionMap self_used;
    AttentionMap self_free;
    bool operator==(const TraceEntry&) const = default;
};

// One entry per (decoding step, layer), covering the full delay schedule.
class AttentionTrace {
public:
    AttentionTrace() = default;
    AttentionTrace(int n_steps, int n_layers)
        : n_steps_(n_steps), n_layers_(n_layers), entries_(static_cast<size_t>(n_steps) * n_layers) {}

    int num_steps() const { return n_steps_; }
    int num_layers() const { return n_layers_; }

    TraceEntry& at(int step, int layer) { return entries_[static_cast<size_t>(step) * n_layers_ + layer]; }
    const TraceEntry& at(int step, int layer) const {
        return entries_[static_cast<size_t>(step) * n_layers_ + layer];
    }

    bool operator==(const AttentionTrace&) const = default;

private:
    int n_steps_ = 0;
    int n_layers_ = 0;
    std::vector<TraceEntry> entries_;
};

// Called at each (step, layer) with the freshly computed map; the returned map
// replaces it before the value-weighted sum. Must preserve the shape. Empty
// std::function means pass-through.
struct GenerationHook {
    std::function<AttentionMap(int step, int layer, const AttentionMap& cross_free)> cross;
    std::function<AttentionMap(int step, int layer, const AttentionMap& self_free)> self;
};

struct GenerationResult {
    TokenGrid grid;
    AttentionTrace trace;
};

// Decoder-only transformer over the delay-interleaved token schedule with
// cross-attention into an encoded text prompt. Weights are fixed at
// construction from weight_seed; the instance is immutable afterwards and
// shareable across threads. Each generate() call owns its mutable state.
class Model {
public:
    explicit Model(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }

    // FNV-1a over the raw bytes of every weight, in initialization order.
    uint64_t weight_checksum() const;

    // Embedding + sinusoidal positions + one bidirectional encoder block.
    // Returns L_text x d_model.
    Matrix encode_text(const Prompt& prompt) const;

    // Runs the full delay schedule (T+K-1 steps). Sampling draws come from a
    // fresh stream seeded with sample_seed, consumed in schedule order with
    // codebook 0 first; hooks never consume randomness.
    GenerationResult generate(const Prompt& prompt, uint64_t sample_seed,
                              const GenerationHook* hook = nullptr) const;

    // Weight introspection (shape checks in tests).
    const Matrix& text_embedding() const { return text_embedding_; }
    const Matrix& audio_embedding(int codebook) const { return audio_embeddings_[static_cast<size_t>(codebook)]; }
    const Matrix& output_head(int codebook) const { return output_heads_[static_cast<size_t>(codebook)]; }

private:
    struct AttentionWeights {
        Matrix wq, wk, wv, wo;
    };
    struct FeedForward {
        Matrix w1, w2;
        std::vector<double> b1, b2;
    };
    struct LayerNormParams {
        std::vector<double> gain, bias;
    };
    struct EncoderBlock {
        LayerNormParams ln_attn, ln_ffn, ln_out;
        AttentionWeights attn;
        FeedForward ffn;
    };
    struct DecoderLayer {
        LayerNormParams ln_self, ln_cross, ln_ffn;
        AttentionWeights self_attn, cross_attn;
        FeedForward ffn;
    };

    std::vector<double> decoder_input(int step, const TokenGrid& grid) const;
    AttentionMap attention_scores(std::span<const double> query, const Matrix& keys) const;
    std::vector<double> weighted_values(const AttentionMap& map, const Matrix& values) const;
    std::vector<double> feed_forward(const FeedForward& ffn, std::span<const double> x) const;

    ModelConfig config_;
    Matrix text_embedding_;                  // vocab_size x d_model
    EncoderBlock encoder_;
    std::vector<Matrix> audio_embeddings_;   // K of (M+1) x d_model; row M is the pad/start token
    std::vector<DecoderLayer> layers_;
    LayerNormParams final_ln_;
    std::vector<Matrix> output_heads_;       // K of d_model x M
};

// Sinusoidal position row: even dims sin(pos / 10000^(d/d_model)), odd cos.
std::vector<double> positional_encoding(int position, int d_model);

}  // namespace attnedit
