#pragma once

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "attnedit/model.hpp"
#include "attnedit/text.hpp"

namespace attnedit {

// Swap tokens in place: the edited map is the captured source map from step
// tau onward, the freely computed one before. Prompts must tokenize to equal
// lengths. tau = 0 injects everywhere.
struct ReplaceEdit {
    int tau = 0;
};

// Add tokens: from step tau onward, target column j takes the source column
// alignment(j) when matched, its own free column otherwise.
struct RefineEdit {
    int tau = 0;
    Alignment alignment;
};

// Scale the source map's column token_index by `scale` in every head, no
// renormalization. Negative scales are allowed; applied at every step.
struct ReweightEdit {
    int token_index = 0;
    double scale = 1.0;
};

using EditSpec = std::variant<ReplaceEdit, RefineEdit, ReweightEdit>;

// Y replaces the free map outright.
struct HardInject {};
// Z = (i/N)*X + (1 - i/N)*Y with 0-based layer i, so layer 0 takes the edit
// output exactly and injection influence decays up the stack.
struct SoftBlend {};
// Z = s*X + (1-s)*Y at every layer; s=1 is free generation, s=0 is HardInject.
struct Strength {
    double s = 1.0;
};

using BlendMode = std::variant<HardInject, SoftBlend, Strength>;

AttentionMap edit_replace(const AttentionMap& m_source, const AttentionMap& m_free, int t, int tau);
AttentionMap edit_refine(const AttentionMap& m_source, const AttentionMap& m_free, int t, int tau,
                         const Alignment& alignment);
AttentionMap edit_reweight(const AttentionMap& m_source, int token_index, double scale);

// x = freely generated map, y = edit-function output.
AttentionMap blend(const AttentionMap& x, const AttentionMap& y, int layer_index, int n_layers,
                   const BlendMode& mode);

struct EditResult {
    TokenGrid source_grid;
    TokenGrid edited_grid;
    AttentionTrace source_trace;
    AttentionTrace edited_trace;
};

// Fired once per (step, layer) of the edit pass; `injected` reports whether
// the edit function took the captured-source branch at that step.
using InjectionObserver = std::function<void(int step, int layer, bool injected)>;

struct EditOptions {
    // Also feed the source run's self-attention maps through the same
    // gate-and-blend treatment. Off by default; cross-attention is the
    // mechanism under study.
    bool inject_self_attention = false;
    InjectionObserver observer;
};

// Capture pass (plain generation under p), then edit pass under p_star with a
// cross-attention hook computing Y per `spec` and returning
// blend(free, Y, layer, N, mode). Both passes share sample_seed, so identity
// edits reproduce the source grid bit-exactly.
EditResult run_edit(const Model& model, const Prompt& p, const Prompt& p_star, const EditSpec& spec,
                    const BlendMode& mode, uint64_t sample_seed, const EditOptions& options = {});

struct StrengthRow {
    double s = 0.0;
    double a2a = 0.0;
    double t2a_source = 0.0;
    double t2a_edited = 0.0;
};

// run_edit with Strength{s} for every (s, seed); each row holds per-seed means
// of A2A similarity and of the edited audio's similarity to both prompts.
std::vector<StrengthRow> prompt_strength_sweep(const Model& model, const Prompt& p, const Prompt& p_star,
                                               const EditSpec& spec, const std::vector<uint64_t>& seeds,
                                               const std::vector<double>& strengths);

}  // namespace attnedit
