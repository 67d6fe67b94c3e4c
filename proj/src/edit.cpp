#include "attnedit/edit.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "attnedit/metrics.hpp"

namespace attnedit {

namespace {

AttentionMap mix_maps(const AttentionMap& x, const AttentionMap& y, double alpha) {
    AttentionMap z(x.rows(), x.cols());
    const auto& xd = x.data();
    const auto& yd = y.data();
    auto& zd = z.data();
    for (size_t i = 0; i < zd.size(); ++i) {
        zd[i] = alpha * xd[i] + (1.0 - alpha) * yd[i];
    }
    return z;
}

struct EditOutcome {
    AttentionMap map;
    bool injected = false;
};

EditOutcome apply_edit(const EditSpec& spec, const AttentionMap& m_source, const AttentionMap& m_free,
                       int step) {
    if (const auto* replace = std::get_if<ReplaceEdit>(&spec)) {
        return {edit_replace(m_source, m_free, step, replace->tau), step >= replace->tau};
    }
    if (const auto* refine = std::get_if<RefineEdit>(&spec)) {
        return {edit_refine(m_source, m_free, step, refine->tau, refine->alignment), step >= refine->tau};
    }
    const auto& reweight = std::get<ReweightEdit>(spec);
    return {edit_reweight(m_source, reweight.token_index, reweight.scale), true};
}

int injection_start(const EditSpec& spec) {
    if (const auto* replace = std::get_if<ReplaceEdit>(&spec)) return replace->tau;
    if (const auto* refine = std::get_if<RefineEdit>(&spec)) return refine->tau;
    return 0;
}

void validate_spec(const EditSpec& spec, const Prompt& p, const Prompt& p_star, int n_steps) {
    auto check_tau = [n_steps](int tau) {
        if (tau < 0 || tau > n_steps) {
            throw std::invalid_argument("run_edit: tau must lie in [0, " + std::to_string(n_steps) + "]");
        }
    };
    if (const auto* replace = std::get_if<ReplaceEdit>(&spec)) {
        check_tau(replace->tau);
        if (p.length() != p_star.length()) {
            throw std::invalid_argument("run_edit: token swap requires prompts of equal token length");
        }
        return;
    }
    if (const auto* refine = std::get_if<RefineEdit>(&spec)) {
        check_tau(refine->tau);
        const Alignment& a = refine->alignment;
        if (a.size() != p_star.length()) {
            throw std::invalid_argument("run_edit: alignment covers " + std::to_string(a.size()) +
                                        " target tokens, prompt has " + std::to_string(p_star.length()));
        }
        int prev = -1;
        for (int j = 0; j < a.size(); ++j) {
            if (!a.at(j)) continue;
            const int src = *a.at(j);
            if (src < 0 || src >= p.length()) {
                throw std::invalid_argument("run_edit: alignment maps outside the source prompt");
            }
            if (src <= prev) {
                throw std::invalid_argument("run_edit: alignment source indices must be strictly increasing");
            }
            prev = src;
        }
        return;
    }
    const auto& reweight = std::get<ReweightEdit>(spec);
    if (p.tokens != p_star.tokens) {
        throw std::invalid_argument("run_edit: reweighting keeps the prompt fixed; prompts differ");
    }
    if (reweight.token_index < 0 || reweight.token_index >= p.length()) {
        throw std::out_of_range("run_edit: reweight token index outside the prompt");
    }
    if (!std::isfinite(reweight.scale) || reweight.scale < -2.0 || reweight.scale > 2.0) {
        throw std::invalid_argument("run_edit: reweight scale must be finite and in [-2, 2]");
    }
}

}  // namespace

AttentionMap edit_replace(const AttentionMap& m_source, const AttentionMap& m_free, int t, int tau) {
    if (!m_source.same_shape(m_free)) {
        throw std::invalid_argument("edit_replace: source and free maps differ in shape");
    }
    return t < tau ? m_free : m_source;
}

AttentionMap edit_refine(const AttentionMap& m_source, const AttentionMap& m_free, int t, int tau,
                         const Alignment& alignment) {
    if (m_source.rows() != m_free.rows()) {
        throw std::invalid_argument("edit_refine: head counts differ");
    }
    if (alignment.size() != m_free.cols()) {
        throw std::invalid_argument("edit_refine: alignment covers " + std::to_string(alignment.size()) +
                                    " columns, free map has " + std::to_string(m_free.cols()));
    }
    if (t < tau) return m_free;
    AttentionMap out = m_free;
    for (int j = 0; j < out.cols(); ++j) {
        const auto& src_col = alignment.at(j);
        if (!src_col) continue;
        if (*src_col < 0 || *src_col >= m_source.cols()) {
            throw std::invalid_argument("edit_refine: alignment maps outside the source map");
        }
        for (int h = 0; h < out.rows(); ++h) {
            out.at(h, j) = m_source.at(h, *src_col);
        }
    }
    return out;
}

AttentionMap edit_reweight(const AttentionMap& m_source, int token_index, double scale) {
    if (token_index < 0 || token_index >= m_source.cols()) {
        throw std::out_of_range("edit_reweight: column " + std::to_string(token_index) + " out of range");
    }
    AttentionMap out = m_source;
    for (int h = 0; h < out.rows(); ++h) {
        out.at(h, token_index) *= scale;
    }
    return out;
}

AttentionMap blend(const AttentionMap& x, const AttentionMap& y, int layer_index, int n_layers,
                   const BlendMode& mode) {
    if (!x.same_shape(y)) {
        throw std::invalid_argument("blend: map shapes differ");
    }
    if (std::holds_alternative<HardInject>(mode)) {
        return y;
    }
    if (std::holds_alternative<SoftBlend>(mode)) {
        if (n_layers < 1 || layer_index < 0 || layer_index >= n_layers) {
            throw std::invalid_argument("blend: layer index outside [0, n_layers)");
        }
        // Endpoint kept exact: layer 0 is the edit output, untouched.
        if (layer_index == 0) return y;
        return mix_maps(x, y, static_cast<double>(layer_index) / n_layers);
    }
    const double s = std::get<Strength>(mode).s;
    if (!(s >= 0.0 && s <= 1.0)) {
        throw std::invalid_argument("blend: strength must lie in [0, 1]");
    }
    if (s == 1.0) return x;
    if (s == 0.0) return y;
    return mix_maps(x, y, s);
}

EditResult run_edit(const Model& model, const Prompt& p, const Prompt& p_star, const EditSpec& spec,
                    const BlendMode& mode, uint64_t sample_seed, const EditOptions& options) {
    const int n_layers = model.config().n_layers;
    validate_spec(spec, p, p_star, model.config().codec.num_steps());

    GenerationResult source = model.generate(p, sample_seed, nullptr);

    GenerationHook hook;
    hook.cross = [&](int step, int layer, const AttentionMap& m_free) {
        if (step >= source.trace.num_steps() || layer >= source.trace.num_layers()) {
            throw std::logic_error("run_edit: edit pass stepped past the captured trace");
        }
        EditOutcome outcome = apply_edit(spec, source.trace.at(step, layer).cross_used, m_free, step);
        if (options.observer) options.observer(step, layer, outcome.injected);
        return blend(m_free, outcome.map, layer, n_layers, mode);
    };
    if (options.inject_self_attention) {
        const int start = injection_start(spec);
        hook.self = [&, start](int step, int layer, const AttentionMap& m_free) {
            const AttentionMap& captured = source.trace.at(step, layer).self_used;
            const AttentionMap& y = step >= start ? captured : m_free;
            return blend(m_free, y, layer, n_layers, mode);
        };
    }

    GenerationResult edited = model.generate(p_star, sample_seed, &hook);
    return EditResult{std::move(source.grid), std::move(edited.grid), std::move(source.trace),
                      std::move(edited.trace)};
}

std::vector<StrengthRow> prompt_strength_sweep(const Model& model, const Prompt& p, const Prompt& p_star,
                                               const EditSpec& spec, const std::vector<uint64_t>& seeds,
                                               const std::vector<double>& strengths) {
    if (strengths.empty()) {
        throw std::invalid_argument("prompt_strength_sweep: no strengths given");
    }
    if (seeds.empty()) {
        throw std::invalid_argument("prompt_strength_sweep: no seeds given");
    }
    for (double s : strengths) {
        if (!(s >= 0.0 && s <= 1.0)) {
            throw std::invalid_argument("prompt_strength_sweep: strength must lie in [0, 1]");
        }
    }
    std::vector<StrengthRow> rows;
    rows.reserve(strengths.size());
    for (double s : strengths) {
        StrengthRow row;
        row.s = s;
        for (uint64_t seed : seeds) {
            const EditResult result = run_edit(model, p, p_star, spec, Strength{s}, seed);
            const Embedding source_audio = embed_audio(decode_features(result.source_grid));
            const Embedding edited_audio = embed_audio(decode_features(result.edited_grid));
            row.a2a += cosine_similarity(source_audio, edited_audio);
            row.t2a_source += cosine_similarity(embed_text(p), edited_audio);
            row.t2a_edited += cosine_similarity(embed_text(p_star), edited_audio);
        }
        const double n = static_cast<double>(seeds.size());
        row.a2a /= n;
        row.t2a_source /= n;
        row.t2a_edited /= n;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace attnedit
