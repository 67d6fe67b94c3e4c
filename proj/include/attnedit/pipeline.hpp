#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnedit/edit.hpp"
#include "attnedit/metrics.hpp"
#include "attnedit/model.hpp"
#include "attnedit/text.hpp"

namespace attnedit {

enum class EditType { kReplace, kRefine, kReweight };

std::string to_string(EditType type);
EditType edit_type_from_string(const std::string& name);

// The six dataset axes, in canonical order.
const std::vector<std::string>& dataset_axes();

struct ReweightParams {
    std::string j_star_token;
    double c = 1.0;
    int token_index = -1;  // position of j_star_token in the source prompt, resolved at load
};

struct PromptPair {
    std::string id;
    EditType edit_type = EditType::kReplace;
    std::string axis;
    std::string source_prompt;
    std::string target_prompt;
    std::optional<ReweightParams> params;  // reweight only
};

// JSONL, one pair per line. Validation failures carry the line number and,
// where known, the pair id. Reweight pairs must name a token that occurs
// exactly once in the source prompt; replace pairs must tokenize to equal
// lengths; reweight prompts must be identical.
std::vector<PromptPair> load_dataset(const std::string& path);

struct RunRecord {
    std::string pair_id;
    uint64_t seed = 0;
    std::string blend_label;
    bool failed = false;
    std::string error;
    MetricsReport metrics;  // meaningless when failed
    std::string source_grid_path;
    std::string edited_grid_path;
    std::string source_trace_path;
    std::string edited_trace_path;
};

struct AggregateCell {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
    int count = 0;        // records that contributed
    bool incomplete = false;  // failed runs or degenerate values were skipped
};

struct DatasetRunResult {
    std::vector<RunRecord> records;
    // aggregate.at(edit_type_label).at(metric_name)
    std::map<std::string, std::map<std::string, AggregateCell>> aggregate;
};

struct RunOptions {
    std::string out_dir;       // empty: keep everything in memory, write nothing
    bool save_traces = false;  // trace CSVs are large, so they are opt-in
};

// One run_edit per (pair, seed): tau = 0 specs, refine alignments computed
// from the prompts. Individual failures are recorded on the RunRecord, never
// thrown. Deterministic given (pairs, seeds, model weights, mode).
DatasetRunResult run_dataset(const Model& model, const std::vector<PromptPair>& pairs,
                             const std::vector<uint64_t>& seeds, const BlendMode& mode,
                             const Vocabulary& vocab, const RunOptions& options = {});

struct BlendingRow {
    std::string label;  // "hard" or "soft"
    double t2a_mean = 0.0;
    double t2a_std = 0.0;
    double a2a_mean = 0.0;
    double a2a_std = 0.0;
    int count = 0;
};

// Runs the whole dataset once under full injection and once under per-layer
// soft blending; pools edited-prompt T2A and A2A over all records.
std::vector<BlendingRow> compare_blending(const Model& model, const std::vector<PromptPair>& pairs,
                                          const std::vector<uint64_t>& seeds, const Vocabulary& vocab);

// "step,layer,head,key_index,weight" rows of every cross-attention map in the
// trace, weights printed with %.17g so a re-import reproduces the doubles
// exactly.
void dump_attention(const AttentionTrace& trace, const std::string& csv_path);

struct AttentionCsvRow {
    int step = 0;
    int layer = 0;
    int head = 0;
    int key_index = 0;
    double weight = 0.0;
};

std::vector<AttentionCsvRow> read_attention_csv(const std::string& csv_path);

// One "<prefix>_layer<i>.csv" per layer: a step x key grid of head-summed
// cross-attention weight.
void dump_attention_heatmaps(const AttentionTrace& trace, const std::string& prefix);

void write_records_jsonl(const std::vector<RunRecord>& records, const std::string& path);
void write_aggregate_csv(const DatasetRunResult& result, const std::string& path);
void write_blending_csv(const std::vector<BlendingRow>& rows, const std::string& path);
void write_strength_csv(const std::vector<StrengthRow>& rows, const StrengthRow& baseline,
                        const std::string& path);

// Plain "key = value" lines, '#' comments. Accepted keys: d_model, n_layers,
// n_heads, top_k, temperature, weight_seed, codebooks, codebook_size, frames,
// frame_rate. Unknown keys are errors.
ModelConfig parse_config_file(const std::string& path, ModelConfig base);

// Shared by every report writer; states that similarity columns come from the
// deterministic stand-in embeddings.
std::string report_disclaimer();

}  // namespace attnedit
