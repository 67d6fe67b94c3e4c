#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "attnedit/codec.hpp"
#include "attnedit/edit.hpp"
#include "attnedit/metrics.hpp"
#include "attnedit/model.hpp"
#include "attnedit/pipeline.hpp"
#include "attnedit/text.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace attnedit;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write to " + path);
    }
    out << body;
}

int resolve_j_star(const std::string& source_prompt, const std::string& token) {
    const auto tokens = tokenize(source_prompt);
    int index = -1;
    int hits = 0;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == token) {
            index = static_cast<int>(i);
            ++hits;
        }
    }
    if (hits == 0) {
        throw std::invalid_argument("token '" + token + "' does not occur in the source prompt");
    }
    if (hits > 1) {
        throw std::invalid_argument("token '" + token + "' occurs " + std::to_string(hits) +
                                    " times in the source prompt; reweighting needs a unique target");
    }
    return index;
}

struct CliState {
    uint64_t seed = 1;
    uint64_t weight_seed = 7;
    bool weight_seed_given = false;
    std::string config_path;
    std::string out_dir = "out";

    std::string vocab_path = "data/vocab.json";
    std::string dataset_path = "data/prompt_pairs.jsonl";
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
    std::string prompt;
    std::string source_prompt;
    std::string target_prompt;
    std::string edit_type = "replace";
    int tau = 0;
    std::string j_star_token;
    double c = 1.0;
    std::string blend = "hard";
    double strength = 0.5;
    std::vector<double> strengths = {0.0, 0.25, 0.5, 0.75, 1.0};
    bool save_traces = false;
    bool heatmaps = false;
    std::string source_grid_path;
    std::string edited_grid_path;
};

ModelConfig make_model_config(const CliState& state, int vocab_size) {
    ModelConfig config;  // baked-in defaults
    if (!state.config_path.empty()) {
        config = parse_config_file(state.config_path, config);
    }
    if (state.weight_seed_given) {
        config.weight_seed = state.weight_seed;  // explicit flag beats the config file
    }
    config.vocab_size = vocab_size;
    return config;
}

BlendMode make_blend(const CliState& state) {
    if (state.blend == "hard") return HardInject{};
    if (state.blend == "soft") return SoftBlend{};
    if (state.blend == "strength") return Strength{state.strength};
    throw std::invalid_argument("unknown blend mode '" + state.blend + "' (want hard|soft|strength)");
}

EditSpec make_edit_spec(const CliState& state, const Prompt& p, const Prompt& p_star) {
    switch (edit_type_from_string(state.edit_type)) {
        case EditType::kReplace:
            return ReplaceEdit{state.tau};
        case EditType::kRefine:
            return RefineEdit{state.tau, align_prompts(p, p_star)};
        case EditType::kReweight:
            if (state.j_star_token.empty()) {
                throw std::invalid_argument("reweighting needs --j-star");
            }
            return ReweightEdit{resolve_j_star(state.source_prompt, state.j_star_token), state.c};
    }
    throw std::logic_error("unhandled edit type");
}

// Resolves the edit target: reweight edits keep the prompt fixed, so the
// target may be omitted there.
std::string effective_target(const CliState& state) {
    if (!state.target_prompt.empty()) return state.target_prompt;
    if (edit_type_from_string(state.edit_type) == EditType::kReweight) return state.source_prompt;
    throw std::invalid_argument("--target-prompt is required for this edit type");
}

// Mean similarities of plain generation under the edited prompt, accumulated
// exactly like prompt_strength_sweep so the s=1 row can be compared bit for
// bit.
StrengthRow free_generation_baseline(const Model& model, const Prompt& p, const Prompt& p_star,
                                     const std::vector<uint64_t>& seeds) {
    StrengthRow row;
    row.s = 1.0;
    for (uint64_t seed : seeds) {
        const TokenGrid source = model.generate(p, seed).grid;
        const TokenGrid edited = model.generate(p_star, seed).grid;
        const Embedding source_audio = embed_audio(decode_features(source));
        const Embedding edited_audio = embed_audio(decode_features(edited));
        row.a2a += cosine_similarity(source_audio, edited_audio);
        row.t2a_source += cosine_similarity(embed_text(p), edited_audio);
        row.t2a_edited += cosine_similarity(embed_text(p_star), edited_audio);
    }
    const double n = static_cast<double>(seeds.size());
    row.a2a /= n;
    row.t2a_source /= n;
    row.t2a_edited /= n;
    return row;
}

ordered_json strength_row_json(const StrengthRow& row) {
    return ordered_json{{"s", row.s},
                        {"a2a", row.a2a},
                        {"t2a_source", row.t2a_source},
                        {"t2a_edited", row.t2a_edited}};
}

std::string out_path(const CliState& state, const std::string& name) {
    fs::create_directories(state.out_dir);
    return (fs::path(state.out_dir) / name).string();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-attention capture, editing, and evaluation for a toy text-to-token music model"};
    app.require_subcommand(1);

    CliState state;
    app.add_option("--seed", state.seed, "Sampling seed for single-run commands")->capture_default_str();
    app.add_option("--weight-seed", state.weight_seed, "Model weight seed")
        ->capture_default_str()
        ->each([&state](const std::string&) { state.weight_seed_given = true; });
    app.add_option("--config", state.config_path, "Key-value file overriding model/codec defaults");
    app.add_option("--out", state.out_dir, "Output directory")->capture_default_str();

    auto add_vocab = [&](CLI::App* cmd) {
        cmd->add_option("--vocab", state.vocab_path, "Vocabulary JSON")->capture_default_str();
    };
    auto add_seeds = [&](CLI::App* cmd) {
        cmd->add_option("--seeds", state.seeds, "Comma-separated sampling seeds")
            ->delimiter(',')
            ->capture_default_str();
    };
    auto add_edit_flags = [&](CLI::App* cmd) {
        cmd->add_option("--source-prompt", state.source_prompt, "Original prompt")->required();
        cmd->add_option("--target-prompt", state.target_prompt,
                        "Edited prompt (defaults to the source for reweight)");
        cmd->add_option("--edit-type", state.edit_type, "replace|refine|reweight")->capture_default_str();
        cmd->add_option("--tau", state.tau, "Step before which the free map is kept")->capture_default_str();
        cmd->add_option("--j-star", state.j_star_token, "Reweighted token (reweight only)");
        cmd->add_option("--c", state.c, "Reweight scale in [-2,2]")->capture_default_str();
    };

    auto* generate = app.add_subcommand("generate", "Sample a token grid from a prompt");
    generate->add_option("--prompt", state.prompt, "Text prompt")->required();
    add_vocab(generate);
    generate->callback([&] {
        const Vocabulary vocab = Vocabulary::load_json_file(state.vocab_path);
        const Model model(make_model_config(state, vocab.size()));
        const GenerationResult result = model.generate(Prompt::from_text(state.prompt, vocab), state.seed);
        const std::string grid_path = out_path(state, "grid.json");
        write_file(grid_path, result.grid.to_json());
        ordered_json summary;
        summary["grid"] = grid_path;
        summary["steps"] = model.config().codec.num_steps();
        summary["weight_checksum"] = std::to_string(model.weight_checksum());
        std::cout << summary.dump() << "\n";
    });

    auto* edit = app.add_subcommand("edit", "Capture a source run and re-generate under an edited prompt");
    add_edit_flags(edit);
    edit->add_option("--blend", state.blend, "hard|soft|strength")->capture_default_str();
    edit->add_option("--strength", state.strength, "s for --blend strength")->capture_default_str();
    edit->add_flag("--save-traces", state.save_traces, "Also write attention traces as CSV");
    add_vocab(edit);
    edit->callback([&] {
        const Vocabulary vocab = Vocabulary::load_json_file(state.vocab_path);
        const Model model(make_model_config(state, vocab.size()));
        const Prompt p = Prompt::from_text(state.source_prompt, vocab);
        const Prompt p_star = Prompt::from_text(effective_target(state), vocab);
        const EditResult result =
            run_edit(model, p, p_star, make_edit_spec(state, p, p_star), make_blend(state), state.seed);
        const MetricsReport metrics = compute_report(decode_features(result.source_grid),
                                                     decode_features(result.edited_grid), p, p_star);
        const std::string source_grid_path = out_path(state, "source_grid.json");
        const std::string edited_grid_path = out_path(state, "edited_grid.json");
        const std::string metrics_path = out_path(state, "metrics.json");
        write_file(source_grid_path, result.source_grid.to_json());
        write_file(edited_grid_path, result.edited_grid.to_json());
        write_file(metrics_path, metrics.to_json() + "\n");
        ordered_json summary;
        summary["source_grid"] = source_grid_path;
        summary["edited_grid"] = edited_grid_path;
        summary["metrics_file"] = metrics_path;
        if (state.save_traces) {
            const std::string source_trace_path = out_path(state, "source_trace.csv");
            const std::string edited_trace_path = out_path(state, "edited_trace.csv");
            dump_attention(result.source_trace, source_trace_path);
            dump_attention(result.edited_trace, edited_trace_path);
            summary["source_trace"] = source_trace_path;
            summary["edited_trace"] = edited_trace_path;
        }
        summary["note"] = report_disclaimer();
        summary["metrics"] = ordered_json::parse(metrics.to_json());
        std::cout << summary.dump() << "\n";
    });

    auto* eval = app.add_subcommand("eval", "Score a source/edited grid pair against its prompts");
    eval->add_option("--source-grid", state.source_grid_path, "Source TokenGrid JSON")->required();
    eval->add_option("--edited-grid", state.edited_grid_path, "Edited TokenGrid JSON")->required();
    eval->add_option("--source-prompt", state.source_prompt, "Original prompt")->required();
    eval->add_option("--target-prompt", state.target_prompt, "Edited prompt")->required();
    add_vocab(eval);
    eval->callback([&] {
        const Vocabulary vocab = Vocabulary::load_json_file(state.vocab_path);
        ModelConfig config;  // only the codec frame rate matters here
        if (!state.config_path.empty()) {
            config = parse_config_file(state.config_path, config);
        }
        const TokenGrid source =
            TokenGrid::from_json(read_file(state.source_grid_path), config.codec.frame_rate);
        const TokenGrid edited =
            TokenGrid::from_json(read_file(state.edited_grid_path), config.codec.frame_rate);
        const MetricsReport metrics =
            compute_report(decode_features(source), decode_features(edited),
                           Prompt::from_text(state.source_prompt, vocab),
                           Prompt::from_text(state.target_prompt, vocab));
        const std::string metrics_path = out_path(state, "metrics.json");
        write_file(metrics_path, metrics.to_json() + "\n");
        ordered_json summary;
        summary["metrics_file"] = metrics_path;
        summary["note"] = report_disclaimer();
        summary["metrics"] = ordered_json::parse(metrics.to_json());
        std::cout << summary.dump() << "\n";
    });

    auto* run_ds = app.add_subcommand("run-dataset", "Run every prompt pair across seeds and aggregate");
    run_ds->add_option("--dataset", state.dataset_path, "Prompt-pair JSONL")->capture_default_str();
    run_ds->add_option("--blend", state.blend, "hard|soft|strength")->capture_default_str();
    run_ds->add_option("--strength", state.strength, "s for --blend strength")->capture_default_str();
    run_ds->add_flag("--save-traces", state.save_traces, "Also write attention traces as CSV");
    add_seeds(run_ds);
    add_vocab(run_ds);
    run_ds->callback([&] {
        const Vocabulary vocab = Vocabulary::load_json_file(state.vocab_path);
        const Model model(make_model_config(state, vocab.size()));
        const auto pairs = load_dataset(state.dataset_path);
        RunOptions options;
        options.out_dir = state.out_dir;
        options.save_traces = state.save_traces;
        const DatasetRunResult result =
            run_dataset(model, pairs, state.seeds, make_blend(state), vocab, options);
        const std::string records_path = out_path(state, "records.jsonl");
        const std::string aggregate_path = out_path(state, "aggregate.csv");
        write_records_jsonl(result.records, records_path);
        write_aggregate_csv(result, aggregate_path);
        int failed = 0;
        for (const auto& record : result.records) {
            if (record.failed) ++failed;
        }
        ordered_json summary;
        summary["records"] = result.records.size();
        summary["failed"] = failed;
        summary["records_jsonl"] = records_path;
        summary["aggregate_csv"] = aggregate_path;
        summary["note"] = report_disclaimer();
        std::cout << summary.dump() << "\n";
    });

    auto* compare = app.add_subcommand("compare-blending", "Full-injection vs soft-blending table");
    compare->add_option("--dataset", state.dataset_path, "Prompt-pair JSONL")->capture_default_str();
    add_seeds(compare);
    add_vocab(compare);
    compare->callback([&] {
        const Vocabulary vocab = Vocabulary::load_json_file(state.vocab_path);
        const Model model(make_model_config(state, vocab.size()));
        const auto rows = compare_blending(model, load_dataset(state.dataset_path), state.seeds, vocab);
        const std::string csv_path = out_path(state, "blending.csv");
        write_blending_csv(rows, csv_path);
        ordered_json summary;
        summary["note"] = report_disclaimer();
        summary["csv"] = csv_path;
        summary["rows"] = ordered_json::array();
        for (const auto& row : rows) {
            summary["rows"].push_back(ordered_json{{"blend", row.label},
                                                   {"t2a_mean", row.t2a_mean},
                                                   {"t2a_std", row.t2a_std},
                                                   {"a2a_mean", row.a2a_mean},
                                                   {"a2a_std", row.a2a_std},
                                                   {"count", row.count}});
        }
        std::cout << summary.dump() << "\n";
    });

    auto* sweep = app.add_subcommand("sweep-strength", "Similarity curves over the strength interpolation");
    add_edit_flags(sweep);
    sweep->add_option("--strengths", state.strengths, "Comma-separated s values in [0,1]")
        ->delimiter(',')
        ->capture_default_str();
    add_seeds(sweep);
    add_vocab(sweep);
    sweep->callback([&] {
        const Vocabulary vocab = Vocabulary::load_json_file(state.vocab_path);
        const Model model(make_model_config(state, vocab.size()));
        const Prompt p = Prompt::from_text(state.source_prompt, vocab);
        const Prompt p_star = Prompt::from_text(effective_target(state), vocab);
        const auto rows = prompt_strength_sweep(model, p, p_star, make_edit_spec(state, p, p_star),
                                                state.seeds, state.strengths);
        const StrengthRow baseline = free_generation_baseline(model, p, p_star, state.seeds);
        const std::string csv_path = out_path(state, "strength_sweep.csv");
        write_strength_csv(rows, baseline, csv_path);
        ordered_json summary;
        summary["note"] = report_disclaimer();
        summary["csv"] = csv_path;
        summary["baseline"] = strength_row_json(baseline);
        summary["rows"] = ordered_json::array();
        for (const auto& row : rows) summary["rows"].push_back(strength_row_json(row));
        std::cout << summary.dump() << "\n";
    });

    auto* dump = app.add_subcommand("dump-attn", "Generate once and dump the cross-attention trace");
    dump->add_option("--prompt", state.prompt, "Text prompt")->required();
    dump->add_flag("--heatmaps", state.heatmaps, "Also write per-layer head-summed heatmaps");
    add_vocab(dump);
    dump->callback([&] {
        const Vocabulary vocab = Vocabulary::load_json_file(state.vocab_path);
        const Model model(make_model_config(state, vocab.size()));
        const GenerationResult result = model.generate(Prompt::from_text(state.prompt, vocab), state.seed);
        const std::string csv_path = out_path(state, "attention.csv");
        dump_attention(result.trace, csv_path);
        ordered_json summary;
        summary["attention_csv"] = csv_path;
        if (state.heatmaps) {
            const std::string prefix = out_path(state, "heatmap");
            dump_attention_heatmaps(result.trace, prefix);
            summary["heatmap_prefix"] = prefix;
        }
        std::cout << summary.dump() << "\n";
    });

    for (auto* sub : {generate, edit, eval, run_ds, compare, sweep, dump}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << ordered_json{{"error", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << ordered_json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
