#include "attnedit/pipeline.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace attnedit {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write to " + path);
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& body) {
    auto out = open_for_write(path);
    out << body;
    if (!out) {
        throw std::runtime_error("write failed for " + path);
    }
}

const std::vector<std::pair<std::string, double MetricsReport::*>>& metric_fields() {
    static const std::vector<std::pair<std::string, double MetricsReport::*>> fields = {
        {"melody_accuracy", &MetricsReport::melody_accuracy},
        {"dynamics_correlation", &MetricsReport::dynamics_correlation},
        {"rhythm_f1", &MetricsReport::rhythm_f1},
        {"a2a_similarity", &MetricsReport::a2a_similarity},
        {"t2a_similarity_source", &MetricsReport::t2a_similarity_source},
        {"t2a_similarity_edited", &MetricsReport::t2a_similarity_edited},
    };
    return fields;
}

void mean_and_population_std(const std::vector<double>& xs, double& mean, double& stddev) {
    if (xs.empty()) {
        mean = std::numeric_limits<double>::quiet_NaN();
        stddev = std::numeric_limits<double>::quiet_NaN();
        return;
    }
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    stddev = std::sqrt(var / static_cast<double>(xs.size()));
}

std::string blend_label(const BlendMode& mode) {
    if (std::holds_alternative<HardInject>(mode)) return "hard";
    if (std::holds_alternative<SoftBlend>(mode)) return "soft";
    return "strength=" + format_double(std::get<Strength>(mode).s);
}

[[noreturn]] void dataset_error(int line, const std::string& what) {
    throw std::invalid_argument("dataset line " + std::to_string(line) + ": " + what);
}

std::string require_string(const ordered_json& j, const char* key, int line) {
    if (!j.contains(key) || !j[key].is_string()) {
        dataset_error(line, std::string("missing or non-string field '") + key + "'");
    }
    return j[key].get<std::string>();
}

EditSpec make_spec(const PromptPair& pair, const Prompt& p, const Prompt& p_star) {
    switch (pair.edit_type) {
        case EditType::kReplace:
            return ReplaceEdit{0};
        case EditType::kRefine:
            return RefineEdit{0, align_prompts(p, p_star)};
        case EditType::kReweight:
            return ReweightEdit{pair.params->token_index, pair.params->c};
    }
    throw std::logic_error("make_spec: unhandled edit type");
}

}  // namespace

std::string to_string(EditType type) {
    switch (type) {
        case EditType::kReplace: return "replace";
        case EditType::kRefine: return "refine";
        case EditType::kReweight: return "reweight";
    }
    throw std::logic_error("to_string: unhandled edit type");
}

EditType edit_type_from_string(const std::string& name) {
    if (name == "replace") return EditType::kReplace;
    if (name == "refine") return EditType::kRefine;
    if (name == "reweight") return EditType::kReweight;
    throw std::invalid_argument("unknown edit type '" + name + "' (want replace|refine|reweight)");
}

const std::vector<std::string>& dataset_axes() {
    static const std::vector<std::string> axes = {
        "instrument_change", "mood_tonal",           "genre_shift",
        "melodic_transformation", "harmonic_modification", "form_structure",
    };
    return axes;
}

std::string report_disclaimer() {
    return "similarity columns use deterministic stand-in embeddings, not a pretrained "
           "text-audio model; absolute values are not comparable to scores from learned embeddings";
}

std::vector<PromptPair> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open dataset " + path);
    }
    std::vector<PromptPair> pairs;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            dataset_error(line_no, std::string("not valid JSON: ") + e.what());
        }
        if (!j.is_object()) dataset_error(line_no, "expected a JSON object");

        PromptPair pair;
        pair.id = require_string(j, "id", line_no);
        if (pair.id.empty()) dataset_error(line_no, "empty pair id");
        if (!seen_ids.insert(pair.id).second) {
            dataset_error(line_no, "duplicate pair id '" + pair.id + "'");
        }
        try {
            pair.edit_type = edit_type_from_string(require_string(j, "edit_type", line_no));
        } catch (const std::invalid_argument& e) {
            dataset_error(line_no, e.what());
        }
        pair.axis = require_string(j, "axis", line_no);
        const auto& axes = dataset_axes();
        if (std::find(axes.begin(), axes.end(), pair.axis) == axes.end()) {
            dataset_error(line_no, "pair '" + pair.id + "': unknown axis '" + pair.axis + "'");
        }
        pair.source_prompt = require_string(j, "source_prompt", line_no);
        pair.target_prompt = require_string(j, "target_prompt", line_no);

        std::vector<std::string> source_tokens, target_tokens;
        try {
            source_tokens = tokenize(pair.source_prompt);
            target_tokens = tokenize(pair.target_prompt);
        } catch (const std::invalid_argument& e) {
            dataset_error(line_no, "pair '" + pair.id + "': " + e.what());
        }

        if (pair.edit_type == EditType::kReweight) {
            if (pair.target_prompt != pair.source_prompt) {
                dataset_error(line_no, "pair '" + pair.id + "': reweight prompts must be identical");
            }
            if (!j.contains("params") || !j["params"].is_object()) {
                dataset_error(line_no, "pair '" + pair.id + "': reweight needs a params object");
            }
            const auto& pj = j["params"];
            if (!pj.contains("j_star_token") || !pj["j_star_token"].is_string() ||
                !pj.contains("c") || !pj["c"].is_number()) {
                dataset_error(line_no,
                              "pair '" + pair.id + "': params must hold j_star_token (string) and c (number)");
            }
            ReweightParams params;
            params.j_star_token = pj["j_star_token"].get<std::string>();
            params.c = pj["c"].get<double>();
            if (!std::isfinite(params.c) || params.c < -2.0 || params.c > 2.0) {
                dataset_error(line_no, "pair '" + pair.id + "': c must be finite and in [-2, 2]");
            }
            int hits = 0;
            for (size_t i = 0; i < source_tokens.size(); ++i) {
                if (source_tokens[i] == params.j_star_token) {
                    params.token_index = static_cast<int>(i);
                    ++hits;
                }
            }
            if (hits == 0) {
                dataset_error(line_no, "pair '" + pair.id + "': j_star_token '" + params.j_star_token +
                                           "' does not occur in the source prompt");
            }
            if (hits > 1) {
                dataset_error(line_no, "pair '" + pair.id + "': j_star_token '" + params.j_star_token +
                                           "' is ambiguous (occurs " + std::to_string(hits) + " times)");
            }
            pair.params = params;
        } else {
            if (j.contains("params")) {
                dataset_error(line_no,
                              "pair '" + pair.id + "': params is only valid for reweight pairs");
            }
            if (pair.edit_type == EditType::kReplace && source_tokens.size() != target_tokens.size()) {
                dataset_error(line_no, "pair '" + pair.id + "': replace prompts tokenize to " +
                                           std::to_string(source_tokens.size()) + " vs " +
                                           std::to_string(target_tokens.size()) + " tokens");
            }
        }
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

DatasetRunResult run_dataset(const Model& model, const std::vector<PromptPair>& pairs,
                             const std::vector<uint64_t>& seeds, const BlendMode& mode,
                             const Vocabulary& vocab, const RunOptions& options) {
    if (pairs.empty()) throw std::invalid_argument("run_dataset: no pairs");
    if (seeds.empty()) throw std::invalid_argument("run_dataset: no seeds");

    fs::path grids_dir, traces_dir;
    if (!options.out_dir.empty()) {
        grids_dir = fs::path(options.out_dir) / "grids";
        fs::create_directories(grids_dir);
        if (options.save_traces) {
            traces_dir = fs::path(options.out_dir) / "traces";
            fs::create_directories(traces_dir);
        }
    }

    const std::string label = blend_label(mode);
    DatasetRunResult result;
    result.records.reserve(pairs.size() * seeds.size());
    std::unordered_map<std::string, std::string> type_of_pair;

    for (const auto& pair : pairs) {
        type_of_pair[pair.id] = to_string(pair.edit_type);
        for (uint64_t seed : seeds) {
            RunRecord record;
            record.pair_id = pair.id;
            record.seed = seed;
            record.blend_label = label;
            try {
                const Prompt p = Prompt::from_text(pair.source_prompt, vocab);
                const Prompt p_star = Prompt::from_text(pair.target_prompt, vocab);
                const EditSpec spec = make_spec(pair, p, p_star);
                const EditResult run = run_edit(model, p, p_star, spec, mode, seed);
                record.metrics = compute_report(decode_features(run.source_grid),
                                                decode_features(run.edited_grid), p, p_star);
                if (!options.out_dir.empty()) {
                    const std::string stem = pair.id + "_seed" + std::to_string(seed);
                    record.source_grid_path = (grids_dir / (stem + "_source.json")).string();
                    record.edited_grid_path = (grids_dir / (stem + "_edited.json")).string();
                    write_text_file(record.source_grid_path, run.source_grid.to_json());
                    write_text_file(record.edited_grid_path, run.edited_grid.to_json());
                    if (options.save_traces) {
                        record.source_trace_path = (traces_dir / (stem + "_source.csv")).string();
                        record.edited_trace_path = (traces_dir / (stem + "_edited.csv")).string();
                        dump_attention(run.source_trace, record.source_trace_path);
                        dump_attention(run.edited_trace, record.edited_trace_path);
                    }
                }
            } catch (const std::exception& e) {
                record.failed = true;
                record.error = e.what();
            }
            result.records.push_back(std::move(record));
        }
    }

    for (const auto& record : result.records) {
        const std::string& type_label = type_of_pair.at(record.pair_id);
        auto& row = result.aggregate[type_label];
        for (const auto& [name, member] : metric_fields()) {
            row.try_emplace(name);
        }
    }
    for (auto& [type_label, row] : result.aggregate) {
        for (const auto& [name, member] : metric_fields()) {
            std::vector<double> values;
            bool skipped = false;
            for (const auto& record : result.records) {
                if (type_of_pair.at(record.pair_id) != type_label) continue;
                if (record.failed) {
                    skipped = true;
                    continue;
                }
                const double v = record.metrics.*member;
                if (std::isnan(v)) {
                    skipped = true;
                    continue;
                }
                values.push_back(v);
            }
            AggregateCell& cell = row.at(name);
            mean_and_population_std(values, cell.mean, cell.stddev);
            cell.count = static_cast<int>(values.size());
            cell.incomplete = skipped;
        }
    }
    return result;
}

std::vector<BlendingRow> compare_blending(const Model& model, const std::vector<PromptPair>& pairs,
                                          const std::vector<uint64_t>& seeds, const Vocabulary& vocab) {
    auto pool = [](const DatasetRunResult& result, const std::string& label) {
        std::vector<double> t2a, a2a;
        for (const auto& record : result.records) {
            if (record.failed) continue;
            t2a.push_back(record.metrics.t2a_similarity_edited);
            a2a.push_back(record.metrics.a2a_similarity);
        }
        BlendingRow row;
        row.label = label;
        row.count = static_cast<int>(t2a.size());
        mean_and_population_std(t2a, row.t2a_mean, row.t2a_std);
        mean_and_population_std(a2a, row.a2a_mean, row.a2a_std);
        return row;
    };
    std::vector<BlendingRow> rows;
    rows.push_back(pool(run_dataset(model, pairs, seeds, HardInject{}, vocab), "hard"));
    rows.push_back(pool(run_dataset(model, pairs, seeds, SoftBlend{}, vocab), "soft"));
    return rows;
}

void dump_attention(const AttentionTrace& trace, const std::string& csv_path) {
    auto out = open_for_write(csv_path);
    out << "step,layer,head,key_index,weight\n";
    for (int step = 0; step < trace.num_steps(); ++step) {
        for (int layer = 0; layer < trace.num_layers(); ++layer) {
            const AttentionMap& map = trace.at(step, layer).cross_used;
            for (int head = 0; head < map.rows(); ++head) {
                for (int key = 0; key < map.cols(); ++key) {
                    out << step << ',' << layer << ',' << head << ',' << key << ','
                        << format_double(map.at(head, key)) << '\n';
                }
            }
        }
    }
    if (!out) {
        throw std::runtime_error("write failed for " + csv_path);
    }
}

std::vector<AttentionCsvRow> read_attention_csv(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) {
        throw std::runtime_error("cannot open " + csv_path);
    }
    std::vector<AttentionCsvRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;  // header
        std::istringstream fields(line);
        std::string field;
        AttentionCsvRow row;
        try {
            std::getline(fields, field, ',');
            row.step = std::stoi(field);
            std::getline(fields, field, ',');
            row.layer = std::stoi(field);
            std::getline(fields, field, ',');
            row.head = std::stoi(field);
            std::getline(fields, field, ',');
            row.key_index = std::stoi(field);
            if (!std::getline(fields, field, ',')) {
                throw std::invalid_argument("missing weight column");
            }
            row.weight = std::stod(field);
        } catch (const std::exception& e) {
            throw std::runtime_error(csv_path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        rows.push_back(row);
    }
    return rows;
}

void dump_attention_heatmaps(const AttentionTrace& trace, const std::string& prefix) {
    if (trace.num_steps() == 0 || trace.num_layers() == 0) {
        throw std::invalid_argument("dump_attention_heatmaps: empty trace");
    }
    for (int layer = 0; layer < trace.num_layers(); ++layer) {
        const int keys = trace.at(0, layer).cross_used.cols();
        auto out = open_for_write(prefix + "_layer" + std::to_string(layer) + ".csv");
        out << "step";
        for (int key = 0; key < keys; ++key) out << ",k" << key;
        out << '\n';
        for (int step = 0; step < trace.num_steps(); ++step) {
            const AttentionMap& map = trace.at(step, layer).cross_used;
            out << step;
            for (int key = 0; key < keys; ++key) {
                double sum = 0.0;
                for (int head = 0; head < map.rows(); ++head) sum += map.at(head, key);
                out << ',' << format_double(sum);
            }
            out << '\n';
        }
    }
}

void write_records_jsonl(const std::vector<RunRecord>& records, const std::string& path) {
    auto out = open_for_write(path);
    for (const auto& record : records) {
        ordered_json j;
        j["pair_id"] = record.pair_id;
        j["seed"] = record.seed;
        j["blend"] = record.blend_label;
        j["failed"] = record.failed;
        if (record.failed) {
            j["error"] = record.error;
        } else {
            j["metrics"] = ordered_json::parse(record.metrics.to_json());
        }
        if (!record.source_grid_path.empty()) j["source_grid"] = record.source_grid_path;
        if (!record.edited_grid_path.empty()) j["edited_grid"] = record.edited_grid_path;
        if (!record.source_trace_path.empty()) j["source_trace"] = record.source_trace_path;
        if (!record.edited_trace_path.empty()) j["edited_trace"] = record.edited_trace_path;
        out << j.dump() << '\n';
    }
    if (!out) {
        throw std::runtime_error("write failed for " + path);
    }
}

void write_aggregate_csv(const DatasetRunResult& result, const std::string& path) {
    auto out = open_for_write(path);
    out << "# " << report_disclaimer() << '\n';
    out << "edit_type,metric,mean,stddev,count,incomplete\n";
    for (const auto& [type_label, row] : result.aggregate) {
        for (const auto& [name, member] : metric_fields()) {
            const AggregateCell& cell = row.at(name);
            out << type_label << ',' << name << ',';
            if (cell.count > 0) {
                out << format_double(cell.mean) << ',' << format_double(cell.stddev);
            } else {
                out << ',';
            }
            out << ',' << cell.count << ',' << (cell.incomplete ? "true" : "false") << '\n';
        }
    }
}

void write_blending_csv(const std::vector<BlendingRow>& rows, const std::string& path) {
    auto out = open_for_write(path);
    out << "# " << report_disclaimer() << '\n';
    out << "blend,t2a_mean,t2a_std,a2a_mean,a2a_std,count\n";
    for (const auto& row : rows) {
        out << row.label << ',' << format_double(row.t2a_mean) << ',' << format_double(row.t2a_std) << ','
            << format_double(row.a2a_mean) << ',' << format_double(row.a2a_std) << ',' << row.count << '\n';
    }
}

void write_strength_csv(const std::vector<StrengthRow>& rows, const StrengthRow& baseline,
                        const std::string& path) {
    auto out = open_for_write(path);
    out << "# " << report_disclaimer() << '\n';
    out << "# free-generation baseline: a2a=" << format_double(baseline.a2a)
        << " t2a_source=" << format_double(baseline.t2a_source)
        << " t2a_edited=" << format_double(baseline.t2a_edited) << '\n';
    out << "s,a2a,t2a_source,t2a_edited\n";
    for (const auto& row : rows) {
        out << format_double(row.s) << ',' << format_double(row.a2a) << ','
            << format_double(row.t2a_source) << ',' << format_double(row.t2a_edited) << '\n';
    }
}

ModelConfig parse_config_file(const std::string& path, ModelConfig base) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path);
    }
    std::string line;
    int line_no = 0;
    auto fail = [&line_no](const std::string& what) {
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + what);
    };
    auto trim = [](std::string s) {
        const auto first = s.find_first_not_of(" \t\r");
        if (first == std::string::npos) return std::string();
        const auto last = s.find_last_not_of(" \t\r");
        return s.substr(first, last - first + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.resize(hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) fail("expected key = value");

        auto as_int = [&](int lo) {
            size_t used = 0;
            int v = 0;
            try {
                v = std::stoi(value, &used);
            } catch (const std::exception&) {
                fail("'" + value + "' is not an integer");
            }
            if (used != value.size()) fail("'" + value + "' is not an integer");
            if (v < lo) fail(key + " must be >= " + std::to_string(lo));
            return v;
        };
        auto as_double = [&]() {
            size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(value, &used);
            } catch (const std::exception&) {
                fail("'" + value + "' is not a number");
            }
            if (used != value.size()) fail("'" + value + "' is not a number");
            return v;
        };

        if (key == "d_model") {
            base.d_model = as_int(1);
        } else if (key == "n_layers") {
            base.n_layers = as_int(1);
        } else if (key == "n_heads") {
            base.n_heads = as_int(1);
        } else if (key == "top_k") {
            base.top_k = as_int(1);
        } else if (key == "temperature") {
            base.temperature = as_double();
        } else if (key == "weight_seed") {
            size_t used = 0;
            unsigned long long v = 0;
            try {
                v = std::stoull(value, &used);
            } catch (const std::exception&) {
                fail("'" + value + "' is not an unsigned integer");
            }
            if (used != value.size()) fail("'" + value + "' is not an unsigned integer");
            base.weight_seed = v;
        } else if (key == "codebooks") {
            base.codec.codebooks = as_int(1);
        } else if (key == "codebook_size") {
            base.codec.codebook_size = as_int(1);
        } else if (key == "frames") {
            base.codec.frames = as_int(1);
        } else if (key == "frame_rate") {
            base.codec.frame_rate = as_double();
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    return base;
}

}  // namespace attnedit
