#include "winnow/experiment.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "winnow/serialize.hpp"

namespace winnow {

using nlohmann::json;

ExperimentConfig config_from_json(const json& value) {
    if (!value.is_object()) {
        throw std::invalid_argument("config: expected a JSON object");
    }
    ExperimentConfig cfg;
    std::set<std::string> known;
    auto read = [&](const char* key, auto& field) {
        known.insert(key);
        if (value.contains(key)) {
            try {
                value.at(key).get_to(field);
            } catch (const json::exception&) {
                throw std::invalid_argument("config: key '" + std::string(key) +
                                            "' has the wrong type");
            }
        }
    };
    read("dataset", cfg.dataset);
    read("out_dir", cfg.out_dir);
    read("seed", cfg.seed);
    read("ind_fraction", cfg.ind_fraction);
    read("train_fraction", cfg.train_fraction);
    read("val_fraction", cfg.val_fraction);
    read("text_input_dim", cfg.text_input_dim);
    read("ood_labels", cfg.ood_labels);
    read("synth_ind_classes", cfg.synth_ind_classes);
    read("synth_ood_classes", cfg.synth_ood_classes);
    read("synth_dim", cfg.synth_dim);
    read("synth_per_class", cfg.synth_per_class);
    read("synth_spread", cfg.synth_spread);
    read("hidden_dims", cfg.hidden_dims);
    read("finetune_epochs", cfg.finetune_epochs);
    read("mask_epochs", cfg.mask_epochs);
    read("retrain_epochs", cfg.retrain_epochs);
    read("finetune_lr", cfg.finetune_lr);
    read("mask_lr", cfg.mask_lr);
    read("retrain_lr", cfg.retrain_lr);
    read("weight_decay", cfg.weight_decay);
    read("batch_size", cfg.batch_size);
    read("l0_lambda", cfg.l0_lambda);
    read("mask_mu", cfg.mask_mu);
    read("alpha_init_mean", cfg.alpha_init_mean);
    read("alpha_init_std", cfg.alpha_init_std);
    read("gate_beta", cfg.gate_beta);
    read("gate_stretch_lo", cfg.gate_stretch_lo);
    read("gate_stretch_hi", cfg.gate_stretch_hi);
    read("layer_filter", cfg.layer_filter);
    read("scorers", cfg.scorers);
    read("temperature", cfg.temperature);
    read("odin_epsilon", cfg.odin_epsilon);
    read("react_percentile", cfg.react_percentile);
    read("t_grid", cfg.t_grid);
    read("reliability_bins", cfg.reliability_bins);
    read("theorem_classes", cfg.theorem_classes);
    read("theorem_trials", cfg.theorem_trials);
    for (const auto& [key, unused] : value.items()) {
        if (known.count(key) == 0) {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json out;
    out["dataset"] = cfg.dataset;
    out["out_dir"] = cfg.out_dir;
    out["seed"] = cfg.seed;
    out["ind_fraction"] = cfg.ind_fraction;
    out["train_fraction"] = cfg.train_fraction;
    out["val_fraction"] = cfg.val_fraction;
    out["text_input_dim"] = cfg.text_input_dim;
    out["ood_labels"] = cfg.ood_labels;
    out["synth_ind_classes"] = cfg.synth_ind_classes;
    out["synth_ood_classes"] = cfg.synth_ood_classes;
    out["synth_dim"] = cfg.synth_dim;
    out["synth_per_class"] = cfg.synth_per_class;
    out["synth_spread"] = cfg.synth_spread;
    out["hidden_dims"] = cfg.hidden_dims;
    out["finetune_epochs"] = cfg.finetune_epochs;
    out["mask_epochs"] = cfg.mask_epochs;
    out["retrain_epochs"] = cfg.retrain_epochs;
    out["finetune_lr"] = cfg.finetune_lr;
    out["mask_lr"] = cfg.mask_lr;
    out["retrain_lr"] = cfg.retrain_lr;
    out["weight_decay"] = cfg.weight_decay;
    out["batch_size"] = cfg.batch_size;
    out["l0_lambda"] = cfg.l0_lambda;
    out["mask_mu"] = cfg.mask_mu;
    out["alpha_init_mean"] = cfg.alpha_init_mean;
    out["alpha_init_std"] = cfg.alpha_init_std;
    out["gate_beta"] = cfg.gate_beta;
    out["gate_stretch_lo"] = cfg.gate_stretch_lo;
    out["gate_stretch_hi"] = cfg.gate_stretch_hi;
    out["layer_filter"] = cfg.layer_filter;
    out["scorers"] = cfg.scorers;
    out["temperature"] = cfg.temperature;
    out["odin_epsilon"] = cfg.odin_epsilon;
    out["react_percentile"] = cfg.react_percentile;
    out["t_grid"] = cfg.t_grid;
    out["reliability_bins"] = cfg.reliability_bins;
    out["theorem_classes"] = cfg.theorem_classes;
    out["theorem_trials"] = cfg.theorem_trials;
    return out;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return config_from_json(read_json_file(path));
}

std::string config_hash(const ExperimentConfig& cfg) {
    json j = config_to_json(cfg);
    j.erase("out_dir");
    return json_hash(j);
}

PipelineConfig pipeline_config(const ExperimentConfig& cfg, int input_dim, int num_classes) {
    PipelineConfig pc;
    pc.model.input_dim = input_dim;
    pc.model.hidden_dims = cfg.hidden_dims;
    pc.model.num_classes = num_classes;
    pc.finetune_epochs = cfg.finetune_epochs;
    pc.mask_epochs = cfg.mask_epochs;
    pc.retrain_epochs = cfg.retrain_epochs;
    pc.finetune_lr = cfg.finetune_lr;
    pc.mask_lr = cfg.mask_lr;
    pc.retrain_lr = cfg.retrain_lr;
    pc.weight_decay = cfg.weight_decay;
    pc.batch_size = cfg.batch_size;
    pc.l0_lambda = cfg.l0_lambda;
    pc.mask_mu = cfg.mask_mu;
    pc.alpha_init_mean = cfg.alpha_init_mean;
    pc.alpha_init_std = cfg.alpha_init_std;
    pc.dist.beta = cfg.gate_beta;
    pc.dist.stretch_lo = cfg.gate_stretch_lo;
    pc.dist.stretch_hi = cfg.gate_stretch_hi;
    pc.layer_filter = cfg.layer_filter;
    pc.seed = cfg.seed;
    return pc;
}

SplitOptions split_options(const ExperimentConfig& cfg) {
    SplitOptions opts;
    opts.ind_fraction = cfg.ind_fraction;
    opts.train_fraction = cfg.train_fraction;
    opts.val_fraction = cfg.val_fraction;
    opts.text_input_dim = cfg.text_input_dim;
    opts.seed = cfg.seed;
    return opts;
}

ScoringSpec scoring_spec(const ExperimentConfig& cfg, ScoreKind kind) {
    ScoringSpec spec;
    spec.kind = kind;
    spec.temperature =
        (kind == ScoreKind::kTempMsp || kind == ScoreKind::kOdin) ? cfg.temperature : 1.0;
    spec.odin_epsilon = cfg.odin_epsilon;
    spec.react_percentile = cfg.react_percentile;
    return spec;
}

const EvalEntry& find_entry(const ExperimentOutcome& outcome, const std::string& model,
                            ScoreKind kind) {
    for (const auto& entry : outcome.entries) {
        if (entry.model == model && entry.spec.kind == kind) {
            return entry;
        }
    }
    throw std::logic_error("find_entry: no evaluation for " + model + "/" + to_string(kind));
}

std::vector<ScoreRecord> score_test_split(const ModelState& model, const ScoringSpec& spec,
                                          const ScorerContext& context, const SplitData& split) {
    const ForwardResult forward = forward_logits(model, split.x_test);
    std::vector<ScoreRecord> records;
    records.reserve(split.test_ids.size());
    for (Eigen::Index i = 0; i < split.x_test.rows(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const Mat logits_row = forward.logits.row(i);
        const Mat x_row = split.x_test.row(i);
        ScoreRecord rec;
        rec.id = split.test_ids[idx];
        rec.is_ood = split.y_test[idx] == kOodClass;
        rec.correct = !rec.is_ood && argmax_row(logits_row) == split.y_test[idx];
        rec.confidence = msp_score(logits_row, spec.temperature);
        rec.score = score_example(spec, model, context, x_row);
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    const auto result = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, result.ptr);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << content;
}

std::vector<ScoringSpec> parse_scorers(const ExperimentConfig& cfg) {
    if (cfg.scorers.empty()) {
        throw std::invalid_argument("config: scorers must not be empty");
    }
    std::set<std::string> seen;
    std::vector<ScoringSpec> specs;
    for (const auto& name : cfg.scorers) {
        if (!seen.insert(name).second) {
            throw std::invalid_argument("config: duplicate scorer '" + name + "'");
        }
        specs.push_back(scoring_spec(cfg, parse_score_kind(name)));
    }
    return specs;
}

struct LoadedData {
    SplitData split;
    PipelineConfig pipeline;
};

LoadedData load_and_split(const ExperimentConfig& cfg) {
    if (cfg.dataset.empty()) {
        throw std::invalid_argument("config: dataset path required");
    }
    const Dataset dataset = load_dataset(
        cfg.dataset, std::set<std::string>(cfg.ood_labels.begin(), cfg.ood_labels.end()));
    LoadedData data;
    data.split = split_ind_ood(dataset, split_options(cfg));
    data.pipeline = pipeline_config(cfg, data.split.input_dim,
                                    static_cast<int>(data.split.ind_classes.size()));
    return data;
}

void write_eval_artifacts(const std::filesystem::path& out, const EvalEntry& entry) {
    const std::string stem = entry.model + "_" + to_string(entry.spec.kind);

    json report = report_to_json(entry.report);
    report["model"] = entry.model;
    report["scorer"] = to_string(entry.spec.kind);
    report["temperature"] = entry.spec.temperature;
    write_json_file(out / "reports" / (stem + ".json"), report);

    std::string lines;
    for (const auto& rec : entry.records) {
        const json row = {{"T", entry.spec.temperature},
                          {"id", rec.id},
                          {"kind", to_string(entry.spec.kind)},
                          {"ood", rec.is_ood},
                          {"score", rec.score}};
        lines += row.dump();
        lines += "\n";
    }
    write_text_file(out / "scores" / (stem + ".jsonl"), lines);

    std::string csv = "bin-low,bin-high,count,confidence,accuracy\n";
    for (const auto& bin : entry.report.bins) {
        csv += fmt_double(bin.low) + "," + fmt_double(bin.high) + "," +
               std::to_string(bin.count) + "," + fmt_double(bin.mean_confidence) + "," +
               fmt_double(bin.mean_accuracy) + "\n";
    }
    write_text_file(out / "bins" / (stem + ".csv"), csv);
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
    const std::vector<ScoringSpec> specs = parse_scorers(cfg);
    LoadedData data = load_and_split(cfg);

    ExperimentOutcome outcome;
    outcome.out_dir = cfg.out_dir;
    outcome.split = std::move(data.split);
    outcome.pipeline = run_pipeline(data.pipeline, outcome.split.x_train, outcome.split.y_train,
                                    outcome.out_dir / "checkpoints");

    const ModelState masked =
        masked_only_model(outcome.pipeline.dense, outcome.pipeline.gates);
    const std::vector<std::pair<std::string, const ModelState*>> models = {
        {"dense", &outcome.pipeline.dense},
        {"olt", &outcome.pipeline.olt},
        {"masked", &masked}};

    json report_index = json::array();
    for (const auto& [name, model] : models) {
        const ScorerContext context =
            fit_scorer_context(specs, *model, outcome.split.x_train, outcome.split.y_train);
        for (const auto& spec : specs) {
            EvalEntry entry;
            entry.model = name;
            entry.spec = spec;
            entry.records = score_test_split(*model, spec, context, outcome.split);
            entry.report = evaluate(entry.records, 0.95, cfg.reliability_bins);
            write_eval_artifacts(outcome.out_dir, entry);

            const std::string stem = name + "_" + to_string(spec.kind);
            report_index.push_back({{"model", name},
                                    {"scorer", to_string(spec.kind)},
                                    {"report", "reports/" + stem + ".json"},
                                    {"scores", "scores/" + stem + ".jsonl"},
                                    {"bins", "bins/" + stem + ".csv"}});
            outcome.entries.push_back(std::move(entry));
        }
    }

    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["kind"] = "manifest";
    manifest["config"] = config_to_json(cfg);
    manifest["config_hash"] = config_hash(cfg);
    manifest["seed"] = cfg.seed;
    manifest["sparsity"] = outcome.pipeline.sparsity;
    manifest["reports"] = std::move(report_index);
    write_json_file(outcome.out_dir / "manifest.json", manifest);
    return outcome;
}

PipelineResult run_stage(const ExperimentConfig& cfg, PipelinePhase upto) {
    LoadedData data = load_and_split(cfg);
    return run_pipeline(data.pipeline, data.split.x_train, data.split.y_train,
                        std::filesystem::path(cfg.out_dir) / "checkpoints", upto);
}

std::vector<SweepRow> temperature_sweep(const ExperimentConfig& cfg) {
    if (cfg.t_grid.empty()) {
        throw std::invalid_argument("config: t_grid must not be empty");
    }
    for (double t : cfg.t_grid) {
        if (!(t > 0.0)) {
            throw std::invalid_argument("config: t_grid entries must be > 0");
        }
    }
    LoadedData data = load_and_split(cfg);
    const PipelineResult pipeline = run_pipeline(data.pipeline, data.split.x_train,
                                                 data.split.y_train,
                                                 std::filesystem::path(cfg.out_dir) /
                                                     "checkpoints");

    std::vector<SweepRow> rows;
    std::string csv = "T,tnr95,acc\n";
    for (double t : cfg.t_grid) {
        ScoringSpec spec = scoring_spec(cfg, ScoreKind::kTempMsp);
        spec.temperature = t;
        const auto records = score_test_split(pipeline.olt, spec, ScorerContext{}, data.split);
        const TnrResult tnr = tnr_at_tpr(records, 0.95);
        SweepRow row;
        row.t = t;
        row.tnr95 = tnr.tnr;
        row.acc = accuracy_with_rejection(records, tnr.threshold);
        rows.push_back(row);
        csv += fmt_double(row.t) + "," + fmt_double(row.tnr95) + "," + fmt_double(row.acc) + "\n";
    }
    write_text_file(std::filesystem::path(cfg.out_dir) / "sweep" / "temperature.csv", csv);
    return rows;
}

TheoremReport run_theorem_check(const ExperimentConfig& cfg) {
    const TheoremReport report = verify_temperature_ordering(cfg.theorem_classes,
                                                             cfg.theorem_trials, cfg.t_grid,
                                                             cfg.seed);
    json out;
    out["format_version"] = kFormatVersion;
    out["kind"] = "theorem_report";
    out["num_classes"] = report.num_classes;
    out["trials"] = report.trials;
    out["temperatures"] = cfg.t_grid;
    out["cases"] = report.cases.size();
    long failures = 0;
    for (const auto& c : report.cases) {
        failures += c.ok ? 0 : 1;
    }
    out["failures"] = failures;
    out["all_ok"] = report.all_ok;
    write_json_file(std::filesystem::path(cfg.out_dir) / "reports" / "theorem.json", out);
    return report;
}

Dataset generate_dataset(const ExperimentConfig& cfg, const std::filesystem::path& path) {
    SynthOptions opts;
    opts.ind_classes = cfg.synth_ind_classes;
    opts.ood_classes = cfg.synth_ood_classes;
    opts.dim = cfg.synth_dim;
    opts.per_class = cfg.synth_per_class;
    opts.spread = cfg.synth_spread;
    opts.seed = cfg.seed;
    const Dataset dataset = synth_gaussian_dataset(opts);
    save_dataset_jsonl(dataset, path);
    return dataset;
}

std::string render_report_table(const std::filesystem::path& out_dir) {
    const json manifest = read_json_file(out_dir / "manifest.json");
    std::ostringstream table;
    table << "model    scorer       auroc   tnr95   fnr95   accrej  indacc  ece     mce\n";
    char line[160];
    for (const auto& item : manifest.at("reports")) {
        const json report = read_json_file(out_dir / item.at("report").get<std::string>());
        std::snprintf(line, sizeof(line),
                      "%-8s %-12s %.4f  %.4f  %.4f  %.4f  %.4f  %.4f  %.4f\n",
                      report.at("model").get<std::string>().c_str(),
                      report.at("scorer").get<std::string>().c_str(),
                      report.at("auroc").get<double>(), report.at("tnr_at_95_tpr").get<double>(),
                      report.at("fnr_at_95_tpr").get<double>(),
                      report.at("accuracy_with_rejection").get<double>(),
                      report.at("ind_accuracy").get<double>(), report.at("ece").get<double>(),
                      report.at("mce").get<double>());
        table << line;
    }
    table << "sparsity " << manifest.at("sparsity").get<double>() << "\n";
    return table.str();
}

}  // namespace winnow
