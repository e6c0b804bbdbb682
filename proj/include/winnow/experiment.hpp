#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "winnow/dataset.hpp"
#include "winnow/metrics.hpp"
#include "winnow/pipeline.hpp"
#include "winnow/scoring.hpp"

namespace winnow {

// Flat experiment configuration. Every key is optional in the JSON file and
// falls back to the default here; unknown keys are errors.
struct ExperimentConfig {
    std::string dataset;  // JSONL path; required by operations that read data
    std::string out_dir = "out";
    std::uint64_t seed = 0;

    // split
    double ind_fraction = 0.75;
    double train_fraction = 0.7;
    double val_fraction = 0.1;
    int text_input_dim = 256;
    std::vector<std::string> ood_labels{"ood"};

    // synthetic generator
    int synth_ind_classes = 15;
    int synth_ood_classes = 5;
    int synth_dim = 20;
    int synth_per_class = 200;
    double synth_spread = 0.35;

    // model + pipeline
    std::vector<int> hidden_dims{256, 64};
    int finetune_epochs = 30;
    int mask_epochs = 45;
    int retrain_epochs = 20;
    double finetune_lr = 1e-3;
    double mask_lr = 5e-2;
    double retrain_lr = 1e-3;
    double weight_decay = 0.01;
    int batch_size = 32;
    double l0_lambda = 1e-4;
    double mask_mu = 0.5;
    double alpha_init_mean = 2.0;
    double alpha_init_std = 0.01;
    double gate_beta = 2.0 / 3.0;
    double gate_stretch_lo = -0.1;
    double gate_stretch_hi = 1.1;
    std::vector<std::string> layer_filter;

    // scoring + evaluation
    std::vector<std::string> scorers{"msp",      "maxlogit", "energy",      "entropy",
                                     "temp-msp", "odin",     "mahalanobis", "react"};
    double temperature = 1.5;
    double odin_epsilon = 1e-3;
    double react_percentile = 90.0;
    std::vector<double> t_grid{1.0, 10.0, 100.0, 1000.0, 10000.0};
    int reliability_bins = 10;

    // temperature-ordering check
    int theorem_classes = 10;
    int theorem_trials = 100;
};

ExperimentConfig config_from_json(const nlohmann::json& value);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
// Hash over every result-determining field (out_dir excluded).
std::string config_hash(const ExperimentConfig& config);

PipelineConfig pipeline_config(const ExperimentConfig& config, int input_dim, int num_classes);
SplitOptions split_options(const ExperimentConfig& config);
ScoringSpec scoring_spec(const ExperimentConfig& config, ScoreKind kind);

// One evaluated (model, scorer) pair.
struct EvalEntry {
    std::string model;  // "dense" | "olt" | "masked"
    ScoringSpec spec;
    EvalReport report;
    std::vector<ScoreRecord> records;
};

struct ExperimentOutcome {
    SplitData split;
    PipelineResult pipeline;
    std::vector<EvalEntry> entries;
    std::filesystem::path out_dir;
};

const EvalEntry& find_entry(const ExperimentOutcome& outcome, const std::string& model,
                            ScoreKind kind);

// Scores one model over the test split with one scorer. Confidence is the
// top-class probability at the scorer's temperature.
std::vector<ScoreRecord> score_test_split(const ModelState& model, const ScoringSpec& spec,
                                          const ScorerContext& context, const SplitData& split);

// Runs the full pipeline (checkpointed under <out>/checkpoints), evaluates
// the dense, subnetwork, and masked-only models with every configured
// scorer, and writes reports/, scores/, bins/, and manifest.json under the
// out directory.
ExperimentOutcome run_experiment(const ExperimentConfig& config);

// Loads the dataset and runs the pipeline up to the given phase, resuming
// from <out>/checkpoints when possible.
PipelineResult run_stage(const ExperimentConfig& config, PipelinePhase upto);

struct SweepRow {
    double t = 1.0;
    double tnr95 = 0.0;
    double acc = 0.0;  // accuracy with rejection at the 95%-TPR threshold
};

// Evaluates the retrained subnetwork with the temperature-scaled max-softmax
// scorer across the configured grid; writes sweep/temperature.csv.
std::vector<SweepRow> temperature_sweep(const ExperimentConfig& config);

// Verifies the temperature-ordering property and writes
// reports/theorem.json.
TheoremReport run_theorem_check(const ExperimentConfig& config);

// Generates the synthetic corpus and writes it to the given path.
Dataset generate_dataset(const ExperimentConfig& config, const std::filesystem::path& path);

// Renders a plain-text summary table from the artifacts under out_dir.
std::string render_report_table(const std::filesystem::path& out_dir);

}  // namespace winnow
