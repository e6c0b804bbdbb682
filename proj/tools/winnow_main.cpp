#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "winnow/experiment.hpp"
#include "winnow/serialize.hpp"

namespace {

void print_curve_tail(const std::string& phase, const std::vector<double>& curve) {
    if (curve.empty()) {
        std::cout << phase << ": no epochs run\n";
        return;
    }
    std::cout << phase << ": " << curve.size() << " epochs, final loss " << curve.back() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"open-world lottery-ticket workbench"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
    app.add_option("--seed", seed, "seed override");
    app.add_option("--out", out_dir, "output directory override");

    auto* cmd_generate =
        app.add_subcommand("generate", "write the synthetic gaussian corpus as JSONL");
    auto* cmd_train = app.add_subcommand("train", "train the dense baseline");
    auto* cmd_prune =
        app.add_subcommand("prune", "learn gates against the frozen baseline, then threshold");
    auto* cmd_retrain = app.add_subcommand("retrain", "retrain the reset subnetwork");
    auto* cmd_eval =
        app.add_subcommand("eval", "run the full pipeline and every configured scorer");
    auto* cmd_sweep = app.add_subcommand("sweep", "temperature sweep of the retrained subnetwork");
    auto* cmd_theorem =
        app.add_subcommand("theorem-check", "verify the temperature-ordering property");
    auto* cmd_report = app.add_subcommand("report", "print the summary table for an out directory");
    for (auto* sub : app.get_subcommands({})) {
        sub->fallthrough();
    }

    CLI11_PARSE(app, argc, argv);

    try {
        winnow::ExperimentConfig cfg;
        if (!config_path.empty()) {
            cfg = winnow::load_config(config_path);
        }
        if (app.count("--seed") > 0) {
            cfg.seed = seed;
        }
        if (app.count("--out") > 0) {
            cfg.out_dir = out_dir;
        }

        if (cmd_generate->parsed()) {
            const std::filesystem::path target =
                cfg.dataset.empty() ? std::filesystem::path(cfg.out_dir) / "dataset.jsonl"
                                    : std::filesystem::path(cfg.dataset);
            const winnow::Dataset dataset = winnow::generate_dataset(cfg, target);
            std::cout << "wrote " << target.string() << " (" << dataset.examples.size()
                      << " examples, " << dataset.labels.size() << " labels)\n";
        } else if (cmd_train->parsed()) {
            const auto result = winnow::run_stage(cfg, winnow::PipelinePhase::kDense);
            print_curve_tail("dense", result.finetune_curve);
        } else if (cmd_prune->parsed()) {
            const auto result = winnow::run_stage(cfg, winnow::PipelinePhase::kSubnetwork);
            print_curve_tail("gates", result.mask_curve);
            std::cout << "sparsity: " << result.sparsity << "\n";
        } else if (cmd_retrain->parsed()) {
            const auto result = winnow::run_stage(cfg, winnow::PipelinePhase::kOlt);
            print_curve_tail("retrain", result.retrain_curve);
            std::cout << "sparsity: " << result.sparsity << "\n";
        } else if (cmd_eval->parsed()) {
            const auto outcome = winnow::run_experiment(cfg);
            std::cout << winnow::render_report_table(outcome.out_dir);
        } else if (cmd_sweep->parsed()) {
            const auto rows = winnow::temperature_sweep(cfg);
            std::cout << "T,tnr95,acc\n";
            for (const auto& row : rows) {
                std::cout << row.t << "," << row.tnr95 << "," << row.acc << "\n";
            }
        } else if (cmd_theorem->parsed()) {
            const auto report = winnow::run_theorem_check(cfg);
            std::cout << "temperature ordering over " << report.trials << " random pairs, "
                      << report.cases.size() << " cases: " << (report.all_ok ? "PASS" : "FAIL")
                      << "\n";
            return report.all_ok ? 0 : 1;
        } else if (cmd_report->parsed()) {
            std::cout << winnow::render_report_table(cfg.out_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
