#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "winnow/gates.hpp"
#include "winnow/model.hpp"
#include "winnow/types.hpp"

namespace winnow {

struct PipelineConfig {
    ModelConfig model;  // model.seed is overwritten from `seed`
    int finetune_epochs = 30;
    int mask_epochs = 45;
    int retrain_epochs = 20;
    double finetune_lr = 1e-3;
    double retrain_lr = 1e-3;
    double mask_lr = 5e-2;
    double weight_decay = 0.01;
    int batch_size = 32;
    double l0_lambda = 1e-4;
    double mask_mu = 0.5;
    double alpha_init_mean = 2.0;
    double alpha_init_std = 0.01;
    HardConcrete dist;
    std::vector<std::string> layer_filter;  // empty gates every weight matrix
    std::uint64_t seed = 0;
};

void validate(const PipelineConfig& config);

// Resolved list of gated layer names (the filter, or every layer when the
// filter is empty), validated against the model.
std::vector<std::string> gated_layers(const PipelineConfig& config, const ModelState& model);

// Phase 1: train a fresh dense model from scratch on the in-distribution
// training set.
ModelState finetune_dense(const PipelineConfig& config, const Mat& x, const std::vector<int>& y,
                          std::vector<double>* loss_curve = nullptr);

// Phase 2: learn gate parameters against the frozen dense weights by
// minimizing cross-entropy plus l0_lambda * expected-L0, one stochastic
// gate sample per batch. Dense weights are never modified.
GateSet learn_masks(const ModelState& dense, const PipelineConfig& config, const Mat& x,
                    const std::vector<int>& y, std::vector<double>* loss_curve = nullptr);

// Phase 3 output: the subnetwork reset to its initialization under the
// thresholded mask.
struct Subnetwork {
    ModelState model;  // weights = weights0 * mask, biases = biases0
    std::map<std::string, Mat> mask;  // gated layers only
    double sparsity = 0.0;            // fraction of gated weights closed
};

// Thresholds open probabilities at mu and resets the surviving weights to
// their initialization. A gated layer whose mask closes entirely is an
// error.
Subnetwork build_subnetwork(const ModelState& dense, const GateSet& gates,
                            const PipelineConfig& config);

// Phase 4: retrain the masked subnetwork; masked weights stay exactly zero.
std::vector<double> retrain(ModelState& subnetwork, const PipelineConfig& config, const Mat& x,
                            const std::vector<int>& y);

struct PipelineResult {
    ModelState dense;
    GateSet gates;
    Subnetwork subnetwork;  // state straight after the reset, before retraining
    ModelState olt;         // retrained subnetwork
    double sparsity = 0.0;
    std::vector<double> finetune_curve;
    std::vector<double> mask_curve;
    std::vector<double> retrain_curve;
};

enum class PipelinePhase { kDense, kGates, kSubnetwork, kOlt };

// Runs the phases in order up to and including `upto`. With a checkpoint
// directory, each phase is written on completion and reloaded (instead of
// recomputed) when its inputs hash to the same value, so interrupted runs
// resume and reruns are byte-identical.
PipelineResult run_pipeline(const PipelineConfig& config, const Mat& x, const std::vector<int>& y,
                            const std::optional<std::filesystem::path>& checkpoint_dir = {},
                            PipelinePhase upto = PipelinePhase::kOlt);

// Dense weights scaled by the noise-free gate values (no thresholding, no
// reset, no retraining); ungated layers pass through.
ModelState masked_only_model(const ModelState& dense, const GateSet& gates);

}  // namespace winnow
