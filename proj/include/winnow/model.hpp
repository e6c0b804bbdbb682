#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "winnow/autodiff.hpp"
#include "winnow/types.hpp"

namespace winnow {

struct ModelConfig {
    int input_dim = 0;
    std::vector<int> hidden_dims{256, 64};
    int num_classes = 0;
    std::uint64_t seed = 0;
};

void validate(const ModelConfig& config);

// Feed-forward classifier with relu hidden layers. Layer l maps via
// weights[l] (in x out) and biases[l] (1 x out); the last layer is the
// linear class projection. weights0/biases0 freeze the values at
// construction and are never touched by training.
//
// The optional mask aligns elementwise with the weight matrices; biases are
// never masked. Whenever a mask is installed, every masked position of the
// corresponding weight matrix is exactly zero.
struct ModelState {
    ModelConfig config;
    std::vector<Mat> weights;
    std::vector<Mat> biases;
    std::vector<Mat> weights0;
    std::vector<Mat> biases0;
    std::optional<std::vector<Mat>> mask;

    std::size_t layer_count() const { return weights.size(); }
};

// Layer naming used by gate filters and serialization: "layer0".."layerN".
std::string layer_name(std::size_t index);
std::vector<std::string> layer_names(const ModelState& model);

// He-initialized model; biases start at zero.
ModelState make_model(const ModelConfig& config);

// Installs a mask (one binary matrix per layer) and zeroes the masked
// weight positions.
void install_mask(ModelState& model, std::vector<Mat> mask);

// Hashed bag-of-words embedding: lowercase, split on non-alphanumerics,
// FNV-1a bucket counts, L2-normalized. Empty text gives the zero vector.
Mat featurize(const std::string& text, int input_dim);

struct ForwardResult {
    Mat logits;       // n x k
    Mat penultimate;  // n x last-hidden-dim
};

ForwardResult forward_logits(const ModelState& model, const Mat& x);

// Applies only the final linear layer; used by scorers that edit the
// penultimate activations.
Mat logits_from_penultimate(const ModelState& model, const Mat& penultimate);

// Records the forward pass on a tape given one node per layer parameter.
ad::Value record_forward(ad::Tape& tape, ad::Value x, const std::vector<ad::Value>& weights,
                         const std::vector<ad::Value>& biases);

double mean_cross_entropy(const ModelState& model, const Mat& x, const std::vector<int>& labels);
double classification_accuracy(const ModelState& model, const Mat& x,
                               const std::vector<int>& labels);

struct TrainOptions {
    int epochs = 1;
    int batch_size = 32;
    double learning_rate = 1e-3;  // accepted range [1e-5, 5e-3]
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t shuffle_seed = 0;
};

// Minimizes mean softmax cross-entropy with AdamW (decoupled weight decay).
// If a mask is installed, gradients are multiplied by it before every
// update, so masked weights stay exactly zero. Returns per-epoch mean loss.
std::vector<double> train(ModelState& model, const Mat& x, const std::vector<int>& labels,
                          const TrainOptions& options);

}  // namespace winnow
