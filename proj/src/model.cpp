#include "winnow/model.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

#include "winnow/rng.hpp"

namespace winnow {

void validate(const ModelConfig& config) {
    if (config.input_dim < 1) {
        throw std::invalid_argument("model config: input_dim must be >= 1");
    }
    if (config.num_classes < 2) {
        throw std::invalid_argument("model config: num_classes must be >= 2");
    }
    if (config.hidden_dims.empty()) {
        throw std::invalid_argument("model config: at least one hidden layer required");
    }
    for (int h : config.hidden_dims) {
        if (h < 1) {
            throw std::invalid_argument("model config: hidden dims must be >= 1");
        }
    }
}

std::string layer_name(std::size_t index) { return "layer" + std::to_string(index); }

std::vector<std::string> layer_names(const ModelState& model) {
    std::vector<std::string> names;
    names.reserve(model.layer_count());
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        names.push_back(layer_name(l));
    }
    return names;
}

ModelState make_model(const ModelConfig& config) {
    validate(config);
    ModelState model;
    model.config = config;

    std::vector<int> dims;
    dims.push_back(config.input_dim);
    dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
    dims.push_back(config.num_classes);

    Rng rng(derive_seed(config.seed, "model-init"));
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int fan_in = dims[l];
        const int fan_out = dims[l + 1];
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        Mat w(fan_in, fan_out);
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                w(r, c) = rng.normal(0.0, stddev);
            }
        }
        model.weights.push_back(w);
        model.biases.push_back(Mat::Zero(1, fan_out));
    }
    model.weights0 = model.weights;
    model.biases0 = model.biases;
    return model;
}

void install_mask(ModelState& model, std::vector<Mat> mask) {
    if (mask.size() != model.layer_count()) {
        throw std::invalid_argument("install_mask: expected one mask per layer");
    }
    for (std::size_t l = 0; l < mask.size(); ++l) {
        if (mask[l].rows() != model.weights[l].rows() || mask[l].cols() != model.weights[l].cols()) {
            throw std::invalid_argument("install_mask: mask shape mismatch at " + layer_name(l));
        }
        model.weights[l] = model.weights[l].cwiseProduct(mask[l]);
    }
    model.mask = std::move(mask);
}

Mat featurize(const std::string& text, int input_dim) {
    if (input_dim < 1) {
        throw std::invalid_argument("featurize: input_dim must be >= 1");
    }
    Mat out = Mat::Zero(1, input_dim);
    std::string token;
    auto flush = [&] {
        if (!token.empty()) {
            const auto bucket = fnv1a(token) % static_cast<std::uint64_t>(input_dim);
            out(0, static_cast<Eigen::Index>(bucket)) += 1.0;
            token.clear();
        }
    };
    for (char ch : text) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isalnum(uc)) {
            token.push_back(static_cast<char>(std::tolower(uc)));
        } else {
            flush();
        }
    }
    flush();
    const double norm = out.norm();
    if (norm > 0.0) {
        out /= norm;
    }
    return out;
}

ForwardResult forward_logits(const ModelState& model, const Mat& x) {
    if (x.cols() != model.config.input_dim) {
        throw std::invalid_argument("forward_logits: expected " +
                                    std::to_string(model.config.input_dim) + " columns, got " +
                                    std::to_string(x.cols()));
    }
    require_finite(x, "forward_logits input");
    Mat h = x;
    for (std::size_t l = 0; l + 1 < model.layer_count(); ++l) {
        Mat z = (h * model.weights[l]).rowwise() + model.biases[l].row(0);
        h = z.cwiseMax(0.0);
    }
    ForwardResult result;
    result.penultimate = h;
    result.logits = logits_from_penultimate(model, h);
    return result;
}

Mat logits_from_penultimate(const ModelState& model, const Mat& penultimate) {
    const std::size_t last = model.layer_count() - 1;
    if (penultimate.cols() != model.weights[last].rows()) {
        throw std::invalid_argument("logits_from_penultimate: feature width mismatch");
    }
    return (penultimate * model.weights[last]).rowwise() + model.biases[last].row(0);
}

ad::Value record_forward(ad::Tape& tape, ad::Value x, const std::vector<ad::Value>& weights,
                         const std::vector<ad::Value>& biases) {
    if (weights.size() != biases.size() || weights.empty()) {
        throw std::invalid_argument("record_forward: weights/biases must align and be non-empty");
    }
    ad::Value h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        ad::Value z = tape.add(tape.matmul(h, weights[l]), biases[l]);
        h = (l + 1 < weights.size()) ? tape.relu(z) : z;
    }
    return h;
}

namespace {

void check_labels(const Mat& x, const std::vector<int>& labels, int num_classes,
                  const char* where) {
    if (static_cast<std::size_t>(x.rows()) != labels.size()) {
        throw std::invalid_argument(std::string(where) + ": rows and labels must align");
    }
    for (int label : labels) {
        if (label < 0 || label >= num_classes) {
            throw std::invalid_argument(std::string(where) + ": label " + std::to_string(label) +
                                        " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

}  // namespace

double mean_cross_entropy(const ModelState& model, const Mat& x, const std::vector<int>& labels) {
    check_labels(x, labels, model.config.num_classes, "mean_cross_entropy");
    const Mat logits = forward_logits(model, x).logits;
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double lse = logsumexp_row(logits.row(i));
        total += lse - logits(i, labels[static_cast<std::size_t>(i)]);
    }
    return total / static_cast<double>(logits.rows());
}

double classification_accuracy(const ModelState& model, const Mat& x,
                               const std::vector<int>& labels) {
    check_labels(x, labels, model.config.num_classes, "classification_accuracy");
    const Mat logits = forward_logits(model, x).logits;
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (argmax_row(logits.row(i)) == labels[static_cast<std::size_t>(i)]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

std::vector<double> train(ModelState& model, const Mat& x, const std::vector<int>& labels,
                          const TrainOptions& options) {
    check_labels(x, labels, model.config.num_classes, "train");
    if (x.cols() != model.config.input_dim) {
        throw std::invalid_argument("train: feature width mismatch");
    }
    if (options.epochs < 0) {
        throw std::invalid_argument("train: epochs must be >= 0");
    }
    if (options.batch_size < 1) {
        throw std::invalid_argument("train: batch_size must be >= 1");
    }
    if (options.learning_rate < 1e-5 || options.learning_rate > 5e-3) {
        throw std::invalid_argument("train: learning_rate must lie in [1e-5, 5e-3]");
    }
    if (options.weight_decay < 0.0) {
        throw std::invalid_argument("train: weight_decay must be >= 0");
    }
    if (x.rows() == 0) {
        throw std::invalid_argument("train: empty training set");
    }

    const std::size_t layers = model.layer_count();
    std::vector<Mat> mw(layers), vw(layers), mb(layers), vb(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        mw[l] = Mat::Zero(model.weights[l].rows(), model.weights[l].cols());
        vw[l] = mw[l];
        mb[l] = Mat::Zero(1, model.biases[l].cols());
        vb[l] = mb[l];
    }

    Rng shuffle_rng(derive_seed(options.shuffle_seed, "batch-order"));
    const auto n = static_cast<std::size_t>(x.rows());
    const auto batch = std::min<std::size_t>(static_cast<std::size_t>(options.batch_size), n);

    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(options.epochs));
    long step = 0;

    auto adamw_update = [&](Mat& param, Mat& m, Mat& v, const Mat& grad, bool decay) {
        m = options.beta1 * m + (1.0 - options.beta1) * grad;
        v = options.beta2 * v + (1.0 - options.beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
        Mat update = ((m / bc1).array() / ((v / bc2).array().sqrt() + options.adam_eps)).matrix();
        if (decay && options.weight_decay > 0.0) {
            update += options.weight_decay * param;
        }
        param -= options.learning_rate * update;
    };

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        const std::vector<std::size_t> order = shuffle_rng.permutation(n);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            Mat xb(static_cast<Eigen::Index>(count), x.cols());
            std::vector<int> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                xb.row(static_cast<Eigen::Index>(i)) =
                    x.row(static_cast<Eigen::Index>(order[start + i]));
                yb[i] = labels[order[start + i]];
            }

            ad::Tape tape;
            const ad::Value xv = tape.constant(xb);
            std::vector<ad::Value> wv, bv;
            wv.reserve(layers);
            bv.reserve(layers);
            for (std::size_t l = 0; l < layers; ++l) {
                wv.push_back(tape.input(model.weights[l]));
                bv.push_back(tape.input(model.biases[l]));
            }
            const ad::Value logits = record_forward(tape, xv, wv, bv);
            const ad::Value loss = tape.softmax_cross_entropy(logits, yb);
            tape.backward(loss);
            epoch_loss += tape.value(loss)(0, 0) * static_cast<double>(count);

            ++step;
            for (std::size_t l = 0; l < layers; ++l) {
                Mat gw = tape.gradient(wv[l]);
                if (model.mask) {
                    gw = gw.cwiseProduct((*model.mask)[l]);
                }
                adamw_update(model.weights[l], mw[l], vw[l], gw, /*decay=*/true);
                if (model.mask) {
                    // decoupled decay of an exact zero stays zero, but keep the
                    // invariant robust to future update-rule edits
                    model.weights[l] = model.weights[l].cwiseProduct((*model.mask)[l]);
                }
                adamw_update(model.biases[l], mb[l], vb[l], tape.gradient(bv[l]),
                             /*decay=*/false);
            }
        }
        curve.push_back(epoch_loss / static_cast<double>(n));
    }
    return curve;
}

}  // namespace winnow
