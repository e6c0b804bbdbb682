#include "winnow/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "winnow/autodiff.hpp"
#include "winnow/rng.hpp"
#include "winnow/serialize.hpp"

namespace winnow {

using nlohmann::json;

void validate(const PipelineConfig& config) {
    if (config.finetune_epochs < 0 || config.mask_epochs < 0 || config.retrain_epochs < 0) {
        throw std::invalid_argument("pipeline: epoch counts must be >= 0");
    }
    if (!(config.mask_lr > 0.0)) {
        throw std::invalid_argument("pipeline: mask_lr must be > 0");
    }
    if (config.batch_size < 1) {
        throw std::invalid_argument("pipeline: batch_size must be >= 1");
    }
    if (config.l0_lambda < 0.0) {
        throw std::invalid_argument("pipeline: l0_lambda must be >= 0");
    }
    if (!(config.mask_mu > 0.0 && config.mask_mu < 1.0)) {
        throw std::invalid_argument("pipeline: mask_mu must lie in (0, 1)");
    }
    if (config.alpha_init_std < 0.0) {
        throw std::invalid_argument("pipeline: alpha_init_std must be >= 0");
    }
    validate(config.dist);
}

std::vector<std::string> gated_layers(const PipelineConfig& config, const ModelState& model) {
    const std::vector<std::string> names = layer_names(model);
    if (config.layer_filter.empty()) {
        return names;
    }
    std::set<std::string> known(names.begin(), names.end());
    std::set<std::string> chosen;
    for (const auto& name : config.layer_filter) {
        if (known.count(name) == 0) {
            throw std::invalid_argument("pipeline: unknown layer '" + name + "' in layer_filter");
        }
        chosen.insert(name);
    }
    return {chosen.begin(), chosen.end()};
}

namespace {

TrainOptions classifier_options(const PipelineConfig& config, int epochs, double lr) {
    TrainOptions options;
    options.epochs = epochs;
    options.batch_size = config.batch_size;
    options.learning_rate = lr;
    options.weight_decay = config.weight_decay;
    options.shuffle_seed = config.seed;
    return options;
}

std::size_t layer_index(const ModelState& model, const std::string& name) {
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        if (layer_name(l) == name) {
            return l;
        }
    }
    throw std::invalid_argument("unknown layer '" + name + "'");
}

}  // namespace

ModelState finetune_dense(const PipelineConfig& config, const Mat& x, const std::vector<int>& y,
                          std::vector<double>* loss_curve) {
    validate(config);
    ModelConfig mc = config.model;
    mc.seed = config.seed;
    ModelState model = make_model(mc);
    auto curve = train(model, x, y, classifier_options(config, config.finetune_epochs,
                                                       config.finetune_lr));
    if (loss_curve) {
        *loss_curve = std::move(curve);
    }
    return model;
}

GateSet learn_masks(const ModelState& dense, const PipelineConfig& config, const Mat& x,
                    const std::vector<int>& y, std::vector<double>* loss_curve) {
    validate(config);
    const std::vector<std::string> gated = gated_layers(config, dense);

    GateSet gates;
    gates.dist = config.dist;
    Rng init_rng(derive_seed(config.seed, "alpha-init"));
    for (const auto& name : gated) {
        const Mat& w = dense.weights[layer_index(dense, name)];
        Mat alpha(w.rows(), w.cols());
        for (Eigen::Index r = 0; r < alpha.rows(); ++r) {
            for (Eigen::Index c = 0; c < alpha.cols(); ++c) {
                alpha(r, c) = config.alpha_init_mean + config.alpha_init_std * init_rng.normal();
            }
        }
        gates.alpha.emplace(name, std::move(alpha));
    }

    std::map<std::string, Mat> adam_m, adam_v;
    for (const auto& name : gated) {
        adam_m[name] = Mat::Zero(gates.alpha[name].rows(), gates.alpha[name].cols());
        adam_v[name] = adam_m[name];
    }

    Rng noise_rng(derive_seed(config.seed, "gate-noise"));
    Rng shuffle_rng(derive_seed(config.seed, "mask-batch-order"));
    const double shift = config.dist.beta * std::log(-config.dist.stretch_lo /
                                                     config.dist.stretch_hi);
    const auto n = static_cast<std::size_t>(x.rows());
    if (n == 0 || y.size() != n) {
        throw std::invalid_argument("learn_masks: rows and labels must align and be non-empty");
    }
    const auto batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kAdamEps = 1e-8;
    long step = 0;

    std::vector<double> curve;
    for (int epoch = 0; epoch < config.mask_epochs; ++epoch) {
        const auto order = shuffle_rng.permutation(n);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min(batch, n - start);
            Mat xb(static_cast<Eigen::Index>(count), x.cols());
            std::vector<int> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                xb.row(static_cast<Eigen::Index>(i)) =
                    x.row(static_cast<Eigen::Index>(order[start + i]));
                yb[i] = y[order[start + i]];
            }

            ad::Tape tape;
            const ad::Value xv = tape.constant(xb);
            std::vector<ad::Value> wv, bv;
            std::map<std::string, ad::Value> alpha_nodes;
            for (std::size_t l = 0; l < dense.layer_count(); ++l) {
                const std::string name = layer_name(l);
                const ad::Value theta = tape.constant(dense.weights[l]);
                if (gates.alpha.count(name) != 0) {
                    const Mat& alpha = gates.alpha[name];
                    Mat noise(alpha.rows(), alpha.cols());
                    for (Eigen::Index r = 0; r < noise.rows(); ++r) {
                        for (Eigen::Index c = 0; c < noise.cols(); ++c) {
                            noise(r, c) = logistic_noise(noise_rng);
                        }
                    }
                    const ad::Value av = tape.input(alpha);
                    alpha_nodes.emplace(name, av);
                    const ad::Value gate =
                        tape.hard_concrete(av, noise, config.dist.beta, config.dist.stretch_lo,
                                           config.dist.stretch_hi);
                    wv.push_back(tape.mul(gate, theta));
                } else {
                    wv.push_back(theta);
                }
                bv.push_back(tape.constant(dense.biases[l]));
            }

            const ad::Value logits = record_forward(tape, xv, wv, bv);
            ad::Value total = tape.softmax_cross_entropy(logits, yb);
            if (config.l0_lambda > 0.0) {
                std::optional<ad::Value> penalty;
                for (const auto& [name, av] : alpha_nodes) {
                    const Mat& alpha = gates.alpha[name];
                    const ad::Value shifted = tape.add(
                        av, tape.constant(Mat::Constant(alpha.rows(), alpha.cols(), -shift)));
                    const ad::Value open = tape.sum(tape.sigmoid(shifted));
                    penalty = penalty ? tape.add(*penalty, open) : open;
                }
                if (penalty) {
                    total = tape.add(total, tape.scale(*penalty, config.l0_lambda));
                }
            }
            tape.backward(total);
            epoch_loss += tape.value(total)(0, 0) * static_cast<double>(count);

            ++step;
            const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
            for (const auto& [name, av] : alpha_nodes) {
                const Mat g = tape.gradient(av);
                Mat& m = adam_m[name];
                Mat& v = adam_v[name];
                m = kBeta1 * m + (1.0 - kBeta1) * g;
                v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
                gates.alpha[name] -=
                    config.mask_lr *
                    ((m / bc1).array() / ((v / bc2).array().sqrt() + kAdamEps)).matrix();
            }
        }
        curve.push_back(epoch_loss / static_cast<double>(n));
    }
    if (loss_curve) {
        *loss_curve = std::move(curve);
    }
    return gates;
}

Subnetwork build_subnetwork(const ModelState& dense, const GateSet& gates,
                            const PipelineConfig& config) {
    const std::vector<std::string> gated = gated_layers(config, dense);
    for (const auto& name : gated) {
        auto it = gates.alpha.find(name);
        if (it == gates.alpha.end()) {
            throw std::invalid_argument("build_subnetwork: no gates for layer '" + name + "'");
        }
        const Mat& w = dense.weights[layer_index(dense, name)];
        if (it->second.rows() != w.rows() || it->second.cols() != w.cols()) {
            throw std::invalid_argument("build_subnetwork: gate shape mismatch at '" + name + "'");
        }
    }

    Subnetwork subnetwork;
    subnetwork.mask = threshold_gates(gates, config.mask_mu);

    double total = 0.0;
    double open = 0.0;
    for (const auto& [name, mask] : subnetwork.mask) {
        const double layer_open = mask.sum();
        if (layer_open == 0.0) {
            throw std::runtime_error("degenerate mask: layer '" + name + "' is fully closed");
        }
        total += static_cast<double>(mask.size());
        open += layer_open;
    }
    subnetwork.sparsity = 1.0 - open / total;

    ModelState model = dense;
    model.weights = model.weights0;
    model.biases = model.biases0;
    std::vector<Mat> full_mask;
    full_mask.reserve(model.layer_count());
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const std::string name = layer_name(l);
        auto it = subnetwork.mask.find(name);
        full_mask.push_back(it != subnetwork.mask.end()
                                ? it->second
                                : Mat::Ones(model.weights[l].rows(), model.weights[l].cols()));
    }
    install_mask(model, std::move(full_mask));
    subnetwork.model = std::move(model);
    return subnetwork;
}

std::vector<double> retrain(ModelState& subnetwork, const PipelineConfig& config, const Mat& x,
                            const std::vector<int>& y) {
    validate(config);
    return train(subnetwork, x, y,
                 classifier_options(config, config.retrain_epochs, config.retrain_lr));
}

ModelState masked_only_model(const ModelState& dense, const GateSet& gates) {
    ModelState model = dense;
    const auto soft = deterministic_gates(gates);
    for (const auto& [name, values] : soft) {
        const std::size_t l = layer_index(model, name);
        if (values.rows() != model.weights[l].rows() || values.cols() != model.weights[l].cols()) {
            throw std::invalid_argument("masked_only_model: gate shape mismatch at '" + name +
                                        "'");
        }
        model.weights[l] = model.weights[l].cwiseProduct(values);
    }
    return model;
}

namespace {

std::string data_digest(const Mat& x, const std::vector<int>& y) {
    std::uint64_t h = fnv1a(std::string_view(reinterpret_cast<const char*>(x.data()),
                                             static_cast<std::size_t>(x.size()) * sizeof(double)));
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(y.data()),
                               y.size() * sizeof(int)),
              h);
    json dims = {{"rows", x.rows()}, {"cols", x.cols()}, {"labels", y.size()}};
    return json_hash(json{{"dims", dims}, {"payload", h}});
}

json phase_meta(const std::string& phase, const std::string& hash, std::uint64_t seed,
                const std::vector<double>& curve) {
    json meta;
    meta["format_version"] = kFormatVersion;
    meta["kind"] = "phase_meta";
    meta["phase"] = phase;
    meta["config_hash"] = hash;
    meta["seed"] = seed;
    meta["loss_curve"] = curve;
    return meta;
}

// Returns the stored meta when the phase directory holds a completed phase
// for exactly these inputs.
std::optional<json> try_load_meta(const std::optional<std::filesystem::path>& dir,
                                  const std::string& phase, const std::string& hash) {
    if (!dir) {
        return std::nullopt;
    }
    const auto meta_path = *dir / phase / "meta.json";
    if (!std::filesystem::exists(meta_path)) {
        return std::nullopt;
    }
    const json meta = read_json_file(meta_path);
    if (meta.value("config_hash", "") != hash) {
        return std::nullopt;
    }
    return meta;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const Mat& x, const std::vector<int>& y,
                            const std::optional<std::filesystem::path>& checkpoint_dir,
                            PipelinePhase upto) {
    validate(config);
    if (x.cols() != config.model.input_dim) {
        throw std::invalid_argument("run_pipeline: feature width does not match model input_dim");
    }

    const std::string digest = data_digest(x, y);
    const json model_cfg = {{"input_dim", config.model.input_dim},
                            {"hidden_dims", config.model.hidden_dims},
                            {"num_classes", config.model.num_classes}};
    const std::string dense_hash = json_hash(json{{"phase", "dense"},
                                                  {"model", model_cfg},
                                                  {"seed", config.seed},
                                                  {"data", digest},
                                                  {"epochs", config.finetune_epochs},
                                                  {"lr", config.finetune_lr},
                                                  {"weight_decay", config.weight_decay},
                                                  {"batch_size", config.batch_size}});
    const std::string gates_hash = json_hash(json{{"phase", "gates"},
                                                  {"parent", dense_hash},
                                                  {"epochs", config.mask_epochs},
                                                  {"lr", config.mask_lr},
                                                  {"lambda", config.l0_lambda},
                                                  {"alpha_mean", config.alpha_init_mean},
                                                  {"alpha_std", config.alpha_init_std},
                                                  {"beta", config.dist.beta},
                                                  {"stretch_lo", config.dist.stretch_lo},
                                                  {"stretch_hi", config.dist.stretch_hi},
                                                  {"layer_filter", config.layer_filter}});
    const std::string subnet_hash =
        json_hash(json{{"phase", "subnetwork"}, {"parent", gates_hash}, {"mu", config.mask_mu}});
    const std::string olt_hash = json_hash(json{{"phase", "olt"},
                                                {"parent", subnet_hash},
                                                {"epochs", config.retrain_epochs},
                                                {"lr", config.retrain_lr}});

    PipelineResult result;
    auto write_manifest = [&] {
        if (!checkpoint_dir) {
            return;
        }
        json manifest;
        manifest["format_version"] = kFormatVersion;
        manifest["kind"] = "pipeline_manifest";
        manifest["seed"] = config.seed;
        manifest["sparsity"] = result.sparsity;
        manifest["phases"] = {{"dense", dense_hash},
                              {"gates", gates_hash},
                              {"subnetwork", subnet_hash},
                              {"olt", olt_hash}};
        write_json_file(*checkpoint_dir / "manifest.json", manifest);
    };

    if (auto meta = try_load_meta(checkpoint_dir, "dense", dense_hash)) {
        result.dense = model_from_json(read_json_file(*checkpoint_dir / "dense" / "model.json"));
        result.finetune_curve = meta->at("loss_curve").get<std::vector<double>>();
    } else {
        result.dense = finetune_dense(config, x, y, &result.finetune_curve);
        if (checkpoint_dir) {
            write_json_file(*checkpoint_dir / "dense" / "model.json",
                            model_to_json(result.dense));
            write_json_file(*checkpoint_dir / "dense" / "meta.json",
                            phase_meta("dense", dense_hash, config.seed, result.finetune_curve));
        }
    }
    if (upto == PipelinePhase::kDense) {
        write_manifest();
        return result;
    }

    if (auto meta = try_load_meta(checkpoint_dir, "gates", gates_hash)) {
        result.gates = gates_from_json(read_json_file(*checkpoint_dir / "gates" / "gates.json"));
        result.mask_curve = meta->at("loss_curve").get<std::vector<double>>();
    } else {
        result.gates = learn_masks(result.dense, config, x, y, &result.mask_curve);
        if (checkpoint_dir) {
            write_json_file(*checkpoint_dir / "gates" / "gates.json", gates_to_json(result.gates));
            write_json_file(*checkpoint_dir / "gates" / "meta.json",
                            phase_meta("gates", gates_hash, config.seed, result.mask_curve));
        }
    }
    if (upto == PipelinePhase::kGates) {
        write_manifest();
        return result;
    }

    if (auto meta = try_load_meta(checkpoint_dir, "subnetwork", subnet_hash)) {
        result.subnetwork.model =
            model_from_json(read_json_file(*checkpoint_dir / "subnetwork" / "model.json"));
        if (!result.subnetwork.model.mask) {
            throw std::runtime_error("subnetwork checkpoint is missing its mask");
        }
        result.subnetwork.sparsity = meta->at("sparsity").get<double>();
        for (const auto& name : gated_layers(config, result.subnetwork.model)) {
            result.subnetwork.mask.emplace(
                name, (*result.subnetwork.model.mask)[layer_index(result.subnetwork.model, name)]);
        }
    } else {
        result.subnetwork = build_subnetwork(result.dense, result.gates, config);
        if (checkpoint_dir) {
            write_json_file(*checkpoint_dir / "subnetwork" / "model.json",
                            model_to_json(result.subnetwork.model));
            json meta = phase_meta("subnetwork", subnet_hash, config.seed, {});
            meta["sparsity"] = result.subnetwork.sparsity;
            write_json_file(*checkpoint_dir / "subnetwork" / "meta.json", meta);
        }
    }
    result.sparsity = result.subnetwork.sparsity;
    if (upto == PipelinePhase::kSubnetwork) {
        write_manifest();
        return result;
    }

    if (auto meta = try_load_meta(checkpoint_dir, "olt", olt_hash)) {
        result.olt = model_from_json(read_json_file(*checkpoint_dir / "olt" / "model.json"));
        result.retrain_curve = meta->at("loss_curve").get<std::vector<double>>();
    } else {
        result.olt = result.subnetwork.model;
        result.retrain_curve = retrain(result.olt, config, x, y);
        if (checkpoint_dir) {
            write_json_file(*checkpoint_dir / "olt" / "model.json", model_to_json(result.olt));
            write_json_file(*checkpoint_dir / "olt" / "meta.json",
                            phase_meta("olt", olt_hash, config.seed, result.retrain_curve));
        }
    }

    write_manifest();
    return result;
}

}  // namespace winnow
