#include "winnow/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "winnow/autodiff.hpp"

namespace winnow {

ScoreKind parse_score_kind(const std::string& name) {
    if (name == "msp") return ScoreKind::kMsp;
    if (name == "maxlogit") return ScoreKind::kMaxLogit;
    if (name == "energy") return ScoreKind::kEnergy;
    if (name == "entropy") return ScoreKind::kEntropy;
    if (name == "temp-msp") return ScoreKind::kTempMsp;
    if (name == "odin") return ScoreKind::kOdin;
    if (name == "mahalanobis") return ScoreKind::kMahalanobis;
    if (name == "react") return ScoreKind::kReact;
    throw std::invalid_argument("unknown scorer '" + name + "'");
}

std::string to_string(ScoreKind kind) {
    switch (kind) {
        case ScoreKind::kMsp: return "msp";
        case ScoreKind::kMaxLogit: return "maxlogit";
        case ScoreKind::kEnergy: return "energy";
        case ScoreKind::kEntropy: return "entropy";
        case ScoreKind::kTempMsp: return "temp-msp";
        case ScoreKind::kOdin: return "odin";
        case ScoreKind::kMahalanobis: return "mahalanobis";
        case ScoreKind::kReact: return "react";
    }
    throw std::logic_error("to_string: bad score kind");
}

std::vector<ScoreKind> all_score_kinds() {
    return {ScoreKind::kMsp,     ScoreKind::kMaxLogit, ScoreKind::kEnergy,
            ScoreKind::kEntropy, ScoreKind::kTempMsp,  ScoreKind::kOdin,
            ScoreKind::kMahalanobis, ScoreKind::kReact};
}

void validate(const ScoringSpec& spec) {
    if (!(spec.temperature > 0.0)) {
        throw std::invalid_argument("scoring: temperature must be > 0");
    }
    if (!(spec.odin_epsilon >= 0.0)) {
        throw std::invalid_argument("scoring: odin_epsilon must be >= 0");
    }
    if (!(spec.react_percentile > 0.0 && spec.react_percentile <= 100.0)) {
        throw std::invalid_argument("scoring: react_percentile must lie in (0, 100]");
    }
}

double msp_score(const Mat& logits_row, double temperature) {
    return softmax_row(logits_row, temperature).maxCoeff();
}

double max_logit_score(const Mat& logits_row) { return logits_row.maxCoeff(); }

double energy_score(const Mat& logits_row, double temperature) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("energy_score: temperature must be > 0");
    }
    const Mat scaled = logits_row / temperature;
    return temperature * logsumexp_row(scaled);
}

double negative_entropy_score(const Mat& logits_row) {
    const Mat p = softmax_row(logits_row);
    double entropy = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        if (p(0, j) > 0.0) {
            entropy -= p(0, j) * std::log(p(0, j));
        }
    }
    return -entropy;
}

MahalanobisModel fit_mahalanobis(const Mat& features, const std::vector<int>& labels,
                                 int num_classes, double eps) {
    if (num_classes < 2) {
        throw std::invalid_argument("fit_mahalanobis: need at least 2 classes");
    }
    if (static_cast<std::size_t>(features.rows()) != labels.size() || features.rows() == 0) {
        throw std::invalid_argument("fit_mahalanobis: rows and labels must align");
    }
    if (eps < 0.0) {
        throw std::invalid_argument("fit_mahalanobis: eps must be >= 0");
    }
    const Eigen::Index d = features.cols();

    MahalanobisModel model;
    model.eps = eps;
    model.means = Mat::Zero(num_classes, d);
    std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= num_classes) {
            throw std::invalid_argument("fit_mahalanobis: label outside [0, k)");
        }
        model.means.row(y) += features.row(i);
        ++counts[static_cast<std::size_t>(y)];
    }
    for (int c = 0; c < num_classes; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) {
            throw std::invalid_argument("fit_mahalanobis: class " + std::to_string(c) +
                                        " has no examples");
        }
        model.means.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }

    Mat cov = Mat::Zero(d, d);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const Mat diff = features.row(i) - model.means.row(labels[static_cast<std::size_t>(i)]);
        cov.noalias() += diff.transpose() * diff;
    }
    cov /= static_cast<double>(features.rows());
    if (eps > 0.0) {
        const double scale = cov.trace() / static_cast<double>(d);
        cov += (eps * scale) * Mat::Identity(d, d);
    }

    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("fit_mahalanobis: covariance is not positive definite");
    }
    model.chol_lower = llt.matrixL();
    return model;
}

double min_mahalanobis_sq(const MahalanobisModel& model, const Mat& feature_row) {
    if (feature_row.rows() != 1 || feature_row.cols() != model.means.cols()) {
        throw std::invalid_argument("min_mahalanobis_sq: feature width mismatch");
    }
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < model.means.rows(); ++c) {
        Mat z = (feature_row - model.means.row(c)).transpose();
        model.chol_lower.triangularView<Eigen::Lower>().solveInPlace(z);
        best = std::min(best, z.squaredNorm());
    }
    return best;
}

ReactClip fit_react(const ModelState& model, const Mat& x, double percentile) {
    if (!(percentile > 0.0 && percentile <= 100.0)) {
        throw std::invalid_argument("fit_react: percentile must lie in (0, 100]");
    }
    if (x.rows() == 0) {
        throw std::invalid_argument("fit_react: empty fitting set");
    }
    const Mat h = forward_logits(model, x).penultimate;
    std::vector<double> pooled(static_cast<std::size_t>(h.size()));
    Eigen::Index idx = 0;
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.cols(); ++c) {
            pooled[static_cast<std::size_t>(idx++)] = h(r, c);
        }
    }
    std::sort(pooled.begin(), pooled.end());
    // nearest-rank percentile, 1-based
    auto rank = static_cast<std::size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(pooled.size()) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, pooled.size());
    return ReactClip{pooled[rank - 1], percentile};
}

ScorerContext fit_scorer_context(const std::vector<ScoringSpec>& specs, const ModelState& model,
                                 const Mat& x_fit, const std::vector<int>& y_fit) {
    ScorerContext context;
    for (const auto& spec : specs) {
        validate(spec);
        if (spec.kind == ScoreKind::kMahalanobis && !context.mahalanobis) {
            const Mat features = forward_logits(model, x_fit).penultimate;
            context.mahalanobis =
                fit_mahalanobis(features, y_fit, model.config.num_classes);
        }
        if (spec.kind == ScoreKind::kReact) {
            if (context.react && context.react->percentile != spec.react_percentile) {
                throw std::invalid_argument("fit_scorer_context: conflicting react percentiles");
            }
            if (!context.react) {
                context.react = fit_react(model, x_fit, spec.react_percentile);
            }
        }
    }
    return context;
}

Mat odin_perturb(const ModelState& model, const Mat& x_row, double temperature, double epsilon) {
    if (x_row.rows() != 1) {
        throw std::invalid_argument("odin_perturb: expected a single row");
    }
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("odin_perturb: temperature must be > 0");
    }
    ad::Tape tape;
    const ad::Value xv = tape.input(x_row);
    std::vector<ad::Value> wv, bv;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        wv.push_back(tape.constant(model.weights[l]));
        bv.push_back(tape.constant(model.biases[l]));
    }
    const ad::Value logits = record_forward(tape, xv, wv, bv);
    const std::vector<int> label{argmax_row(tape.value(logits))};
    // cross-entropy against the argmax equals -log max-softmax, so the input
    // gradient of log max-softmax is the negated cross-entropy gradient
    const ad::Value loss = tape.softmax_cross_entropy(tape.scale(logits, 1.0 / temperature), label);
    tape.backward(loss);
    const Mat g = tape.gradient(xv);
    const Mat step = g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    return x_row - epsilon * step;
}

double score_example(const ScoringSpec& spec, const ModelState& model,
                     const ScorerContext& context, const Mat& x_row) {
    validate(spec);
    if (x_row.rows() != 1) {
        throw std::invalid_argument("score_example: expected a single row");
    }
    switch (spec.kind) {
        case ScoreKind::kMsp:
            return msp_score(forward_logits(model, x_row).logits);
        case ScoreKind::kMaxLogit:
            return max_logit_score(forward_logits(model, x_row).logits);
        case ScoreKind::kEnergy:
            return energy_score(forward_logits(model, x_row).logits, spec.temperature);
        case ScoreKind::kEntropy:
            return negative_entropy_score(forward_logits(model, x_row).logits);
        case ScoreKind::kTempMsp:
            return msp_score(forward_logits(model, x_row).logits, spec.temperature);
        case ScoreKind::kOdin: {
            const Mat perturbed =
                odin_perturb(model, x_row, spec.temperature, spec.odin_epsilon);
            return msp_score(forward_logits(model, perturbed).logits, spec.temperature);
        }
        case ScoreKind::kMahalanobis: {
            if (!context.mahalanobis) {
                throw std::logic_error("score_example: mahalanobis scorer was not fitted");
            }
            const Mat features = forward_logits(model, x_row).penultimate;
            return -min_mahalanobis_sq(*context.mahalanobis, features);
        }
        case ScoreKind::kReact: {
            if (!context.react) {
                throw std::logic_error("score_example: react scorer was not fitted");
            }
            const Mat clipped =
                forward_logits(model, x_row).penultimate.cwiseMin(context.react->clip);
            return energy_score(logits_from_penultimate(model, clipped), spec.temperature);
        }
    }
    throw std::logic_error("score_example: bad score kind");
}

TheoremPair construct_theorem_pair(int num_classes, Rng& rng) {
    if (num_classes < 2) {
        throw std::invalid_argument("construct_theorem_pair: need at least 2 classes");
    }
    const int k = num_classes;
    TheoremPair pair;
    pair.phi_a.resize(1, k);
    pair.phi_b.resize(1, k);

    // unique max with a strict gap, so the tail ratio stays below 1
    const double a1 = 1.0 + 2.0 * rng.uniform();
    pair.phi_a(0, 0) = a1;
    double tail = 0.0;
    for (int j = 1; j < k; ++j) {
        pair.phi_a(0, j) = a1 - 0.5 - 2.5 * rng.uniform();
        tail += std::exp(pair.phi_a(0, j) - a1);
    }
    const double flat = a1 + std::log(tail / static_cast<double>(k - 1));
    pair.phi_b(0, 0) = a1;
    for (int j = 1; j < k; ++j) {
        pair.phi_b(0, j) = flat;
    }
    return pair;
}

TheoremReport verify_temperature_ordering(int num_classes, int trials,
                                          const std::vector<double>& temperatures,
                                          std::uint64_t seed, double tolerance) {
    if (trials < 1) {
        throw std::invalid_argument("verify_temperature_ordering: trials must be >= 1");
    }
    if (temperatures.empty()) {
        throw std::invalid_argument("verify_temperature_ordering: empty temperature grid");
    }
    for (double t : temperatures) {
        if (!(t >= 1.0)) {
            throw std::invalid_argument(
                "verify_temperature_ordering: temperatures must be >= 1");
        }
    }

    TheoremReport report;
    report.num_classes = num_classes;
    report.trials = trials;
    report.all_ok = true;
    Rng rng(derive_seed(seed, "theorem"));
    for (int trial = 0; trial < trials; ++trial) {
        const TheoremPair pair = construct_theorem_pair(num_classes, rng);
        for (double t : temperatures) {
            TheoremCase c;
            c.t = t;
            c.msp_a = msp_score(pair.phi_a, t);
            c.msp_b = msp_score(pair.phi_b, t);
            c.ok = c.msp_a >= c.msp_b - tolerance;
            report.all_ok = report.all_ok && c.ok;
            report.cases.push_back(c);
        }
    }
    return report;
}

}  // namespace winnow
