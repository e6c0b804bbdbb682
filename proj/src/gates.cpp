#include "winnow/gates.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace winnow {

void validate(const HardConcrete& dist) {
    if (dist.beta <= 0.0 || dist.beta >= 1.0) {
        throw std::invalid_argument("hard concrete: beta must lie in (0, 1)");
    }
    if (!(dist.stretch_lo < 0.0)) {
        throw std::invalid_argument("hard concrete: stretch_lo must be < 0");
    }
    if (!(dist.stretch_hi > 1.0)) {
        throw std::invalid_argument("hard concrete: stretch_hi must be > 1");
    }
}

double logistic_noise(Rng& rng) {
    const double u = rng.uniform_open();
    return std::log(u) - std::log1p(-u);
}

Mat sample_gate_values(const Mat& alpha, const HardConcrete& dist, Rng& rng) {
    validate(dist);
    Mat out(alpha.rows(), alpha.cols());
    const double span = dist.stretch_hi - dist.stretch_lo;
    for (Eigen::Index r = 0; r < alpha.rows(); ++r) {
        for (Eigen::Index c = 0; c < alpha.cols(); ++c) {
            const double s = sigmoid((logistic_noise(rng) + alpha(r, c)) / dist.beta);
            out(r, c) = std::clamp(s * span + dist.stretch_lo, 0.0, 1.0);
        }
    }
    return out;
}

Mat gate_open_probability(const Mat& alpha, const HardConcrete& dist) {
    validate(dist);
    const double shift = dist.beta * std::log(-dist.stretch_lo / dist.stretch_hi);
    return alpha.unaryExpr([shift](double a) { return sigmoid(a - shift); });
}

Mat deterministic_gate_values(const Mat& alpha, const HardConcrete& dist) {
    validate(dist);
    const double span = dist.stretch_hi - dist.stretch_lo;
    return alpha.unaryExpr([&](double a) {
        return std::clamp(sigmoid(a) * span + dist.stretch_lo, 0.0, 1.0);
    });
}

Mat threshold_mask(const Mat& open_prob, double mu) {
    if (!(mu > 0.0 && mu < 1.0)) {
        throw std::invalid_argument("threshold_mask: mu must lie in (0, 1)");
    }
    return open_prob.unaryExpr([mu](double p) { return p > mu ? 1.0 : 0.0; });
}

double expected_l0(const GateSet& gates) {
    double total = 0.0;
    for (const auto& [name, alpha] : gates.alpha) {
        total += gate_open_probability(alpha, gates.dist).sum();
    }
    return total;
}

namespace {

template <typename Fn>
std::map<std::string, Mat> map_layers(const GateSet& gates, Fn&& fn) {
    std::map<std::string, Mat> out;
    for (const auto& [name, alpha] : gates.alpha) {
        out.emplace(name, fn(alpha));
    }
    return out;
}

}  // namespace

std::map<std::string, Mat> sample_gates(const GateSet& gates, Rng& rng) {
    return map_layers(gates,
                      [&](const Mat& alpha) { return sample_gate_values(alpha, gates.dist, rng); });
}

std::map<std::string, Mat> open_probabilities(const GateSet& gates) {
    return map_layers(gates,
                      [&](const Mat& alpha) { return gate_open_probability(alpha, gates.dist); });
}

std::map<std::string, Mat> deterministic_gates(const GateSet& gates) {
    return map_layers(
        gates, [&](const Mat& alpha) { return deterministic_gate_values(alpha, gates.dist); });
}

std::map<std::string, Mat> threshold_gates(const GateSet& gates, double mu) {
    return map_layers(gates, [&](const Mat& alpha) {
        return threshold_mask(gate_open_probability(alpha, gates.dist), mu);
    });
}

}  // namespace winnow
