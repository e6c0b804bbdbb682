#pragma once

#include <map>
#include <string>
#include <vector>

#include "winnow/rng.hpp"
#include "winnow/types.hpp"

namespace winnow {

// Stretched hard-concrete distribution. A sample is
//   s = sigmoid((log(u / (1 - u)) + alpha) / beta),  u ~ Uniform(0, 1)
//   m = clamp(s * (stretch_hi - stretch_lo) + stretch_lo, 0, 1)
// so m takes the exact values 0 and 1 with positive probability.
struct HardConcrete {
    double beta = 2.0 / 3.0;
    double stretch_lo = -0.1;
    double stretch_hi = 1.1;
};

void validate(const HardConcrete& dist);

// One gate parameter per gated weight-matrix entry, keyed by layer name.
struct GateSet {
    std::map<std::string, Mat> alpha;
    HardConcrete dist;
};

// Maps a uniform draw in (0, 1) to logistic noise log(u / (1 - u)).
double logistic_noise(Rng& rng);

// One stochastic relaxed sample per entry; values lie in [0, 1].
Mat sample_gate_values(const Mat& alpha, const HardConcrete& dist, Rng& rng);

// P(gate > 0) = sigmoid(alpha - beta * log(-stretch_lo / stretch_hi)).
Mat gate_open_probability(const Mat& alpha, const HardConcrete& dist);

// Noise-free gate value clamp(sigmoid(alpha) * (hi - lo) + lo, 0, 1).
Mat deterministic_gate_values(const Mat& alpha, const HardConcrete& dist);

// Binary mask: 1 where open probability > mu. mu must lie in (0, 1).
Mat threshold_mask(const Mat& open_prob, double mu);

// Expected number of open gates, summed over every layer.
double expected_l0(const GateSet& gates);

std::map<std::string, Mat> sample_gates(const GateSet& gates, Rng& rng);
std::map<std::string, Mat> open_probabilities(const GateSet& gates);
std::map<std::string, Mat> deterministic_gates(const GateSet& gates);
std::map<std::string, Mat> threshold_gates(const GateSet& gates, double mu);

}  // namespace winnow
