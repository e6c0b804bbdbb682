#pragma once

#include <optional>
#include <string>
#include <vector>

#include "winnow/model.hpp"
#include "winnow/rng.hpp"
#include "winnow/types.hpp"

namespace winnow {

enum class ScoreKind {
    kMsp,          // max softmax probability at T = 1
    kMaxLogit,     // max raw logit
    kEnergy,       // T * logsumexp(logits / T)
    kEntropy,      // negated softmax entropy at T = 1
    kTempMsp,      // max softmax probability at configured T
    kOdin,         // input perturbation + temperature scaling
    kMahalanobis,  // negated min squared class distance in feature space
    kReact,        // energy over percentile-clipped penultimate activations
};

ScoreKind parse_score_kind(const std::string& name);
std::string to_string(ScoreKind kind);
std::vector<ScoreKind> all_score_kinds();

struct ScoringSpec {
    ScoreKind kind = ScoreKind::kMsp;
    double temperature = 1.0;       // temp-msp, odin, energy, react
    double odin_epsilon = 1e-3;     // input-perturbation step
    double react_percentile = 90.0; // activation clipping percentile
};

void validate(const ScoringSpec& spec);

// Class-conditional Gaussian fit over penultimate features: per-class means
// plus a shared covariance (pooled within-class scatter / N) regularized by
// eps * (trace / d) * I. The Cholesky factor backs distance evaluation.
struct MahalanobisModel {
    Mat means;       // k x d
    Mat chol_lower;  // d x d, lower-triangular factor of the covariance
    double eps = 1e-6;
};

MahalanobisModel fit_mahalanobis(const Mat& features, const std::vector<int>& labels,
                                 int num_classes, double eps = 1e-6);

double min_mahalanobis_sq(const MahalanobisModel& model, const Mat& feature_row);

struct ReactClip {
    double clip = 0.0;
    double percentile = 90.0;
};

// Nearest-rank percentile of all penultimate activations pooled over the
// fitting set.
ReactClip fit_react(const ModelState& model, const Mat& x, double percentile);

// Fitted state the data-dependent scorers need; cheap scorers ignore it.
struct ScorerContext {
    std::optional<MahalanobisModel> mahalanobis;
    std::optional<ReactClip> react;
};

ScorerContext fit_scorer_context(const std::vector<ScoringSpec>& specs, const ModelState& model,
                                 const Mat& x_fit, const std::vector<int>& y_fit);

// Scores one example; higher means more in-distribution.
double score_example(const ScoringSpec& spec, const ModelState& model,
                     const ScorerContext& context, const Mat& x_row);

// Convenience scalar scores over a logits row.
double msp_score(const Mat& logits_row, double temperature = 1.0);
double max_logit_score(const Mat& logits_row);
double energy_score(const Mat& logits_row, double temperature = 1.0);
double negative_entropy_score(const Mat& logits_row);

// x + epsilon * sign(d/dx log max-softmax(x; T)); the gradient flows through
// the full network.
Mat odin_perturb(const ModelState& model, const Mat& x_row, double temperature, double epsilon);

// Logit pair with equal max-softmax at T = 1 where scaling with any T > 1
// ranks the peaked vector at or above the flat one. phi_a has a unique
// argmax drawn at random; phi_b shares its top logit and spreads the same
// total tail mass evenly.
struct TheoremPair {
    Mat phi_a;
    Mat phi_b;
};

TheoremPair construct_theorem_pair(int num_classes, Rng& rng);

struct TheoremCase {
    double t = 1.0;
    double msp_a = 0.0;
    double msp_b = 0.0;
    bool ok = false;  // msp_a >= msp_b - tolerance
};

struct TheoremReport {
    int num_classes = 0;
    int trials = 0;
    std::vector<TheoremCase> cases;
    bool all_ok = false;
};

// Checks the ordering over a grid of temperatures and random pairs.
TheoremReport verify_temperature_ordering(int num_classes, int trials,
                                          const std::vector<double>& temperatures,
                                          std::uint64_t seed, double tolerance = 1e-12);

}  // namespace winnow
