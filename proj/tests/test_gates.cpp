#include <doctest.h>

#include <cmath>
#include <map>
#include <string>

#include "winnow/gates.hpp"
#include "winnow/rng.hpp"
#include "winnow/types.hpp"

using winnow::GateSet;
using winnow::HardConcrete;
using winnow::Mat;
using winnow::Rng;

namespace {

// Fraction of stochastic samples that land strictly above zero.
double monte_carlo_open_rate(double alpha, const HardConcrete& dist, int draws, Rng& rng) {
    Mat a = Mat::Constant(1, 1, alpha);
    int open = 0;
    for (int i = 0; i < draws; ++i) {
        if (winnow::sample_gate_values(a, dist, rng)(0, 0) > 0.0) {
            ++open;
        }
    }
    return static_cast<double>(open) / draws;
}

}  // namespace

TEST_CASE("gate samples stay inside [0, 1] and hit both exact endpoints") {
    HardConcrete dist;
    Rng rng(99);
    Mat alpha = Mat::Zero(1, 1);
    bool saw_zero = false;
    bool saw_one = false;
    bool saw_interior = false;
    for (int i = 0; i < 4000; ++i) {
        const double m = winnow::sample_gate_values(alpha, dist, rng)(0, 0);
        CHECK(m >= 0.0);
        CHECK(m <= 1.0);
        if (m == 0.0) saw_zero = true;
        if (m == 1.0) saw_one = true;
        if (m > 0.0 && m < 1.0) saw_interior = true;
    }
    CHECK(saw_zero);
    CHECK(saw_one);
    CHECK(saw_interior);
}

TEST_CASE("monte carlo open rate matches the closed-form open probability") {
    HardConcrete dist;
    const int draws = 200000;
    Rng rng(2024);
    for (double alpha : {-2.0, 0.0, 2.0}) {
        const double expected =
            winnow::gate_open_probability(Mat::Constant(1, 1, alpha), dist)(0, 0);
        const double observed = monte_carlo_open_rate(alpha, dist, draws, rng);
        CHECK(std::abs(observed - expected) < 0.01);
    }
}

TEST_CASE("open probability agrees with hand-computed values") {
    HardConcrete dist;
    Mat alpha(1, 3);
    alpha << -2.0, 0.0, 2.0;
    Mat p = winnow::gate_open_probability(alpha, dist);
    CHECK(p(0, 0) == doctest::Approx(0.40097526440092285).epsilon(1e-12));
    CHECK(p(0, 1) == doctest::Approx(0.8318221839916905).epsilon(1e-12));
    CHECK(p(0, 2) == doctest::Approx(0.973366655261484).epsilon(1e-12));
}

TEST_CASE("deterministic gate value at alpha zero sits at one half") {
    HardConcrete dist;
    Mat v = winnow::deterministic_gate_values(Mat::Zero(1, 1), dist);
    // sigmoid(0) * 1.2 - 0.1 = 0.5, up to one rounding of the stretch span.
    CHECK(v(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("deterministic gate values clamp at both ends") {
    HardConcrete dist;
    Mat alpha(1, 2);
    alpha << -40.0, 40.0;
    Mat v = winnow::deterministic_gate_values(alpha, dist);
    CHECK(v(0, 0) == 0.0);
    CHECK(v(0, 1) == 1.0);
}

TEST_CASE("sampling is deterministic for a fixed rng seed") {
    HardConcrete dist;
    Mat alpha(2, 3);
    alpha << 0.5, -1.0, 2.0, 0.0, 1.5, -0.25;
    Rng a(7);
    Rng b(7);
    Mat ma = winnow::sample_gate_values(alpha, dist, a);
    Mat mb = winnow::sample_gate_values(alpha, dist, b);
    CHECK(ma == mb);
}

TEST_CASE("threshold mask keeps only probabilities strictly above mu") {
    Mat p(1, 4);
    p << 0.2, 0.5, 0.500000001, 0.9;
    Mat m = winnow::threshold_mask(p, 0.5);
    CHECK(m(0, 0) == 0.0);
    CHECK(m(0, 1) == 0.0);  // equality does not open the gate
    CHECK(m(0, 2) == 1.0);
    CHECK(m(0, 3) == 1.0);
}

TEST_CASE("threshold mask rejects mu outside the open unit interval") {
    Mat p = Mat::Constant(1, 1, 0.5);
    CHECK_THROWS_AS(winnow::threshold_mask(p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(winnow::threshold_mask(p, 1.0), std::invalid_argument);
}

TEST_CASE("expected l0 sums open probabilities across layers") {
    GateSet gates;
    gates.alpha["layer0"] = Mat::Zero(1, 2);
    gates.alpha["layer1"] = Mat::Constant(1, 1, 2.0);
    const double expected = 2.0 * 0.8318221839916905 + 0.973366655261484;
    CHECK(winnow::expected_l0(gates) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("distribution validation rejects degenerate parameters") {
    HardConcrete bad_beta;
    bad_beta.beta = 1.0;
    CHECK_THROWS_AS(winnow::validate(bad_beta), std::invalid_argument);
    HardConcrete bad_lo;
    bad_lo.stretch_lo = 0.0;
    CHECK_THROWS_AS(winnow::validate(bad_lo), std::invalid_argument);
    HardConcrete bad_hi;
    bad_hi.stretch_hi = 1.0;
    CHECK_THROWS_AS(winnow::validate(bad_hi), std::invalid_argument);
}

TEST_CASE("map helpers cover every layer and agree with the per-matrix calls") {
    GateSet gates;
    gates.alpha["layer0"] = Mat::Constant(2, 2, 0.3);
    gates.alpha["layer1"] = Mat::Constant(1, 3, -2.0);  // open prob 0.40: below mu
    auto probs = winnow::open_probabilities(gates);
    REQUIRE(probs.size() == 2);
    CHECK(probs.at("layer0") ==
          winnow::gate_open_probability(gates.alpha.at("layer0"), gates.dist));
    auto det = winnow::deterministic_gates(gates);
    CHECK(det.at("layer1") ==
          winnow::deterministic_gate_values(gates.alpha.at("layer1"), gates.dist));
    auto thresholded = winnow::threshold_gates(gates, 0.5);
    CHECK(thresholded.at("layer0") == Mat::Constant(2, 2, 1.0));
    CHECK(thresholded.at("layer1") == Mat::Zero(1, 3));
}
