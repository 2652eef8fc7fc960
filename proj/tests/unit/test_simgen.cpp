#include <doctest.h>

#include <cmath>

#include "cdml/simgen.hpp"
#include "toy.hpp"

using namespace cdml;
using cdml::test::error_kind;

namespace {

SimConfig small_config(std::uint64_t seed = 1) {
  SimConfig cfg;
  cfg.clusters = 12;
  cfg.n_min = 5;
  cfg.n_max = 9;
  cfg.seed = seed;
  return cfg;
}

EstimationConfig quick_estimation() {
  EstimationConfig est;
  est.learner = LearnerSpec::linear();
  est.folds = 4;
  est.grid = GridSpec::uniform(51);
  est.boot_reps = 200;
  return est;
}

}  // namespace

TEST_CASE("linear mistakes truth") {
  SimConfig cfg = small_config();
  cfg.mistake_rate = 0.05;
  const SimTruth truth = generate(cfg).truth;
  CHECK(truth.true_f == std::vector<double>{0.05, -0.1});
  CHECK(truth.effect(0.5) == doctest::Approx(0.0));
  CHECK(truth.effect(1.0) == doctest::Approx(-0.05));
  CHECK(truth.true_mistakes == doctest::Approx(0.05));
  for (double x = 0.0; x <= 1.0; x += 0.01) CHECK(truth.effect(x) + truth.effect(1.0 - x) == doctest::Approx(0.0));
}

TEST_CASE("generated panels respect the configured shape") {
  const SimResult sim = generate(small_config(3));
  CHECK(sim.data.cluster_count() == 12);
  for (std::size_t c = 0; c < 12; ++c) {
    CHECK(sim.data.cluster_size(c) >= 5);
    CHECK(sim.data.cluster_size(c) <= 9);
  }
  CHECK(sim.data.w_names().size() == 2);
  CHECK(sim.data.z_names().size() == 2);
  CHECK(sim.data.mode() == ValidationMode::synthetic);
  const DesignSummary d = validate_design(sim.data);
  CHECK(sim.truth.realized_treated_share == doctest::Approx(d.treated_share));
  for (const auto& row : sim.data.rows()) {
    CHECK(row.modifier > 0.0);
    CHECK(row.modifier < 1.0);
  }
}

TEST_CASE("same seed regenerates the same panel") {
  CHECK(generate(small_config(5)).data == generate(small_config(5)).data);
  CHECK_FALSE(generate(small_config(5)).data == generate(small_config(6)).data);
}

TEST_CASE("noiseless null data with the oracle learner gives zero coefficients") {
  SimConfig cfg = small_config(7);
  cfg.mistake_rate = 0.0;
  cfg.noise_sd = 0.0;
  cfg.g_kind = GKind::linear;
  const SimResult sim = generate(cfg);
  const DmlFit fit = fit_dml(sim.data, PolySpec::cubic(), sim.truth.oracle_learner(), 4, 1);
  CHECK(fit.theta.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("invalid configurations are rejected") {
  SimConfig cfg = small_config();
  cfg.treated_prob = 1.0;
  CHECK(error_kind([&] { cfg.validate(); }) == ErrorKind::InvalidArgument);
  cfg = small_config();
  cfg.n_max = 2;
  CHECK(error_kind([&] { cfg.validate(); }) == ErrorKind::InvalidArgument);
  cfg = small_config();
  cfg.truth = TruthMode::custom_poly;
  CHECK(error_kind([&] { cfg.validate(); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("two-party export is an exact complement") {
  const SimResult sim = generate(small_config(8));
  const TwoPartyPanel two = to_two_party(sim.data);
  const auto [d, r] = split_by_party(two);
  CHECK(d == sim.data);
  for (std::size_t i = 0; i < d.row_count(); ++i) {
    CHECK(r.rows()[i].outcome == 1.0 - d.rows()[i].outcome);
    CHECK(r.rows()[i].modifier == 1.0 - d.rows()[i].modifier);
  }
}

TEST_CASE("mirrored parties give mirrored effect curves") {
  const SimResult sim = generate(small_config(9));
  const auto [d, r] = split_by_party(to_two_party(sim.data));
  const DmlFit fd = fit_dml(d, PolySpec::cubic(), LearnerSpec::linear(), 4, 2);
  const DmlFit fr = fit_dml(r, PolySpec::cubic(), LearnerSpec::linear(), 4, 2);
  for (double x = 0.0; x <= 1.0; x += 0.05) CHECK(std::abs(effect_at(fr, x) + effect_at(fd, 1.0 - x)) < 1e-9);
}

TEST_CASE("one repetition reproduces the single run") {
  const SimConfig cfg = small_config(10);
  const EstimationConfig est = quick_estimation();
  const McReport report = monte_carlo(cfg, est, 1, 42);
  const RepOutcome single = run_replication(cfg, est, 42, 0);
  REQUIRE(report.outcomes.size() == 1);
  CHECK(report.outcomes[0].theta == single.theta);
  CHECK(report.f1_bias.value == doctest::Approx(single.f1_hat - report.sim.mistake_rate * -1.0).epsilon(1e-14));
  CHECK(report.mistakes_mean.value == single.mistakes_point);
  CHECK(report.mistakes_median == single.mistakes_point);
  CHECK(report.critical_value_min == single.critical_value);
  CHECK(report.uniform_coverage.value == (single.band_covered ? 1.0 : 0.0));
  CHECK(report.theta_bias[1].value == doctest::Approx(single.theta[1] + 0.1).epsilon(1e-14));
}

TEST_CASE("monte carlo results do not depend on the thread count") {
  const SimConfig cfg = small_config(11);
  const EstimationConfig est = quick_estimation();
  const McReport one = monte_carlo(cfg, est, 6, 3, 1);
  const McReport three = monte_carlo(cfg, est, 6, 3, 3);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(one.outcomes[i].theta == three.outcomes[i].theta);
    CHECK(one.outcomes[i].sup_zero_p == three.outcomes[i].sup_zero_p);
    CHECK(one.outcomes[i].critical_value == three.outcomes[i].critical_value);
  }
  CHECK(one.reject_wald_zero.value == three.reject_wald_zero.value);
}

TEST_CASE("zero repetitions are rejected") {
  CHECK(error_kind([] { monte_carlo(small_config(), quick_estimation(), 0, 1); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("failing repetitions report their index") {
  SimConfig cfg = small_config(12);
  cfg.clusters = 3;
  EstimationConfig est = quick_estimation();
  est.folds = 5;
  try {
    monte_carlo(cfg, est, 4, 1);
    FAIL("expected a failure");
  } catch (const RepetitionError& e) {
    CHECK(e.rep() == 0);
    CHECK(e.kind() == ErrorKind::TooFewClusters);
  }
}
