#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <span>
#include <string_view>
#include <vector>

#include "cdml/bootstrap.hpp"
#include "cdml/error.hpp"
#include "cdml/estimator.hpp"
#include "cdml/nuisance.hpp"
#include "cdml/panel.hpp"

namespace cdml {

enum class TruthMode { linear_mistakes, custom_poly };
enum class GKind { linear, nonlinear };

std::string_view to_string(TruthMode mode) noexcept;
std::string_view to_string(GKind kind) noexcept;
TruthMode parse_truth_mode(std::string_view text);
GKind parse_g_kind(std::string_view text);

struct SimConfig {
  std::size_t clusters = 40;
  std::size_t n_min = 100;
  std::size_t n_max = 100;
  double treated_prob = 0.5;
  TruthMode truth = TruthMode::linear_mistakes;
  double mistake_rate = 0.05;          // m; f(x) = m (1 - 2x)
  std::vector<double> custom_theta;    // custom_poly mode
  GKind g_kind = GKind::nonlinear;
  double noise_sd = 0.05;
  std::vector<double> beta_w = {0.05, -0.03};   // one entry per w covariate
  std::vector<double> gamma_z = {0.02, 0.01};   // one entry per z covariate
  double x_beta_a = 2.0;
  double x_beta_b = 2.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Ground truth of one generated panel.
struct SimTruth {
  std::vector<double> true_f;         // coefficients of the generating effect
  double true_mistakes = 0.0;         // |f(1)|
  double realized_treated_share = 0;  // (1/C) sum_c T_c of the draw
  GKind g_kind = GKind::nonlinear;
  std::vector<double> beta_w;
  std::vector<double> gamma_z;

  double effect(double x) const noexcept;
  // Outcome model without treatment: g(x, w, z).
  double g(double x, std::span<const double> w, std::span<const double> z) const noexcept;
  // E[Y | x, w, z] pooled over the realised design: g + share * f(x). Residuals
  // against this are exactly (T_c - share) f(x) + noise.
  double conditional_mean(const PanelDataset& ds, std::size_t row) const;
  // Nuisance learner that predicts conditional_mean.
  LearnerSpec oracle_learner() const;
};

struct SimResult {
  PanelDataset data;
  SimTruth truth;
};

SimResult generate(const SimConfig& cfg);

// Exact two-candidate panel: y_r = 1 - y, x_r = 1 - x.
TwoPartyPanel to_two_party(const PanelDataset& ds);

struct EstimationConfig {
  PolySpec spec = PolySpec::cubic();
  LearnerSpec learner = LearnerSpec::boosted();
  int folds = 5;
  GridSpec grid = GridSpec::uniform(1001);
  std::size_t boot_reps = 2000;
  double alpha = 0.05;
  bool df_correction = false;
  // Also fit the constant specification on the same residuals (ATE zero test).
  bool constant_ate = true;
};

struct RepOutcome {
  std::size_t rep = 0;
  std::uint64_t data_seed = 0;
  std::uint64_t fold_seed = 0;
  std::uint64_t boot_seed = 0;
  std::vector<double> theta;
  double f1_hat = 0.0;
  double f1_se = 0.0;
  bool f1_covered = false;          // pointwise CI for f(1) covers the truth
  bool band_covered = false;        // uniform band covers f on the whole grid
  double critical_value = 0.0;
  double wald_zero_p = 1.0;
  std::optional<double> wald_homogeneous_p;  // q >= 1
  double sup_zero_p = 1.0;
  double sup_homogeneous_p = 1.0;
  double mistakes_point = 0.0;
  std::optional<double> ate_zero_p;          // constant spec
};

// One repetition with seeds derived from (mc_seed, rep).
RepOutcome run_replication(const SimConfig& cfg, const EstimationConfig& est, std::uint64_t mc_seed, std::size_t rep);

struct RateEstimate {
  double value = 0.0;
  double mc_se = 0.0;
};

struct McReport {
  SimConfig sim;
  EstimationConfig est;
  std::size_t reps = 0;
  std::uint64_t mc_seed = 0;
  std::vector<double> true_f;        // padded/truncated to q+1 for bias
  std::vector<RateEstimate> theta_bias;
  std::vector<double> theta_rmse;
  RateEstimate f1_bias;
  double f1_rmse = 0.0;
  RateEstimate pointwise_coverage_f1;
  RateEstimate uniform_coverage;
  RateEstimate reject_wald_zero;
  std::optional<RateEstimate> reject_wald_homogeneous;
  RateEstimate reject_sup_zero;
  RateEstimate reject_sup_homogeneous;
  std::optional<RateEstimate> reject_ate_zero;
  RateEstimate mistakes_mean;
  double mistakes_median = 0.0;
  double true_mistakes = 0.0;
  double critical_value_min = 0.0;
  double critical_value_mean = 0.0;
  std::vector<RepOutcome> outcomes;
};

// Failure inside one Monte Carlo repetition.
class RepetitionError : public Error {
 public:
  RepetitionError(std::size_t rep, const Error& cause)
      : Error(cause.kind(), "repetition " + std::to_string(rep) + ": " + cause.what()), rep_(rep) {}
  std::size_t rep() const noexcept { return rep_; }

 private:
  std::size_t rep_;
};

// Repetitions run in parallel; the report does not depend on `threads`. A
// failing repetition aborts the study with an error naming its index.
McReport monte_carlo(const SimConfig& cfg, const EstimationConfig& est, std::size_t reps, std::uint64_t mc_seed,
                     unsigned threads = 1);

}  // namespace cdml
