#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

#include "cdml/estimator.hpp"
#include "cdml/panel.hpp"

namespace cdml {

// Per-row scores psi^i_cp = x^i_cp * u_hat_c * eps_hat_cp and their sums within
// each cluster.
struct ClusterScores {
  Eigen::MatrixXd row_scores;    // N x (q+1)
  Eigen::MatrixXd cluster_sums;  // C x (q+1)
};

ClusterScores build_scores(const DmlFit& fit, const PanelDataset& ds);

struct SandwichOptions {
  // Multiplies the middle matrix by C / (C - 1).
  bool df_correction = false;
};

struct InferenceState {
  Eigen::MatrixXd J;                   // (1/N) D^T D
  Eigen::MatrixXd J_inverse;
  Eigen::MatrixXd cluster_score_sums;  // C x (q+1)
  Eigen::MatrixXd var_theta;           // (1/N^2) J^-1 [sum_c s_c s_c^T] J^-1
  std::size_t rows = 0;
  std::size_t clusters = 0;

  int degree() const noexcept { return static_cast<int>(J.rows()) - 1; }
};

InferenceState sandwich_variance(const DmlFit& fit, const ClusterScores& scores, SandwichOptions options = {});

// sigma_hat(f_hat(x)) = sqrt(r(x)^T Var r(x)); tiny negative forms clamp to 0.
double pointwise_se(const InferenceState& state, double x);

// Survival functions, accurate to about 1e-12 relative.
double chi_squared_survival(double statistic, int dof);
double normal_two_sided_p(double z);
double normal_quantile(double p);

enum class TestMethod { wald, z, bootstrap_sup };
std::string_view to_string(TestMethod method) noexcept;

inline constexpr double kDecisionLevels[] = {0.01, 0.05, 0.10};

struct TestResult {
  double statistic = 0.0;
  std::optional<int> dof;
  double p_value = 1.0;
  TestMethod method = TestMethod::wald;
  std::map<double, bool> decision_at;  // alpha -> reject
  // z tests only
  double estimate = 0.0;
  double se = 0.0;
  bool independence_assumed = false;
};

enum class WaldPreset { zero, homogeneous, linearity };
std::string_view to_string(WaldPreset preset) noexcept;

// zero: identity; homogeneous: rows 1..q; linearity: rows 2..q (q >= 2).
// RankMismatch when the restriction would be empty.
Eigen::MatrixXd restriction_matrix(WaldPreset preset, int degree);

TestResult wald_test(const InferenceState& state, const Eigen::VectorXd& theta, const Eigen::MatrixXd& restriction);
TestResult wald_test(const InferenceState& state, const Eigen::VectorXd& theta, WaldPreset preset);

TestResult linear_combination_test(const InferenceState& state, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& weights);

struct MistakesEstimate {
  double point = 0.0;         // |f_hat(1)|
  double signed_value = 0.0;  // f_hat(1)
  double se = 0.0;            // SE of f_hat(1)
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
};

// Image of the signed interval [lo, hi] under |.|.
std::pair<double, double> absolute_interval(double lo, double hi) noexcept;

MistakesEstimate mistakes(const DmlFit& fit, const InferenceState& state, double alpha = 0.05);

// z test of f_a(x) - f_b(x) treating the two fits as independent.
TestResult compare_fits(const DmlFit& fit_a, const InferenceState& state_a, const DmlFit& fit_b,
                        const InferenceState& state_b, double x);

}  // namespace cdml
