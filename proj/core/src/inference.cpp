#include "cdml/inference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "cdml/error.hpp"

namespace cdml {

namespace {

std::map<double, bool> decisions(double p_value) {
  std::map<double, bool> out;
  for (double alpha : kDecisionLevels) out[alpha] = p_value < alpha;
  return out;
}

double quadratic_form(const Eigen::MatrixXd& m, const Eigen::VectorXd& v) {
  return v.dot(m * v);
}

}  // namespace

ClusterScores build_scores(const DmlFit& fit, const PanelDataset& ds) {
  require(static_cast<std::size_t>(fit.eps_hat.size()) == ds.row_count(), ErrorKind::InvalidArgument,
          "fit does not belong to this dataset");
  const Eigen::VectorXd ue = fit.u_hat.cwiseProduct(fit.eps_hat);
  ClusterScores s;
  s.row_scores = final_stage_design(fit.modifier, ue, fit.spec.degree);
  s.cluster_sums.setZero(static_cast<Eigen::Index>(ds.cluster_count()), fit.spec.coefficient_count());
  for (std::size_t c = 0; c < ds.cluster_count(); ++c) {
    s.cluster_sums.row(static_cast<Eigen::Index>(c)) =
        s.row_scores.middleRows(static_cast<Eigen::Index>(ds.cluster_begin(c)), static_cast<Eigen::Index>(ds.cluster_size(c)))
            .colwise()
            .sum();
  }
  return s;
}

InferenceState sandwich_variance(const DmlFit& fit, const ClusterScores& scores, SandwichOptions options) {
  const Eigen::MatrixXd d = final_stage_design(fit.modifier, fit.u_hat, fit.spec.degree);
  const auto n = static_cast<double>(d.rows());

  InferenceState st;
  st.rows = static_cast<std::size_t>(d.rows());
  st.clusters = static_cast<std::size_t>(scores.cluster_sums.rows());
  st.J = d.transpose() * d / n;
  st.cluster_score_sums = scores.cluster_sums;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(st.J);
  const auto& diag = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !(diag.minCoeff() > 1e-14 * diag.cwiseAbs().maxCoeff())) {
    fail(ErrorKind::SingularJ, "scaling matrix J is singular");
  }
  st.J_inverse = ldlt.solve(Eigen::MatrixXd::Identity(st.J.rows(), st.J.cols()));
  st.J_inverse = 0.5 * (st.J_inverse + st.J_inverse.transpose()).eval();

  Eigen::MatrixXd middle = st.cluster_score_sums.transpose() * st.cluster_score_sums;
  if (options.df_correction && st.clusters > 1) {
    middle *= static_cast<double>(st.clusters) / static_cast<double>(st.clusters - 1);
  }
  st.var_theta = st.J_inverse * middle * st.J_inverse / (n * n);
  st.var_theta = 0.5 * (st.var_theta + st.var_theta.transpose()).eval();
  return st;
}

double pointwise_se(const InferenceState& state, double x) {
  const Eigen::VectorXd r = polynomial_basis(x, state.degree());
  const double q = quadratic_form(state.var_theta, r);
  if (q >= 0.0) return std::sqrt(q);
  // Negative only through rounding; anything larger signals a broken state.
  require(q >= -1e-12 * std::max(state.var_theta.trace(), 0.0) * r.squaredNorm(), ErrorKind::ZeroVariance,
          "variance quadratic form is negative");
  return 0.0;
}

double chi_squared_survival(double statistic, int dof) {
  require(dof >= 1, ErrorKind::InvalidArgument, "chi-squared dof must be >= 1");
  if (!(statistic > 0.0)) return 1.0;
  if (std::isinf(statistic)) return 0.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

double normal_two_sided_p(double z) {
  if (std::isnan(z)) return 1.0;
  return std::erfc(std::fabs(z) / std::sqrt(2.0));
}

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, ErrorKind::InvalidArgument, "quantile level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

std::string_view to_string(TestMethod method) noexcept {
  switch (method) {
    case TestMethod::wald: return "wald";
    case TestMethod::z: return "z";
    case TestMethod::bootstrap_sup: return "bootstrap_sup";
  }
  return "unknown";
}

std::string_view to_string(WaldPreset preset) noexcept {
  switch (preset) {
    case WaldPreset::zero: return "zero";
    case WaldPreset::homogeneous: return "homogeneous";
    case WaldPreset::linearity: return "linearity";
  }
  return "unknown";
}

Eigen::MatrixXd restriction_matrix(WaldPreset preset, int degree) {
  const int k = degree + 1;
  const int first = preset == WaldPreset::zero ? 0 : preset == WaldPreset::homogeneous ? 1 : 2;
  const int rows = k - first;
  if (rows <= 0) {
    fail(ErrorKind::RankMismatch, std::string("restriction '") + std::string(to_string(preset)) +
                                      "' is empty for degree " + std::to_string(degree));
  }
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(rows, k);
  for (int i = 0; i < rows; ++i) r(i, first + i) = 1.0;
  return r;
}

TestResult wald_test(const InferenceState& state, const Eigen::VectorXd& theta, const Eigen::MatrixXd& restriction) {
  const Eigen::Index k = state.var_theta.rows();
  require(theta.size() == k, ErrorKind::SpecMismatch, "coefficient vector does not match the inference state");
  require(restriction.rows() >= 1 && restriction.rows() <= k && restriction.cols() == k, ErrorKind::RankMismatch,
          "restriction matrix has the wrong shape");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(restriction);
  require(lu.rank() == restriction.rows(), ErrorKind::RankMismatch, "restriction matrix is not of full row rank");

  const Eigen::VectorXd rt = restriction * theta;
  const Eigen::MatrixXd middle = restriction * state.var_theta * restriction.transpose();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(middle);
  const auto& diag = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !(diag.minCoeff() > 1e-14 * diag.cwiseAbs().maxCoeff()) ||
      !(diag.maxCoeff() > 0.0)) {
    fail(ErrorKind::SingularRestriction, "R Var(theta) R^T is not invertible");
  }

  TestResult res;
  res.method = TestMethod::wald;
  res.dof = static_cast<int>(restriction.rows());
  res.statistic = std::max(0.0, rt.dot(ldlt.solve(rt)));
  res.p_value = chi_squared_survival(res.statistic, *res.dof);
  res.decision_at = decisions(res.p_value);
  return res;
}

TestResult wald_test(const InferenceState& state, const Eigen::VectorXd& theta, WaldPreset preset) {
  return wald_test(state, theta, restriction_matrix(preset, state.degree()));
}

TestResult linear_combination_test(const InferenceState& state, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& weights) {
  require(weights.size() == state.var_theta.rows() && theta.size() == weights.size(), ErrorKind::SpecMismatch,
          "weight vector length must equal q + 1");
  const double variance = quadratic_form(state.var_theta, weights);
  if (!(variance > 0.0)) fail(ErrorKind::ZeroVariance, "linear combination has zero variance");
  TestResult res;
  res.method = TestMethod::z;
  res.estimate = weights.dot(theta);
  res.se = std::sqrt(variance);
  res.statistic = res.estimate / res.se;
  res.p_value = normal_two_sided_p(res.statistic);
  res.decision_at = decisions(res.p_value);
  return res;
}

std::pair<double, double> absolute_interval(double lo, double hi) noexcept {
  if (lo >= 0.0) return {lo, hi};
  if (hi <= 0.0) return {-hi, -lo};
  return {0.0, std::max(-lo, hi)};
}

MistakesEstimate mistakes(const DmlFit& fit, const InferenceState& state, double alpha) {
  const Eigen::VectorXd at_one = polynomial_basis(1.0, fit.spec.degree);
  MistakesEstimate m;
  m.signed_value = at_one.dot(fit.theta);
  m.point = std::fabs(m.signed_value);
  m.se = pointwise_se(state, 1.0);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  std::tie(m.ci_low, m.ci_high) = absolute_interval(m.signed_value - z * m.se, m.signed_value + z * m.se);
  m.p_value = m.se > 0.0 ? normal_two_sided_p(m.signed_value / m.se) : (m.signed_value == 0.0 ? 1.0 : 0.0);
  return m;
}

TestResult compare_fits(const DmlFit& fit_a, const InferenceState& state_a, const DmlFit& fit_b,
                        const InferenceState& state_b, double x) {
  if (fit_a.spec != fit_b.spec) {
    fail(ErrorKind::SpecMismatch, "cannot compare fits of degree " + std::to_string(fit_a.spec.degree) + " and " +
                                      std::to_string(fit_b.spec.degree));
  }
  const double se_a = pointwise_se(state_a, x);
  const double se_b = pointwise_se(state_b, x);
  TestResult res;
  res.method = TestMethod::z;
  res.independence_assumed = true;
  res.estimate = effect_at(fit_a, x) - effect_at(fit_b, x);
  res.se = std::hypot(se_a, se_b);
  if (res.se > 0.0) {
    res.statistic = res.estimate / res.se;
    res.p_value = normal_two_sided_p(res.statistic);
  } else if (res.estimate == 0.0) {
    res.statistic = 0.0;
    res.p_value = 1.0;
  } else {
    fail(ErrorKind::ZeroVariance, "difference has zero standard error");
  }
  res.decision_at = decisions(res.p_value);
  return res;
}

}  // namespace cdml
