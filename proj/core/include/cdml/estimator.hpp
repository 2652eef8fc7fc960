#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdml/nuisance.hpp"
#include "cdml/panel.hpp"

namespace cdml {

// Degree of the polynomial effect f(x) = theta_0 + theta_1 x + ... + theta_q x^q.
struct PolySpec {
  int degree = 3;

  static PolySpec constant() { return {0}; }
  static PolySpec linear() { return {1}; }
  static PolySpec cubic() { return {3}; }
  // "constant", "linear", "cubic" or "q=N".
  static PolySpec parse(std::string_view text);

  int coefficient_count() const noexcept { return degree + 1; }
  std::string name() const;
  friend bool operator==(const PolySpec&, const PolySpec&) = default;
};

// r(x) = (1, x, ..., x^degree).
Eigen::VectorXd polynomial_basis(double x, int degree);

struct TreatmentResiduals {
  double treated_mean = 0.0;   // (1/C) sum_c T_c
  Eigen::VectorXd u_hat;       // T_c - treated_mean, repeated over the rows of c
};

TreatmentResiduals treatment_residuals(const PanelDataset& ds);

struct DmlFit {
  Eigen::VectorXd theta;
  Eigen::VectorXd v_hat;
  Eigen::VectorXd u_hat;
  Eigen::VectorXd eps_hat;
  Eigen::VectorXd modifier;    // x per row, kept for the score computation
  double treated_mean = 0.0;
  PolySpec spec;
  FoldPlan fold_plan;
  LearnerKind learner = LearnerKind::boosted_trees;
  std::uint64_t seed = 0;
  std::vector<FoldDiagnostics> fold_diagnostics;
  std::vector<std::string> warnings;
};

// N x (q+1) final-stage design with columns x^i * u_hat.
Eigen::MatrixXd final_stage_design(const Eigen::VectorXd& modifier, const Eigen::VectorXd& u_hat, int degree);

// Residual-on-residual stage for already cross-fitted outcome residuals.
// Solved through a thin SVD; RankDeficient when the smallest singular value
// is below 1e-10 of the largest.
DmlFit fit_final_stage(const PanelDataset& ds, PolySpec spec, const OutcomeResiduals& residuals);

// Full pipeline: folds, cross-fitted outcome model, treatment residuals,
// final stage.
DmlFit fit_dml(const PanelDataset& ds, PolySpec spec, const LearnerSpec& learner, int folds,
               std::uint64_t seed, unsigned threads = 1);

double effect_at(std::span<const double> theta, double x) noexcept;
double effect_at(const DmlFit& fit, double x) noexcept;

}  // namespace cdml
