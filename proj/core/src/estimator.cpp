#include "cdml/estimator.hpp"

#include <charconv>

#include "cdml/error.hpp"

namespace cdml {

PolySpec PolySpec::parse(std::string_view text) {
  if (text == "constant") return constant();
  if (text == "linear") return linear();
  if (text == "cubic") return cubic();
  if (text.starts_with("q=")) {
    int q = -1;
    const auto digits = text.substr(2);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), q);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && q >= 0) return {q};
  }
  fail(ErrorKind::InvalidArgument, "unknown specification '" + std::string(text) +
                                       "' (expected constant, linear, cubic or q=N)");
}

std::string PolySpec::name() const {
  switch (degree) {
    case 0: return "constant";
    case 1: return "linear";
    case 3: return "cubic";
    default: return "q=" + std::to_string(degree);
  }
}

Eigen::VectorXd polynomial_basis(double x, int degree) {
  Eigen::VectorXd r(degree + 1);
  double power = 1.0;
  for (int i = 0; i <= degree; ++i) {
    r[i] = power;
    power *= x;
  }
  return r;
}

TreatmentResiduals treatment_residuals(const PanelDataset& ds) {
  const DesignSummary summary = validate_design(ds);
  TreatmentResiduals out;
  out.treated_mean = static_cast<double>(summary.treated) / static_cast<double>(summary.clusters);
  out.u_hat.resize(static_cast<Eigen::Index>(ds.row_count()));
  for (std::size_t c = 0; c < ds.cluster_count(); ++c) {
    const double u = ds.contests()[c].treatment - out.treated_mean;
    out.u_hat.segment(static_cast<Eigen::Index>(ds.cluster_begin(c)), static_cast<Eigen::Index>(ds.cluster_size(c)))
        .setConstant(u);
  }
  return out;
}

Eigen::MatrixXd final_stage_design(const Eigen::VectorXd& modifier, const Eigen::VectorXd& u_hat, int degree) {
  Eigen::MatrixXd d(modifier.size(), degree + 1);
  Eigen::VectorXd column = u_hat;
  for (int i = 0; i <= degree; ++i) {
    d.col(i) = column;
    column = column.cwiseProduct(modifier);
  }
  return d;
}

DmlFit fit_final_stage(const PanelDataset& ds, PolySpec spec, const OutcomeResiduals& residuals) {
  require(spec.degree >= 0, ErrorKind::InvalidArgument, "polynomial degree must be >= 0");
  require(static_cast<std::size_t>(residuals.v_hat.size()) == ds.row_count(), ErrorKind::InvalidArgument,
          "outcome residuals do not match the dataset");
  const TreatmentResiduals treat = treatment_residuals(ds);

  DmlFit fit;
  fit.spec = spec;
  fit.v_hat = residuals.v_hat;
  fit.u_hat = treat.u_hat;
  fit.treated_mean = treat.treated_mean;
  fit.modifier = ds.modifiers();
  fit.fold_diagnostics = residuals.folds;
  if (static_cast<std::size_t>(spec.coefficient_count()) > ds.cluster_count()) {
    fit.warnings.push_back("q+1 = " + std::to_string(spec.coefficient_count()) + " exceeds the cluster count " +
                           std::to_string(ds.cluster_count()));
  }

  const Eigen::MatrixXd d = final_stage_design(fit.modifier, fit.u_hat, spec.degree);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv.minCoeff() > 1e-10 * sv.maxCoeff())) {
    fail(ErrorKind::RankDeficient, "final-stage design is rank deficient (singular values " +
                                       std::to_string(sv.minCoeff()) + " / " + std::to_string(sv.maxCoeff()) +
                                       "); are all modifier values equal?");
  }
  fit.theta = svd.solve(fit.v_hat);
  fit.eps_hat = fit.v_hat - d * fit.theta;
  return fit;
}

DmlFit fit_dml(const PanelDataset& ds, PolySpec spec, const LearnerSpec& learner, int folds,
               std::uint64_t seed, unsigned threads) {
  validate_design(ds);
  FoldPlan plan = make_folds(ds, folds, seed);
  const OutcomeResiduals residuals = crossfit_outcome(ds, learner, plan, threads);
  DmlFit fit = fit_final_stage(ds, spec, residuals);
  fit.fold_plan = std::move(plan);
  fit.learner = learner.kind;
  fit.seed = seed;
  return fit;
}

double effect_at(std::span<const double> theta, double x) noexcept {
  double value = 0.0;
  for (auto it = theta.rbegin(); it != theta.rend(); ++it) value = value * x + *it;
  return value;
}

double effect_at(const DmlFit& fit, double x) noexcept {
  return effect_at(std::span<const double>(fit.theta.data(), static_cast<std::size_t>(fit.theta.size())), x);
}

}  // namespace cdml
