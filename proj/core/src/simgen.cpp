#include "cdml/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cdml/error.hpp"
#include "cdml/inference.hpp"
#include "cdml/parallel.hpp"
#include "cdml/rng.hpp"

namespace cdml {

std::string_view to_string(TruthMode mode) noexcept {
  return mode == TruthMode::linear_mistakes ? "linear_mistakes" : "custom_poly";
}

std::string_view to_string(GKind kind) noexcept { return kind == GKind::linear ? "linear" : "nonlinear"; }

TruthMode parse_truth_mode(std::string_view text) {
  if (text == "linear_mistakes") return TruthMode::linear_mistakes;
  if (text == "custom_poly" || text == "custom") return TruthMode::custom_poly;
  fail(ErrorKind::InvalidArgument, "unknown truth mode '" + std::string(text) + "'");
}

GKind parse_g_kind(std::string_view text) {
  if (text == "linear") return GKind::linear;
  if (text == "nonlinear") return GKind::nonlinear;
  fail(ErrorKind::InvalidArgument, "unknown g kind '" + std::string(text) + "'");
}

void SimConfig::validate() const {
  require(clusters >= 2, ErrorKind::InvalidArgument, "need at least 2 clusters");
  require(n_min >= 1 && n_max >= n_min, ErrorKind::InvalidArgument, "precinct range must satisfy 1 <= min <= max");
  require(treated_prob > 0.0 && treated_prob < 1.0, ErrorKind::InvalidArgument, "treated_prob must lie in (0, 1)");
  require(noise_sd >= 0.0 && std::isfinite(noise_sd), ErrorKind::InvalidArgument, "noise_sd must be >= 0");
  require(x_beta_a > 0.0 && x_beta_b > 0.0, ErrorKind::InvalidArgument, "Beta shape parameters must be > 0");
  if (truth == TruthMode::linear_mistakes) {
    require(mistake_rate >= 0.0 && mistake_rate < 1.0, ErrorKind::InvalidArgument, "mistake rate must lie in [0, 1)");
  } else {
    require(!custom_theta.empty(), ErrorKind::InvalidArgument, "custom_poly mode needs coefficients");
  }
}

double SimTruth::effect(double x) const noexcept {
  return effect_at(std::span<const double>(true_f), x);
}

double SimTruth::g(double x, std::span<const double> w, std::span<const double> z) const noexcept {
  double value = 0.2 + 0.6 * x;
  for (std::size_t j = 0; j < w.size() && j < beta_w.size(); ++j) value += beta_w[j] * w[j];
  for (std::size_t j = 0; j < z.size() && j < gamma_z.size(); ++j) value += gamma_z[j] * z[j];
  if (g_kind == GKind::nonlinear) {
    value += 0.1 * std::sin(2.0 * std::numbers::pi * x);
    if (!w.empty()) value += 0.05 * x * w[0];
  }
  return value;
}

double SimTruth::conditional_mean(const PanelDataset& ds, std::size_t row) const {
  const PrecinctRow& r = ds.rows()[row];
  const Contest& c = ds.contests()[r.cluster];
  std::vector<double> z;
  z.reserve(c.covariates.size());
  for (const auto& v : c.covariates) {
    const double* d = std::get_if<double>(&v);
    require(d != nullptr, ErrorKind::InvalidArgument, "oracle learner needs numeric z covariates");
    z.push_back(*d);
  }
  return g(r.modifier, r.covariates, z) + realized_treated_share * effect(r.modifier);
}

LearnerSpec SimTruth::oracle_learner() const {
  return LearnerSpec::from_oracle(
      [truth = *this](const PanelDataset& ds, std::size_t row) { return truth.conditional_mean(ds, row); });
}

SimResult generate(const SimConfig& cfg) {
  cfg.validate();

  SimTruth truth;
  truth.true_f = cfg.truth == TruthMode::linear_mistakes
                     ? std::vector<double>{cfg.mistake_rate, -2.0 * cfg.mistake_rate}
                     : cfg.custom_theta;
  truth.true_mistakes = std::fabs(effect_at(std::span<const double>(truth.true_f), 1.0));
  truth.g_kind = cfg.g_kind;
  truth.beta_w = cfg.beta_w;
  truth.gamma_z = cfg.gamma_z;

  // Treatment: one redraw from a fresh stream when the design is degenerate.
  std::vector<int> treatment(cfg.clusters);
  std::size_t treated = 0;
  for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
    CounterRng rng(cfg.seed, 1 + attempt);
    treated = 0;
    for (auto& t : treatment) {
      t = rng.bernoulli(cfg.treated_prob) ? 1 : 0;
      treated += static_cast<std::size_t>(t);
    }
    if (treated > 0 && treated < cfg.clusters) break;
  }
  if (treated == 0 || treated == cfg.clusters) {
    fail(ErrorKind::DegenerateTreatment, "treatment draw is degenerate after one redraw");
  }
  truth.realized_treated_share = static_cast<double>(treated) / static_cast<double>(cfg.clusters);

  std::vector<std::string> w_names;
  std::vector<std::string> z_names;
  for (std::size_t j = 0; j < cfg.beta_w.size(); ++j) w_names.push_back(std::to_string(j + 1));
  for (std::size_t j = 0; j < cfg.gamma_z.size(); ++j) z_names.push_back(std::to_string(j + 1));

  std::vector<Contest> contests;
  std::vector<PrecinctRow> rows;
  contests.reserve(cfg.clusters);
  for (std::size_t c = 0; c < cfg.clusters; ++c) {
    CounterRng rng(cfg.seed, 1000 + c);
    const std::size_t n_c = cfg.n_min + static_cast<std::size_t>(rng.uniform_index(cfg.n_max - cfg.n_min + 1));
    std::vector<double> z(cfg.gamma_z.size());
    for (double& v : z) v = rng.normal();

    Contest contest;
    contest.id = "c" + std::to_string(c + 1);
    contest.treatment = treatment[c];
    contest.covariates.assign(z.begin(), z.end());
    contests.push_back(std::move(contest));

    std::vector<double> w(cfg.beta_w.size());
    for (std::size_t p = 0; p < n_c; ++p) {
      const double x = rng.beta(cfg.x_beta_a, cfg.x_beta_b);
      for (double& v : w) v = rng.normal();
      const double noise = rng.normal() * cfg.noise_sd;
      const double y = truth.g(x, w, z) + treatment[c] * truth.effect(x) + noise;
      rows.push_back(PrecinctRow{c, "p" + std::to_string(p + 1), y, x, w});
    }
  }

  SimResult out{PanelDataset::build(std::move(w_names), std::move(z_names), std::move(contests), std::move(rows),
                                    ValidationMode::synthetic),
                truth};
  return out;
}

TwoPartyPanel to_two_party(const PanelDataset& ds) {
  TwoPartyPanel panel;
  panel.w_names = ds.w_names();
  panel.z_names = ds.z_names();
  panel.contests = ds.contests();
  panel.mode = ds.mode();
  panel.rows.reserve(ds.row_count());
  for (const PrecinctRow& r : ds.rows()) {
    panel.rows.push_back(
        TwoPartyRow{r.cluster, r.precinct_id, r.outcome, 1.0 - r.outcome, r.modifier, 1.0 - r.modifier, r.covariates});
  }
  return panel;
}

RepOutcome run_replication(const SimConfig& cfg, const EstimationConfig& est, std::uint64_t mc_seed, std::size_t rep) {
  RepOutcome out;
  out.rep = rep;
  out.data_seed = derive_seed(mc_seed, rep, 0);
  out.fold_seed = derive_seed(mc_seed, rep, 1);
  out.boot_seed = derive_seed(mc_seed, rep, 2);

  SimConfig rep_cfg = cfg;
  rep_cfg.seed = out.data_seed;
  const SimResult sim = generate(rep_cfg);
  const PanelDataset& ds = sim.data;

  const LearnerSpec learner = est.learner.kind == LearnerKind::oracle ? sim.truth.oracle_learner() : est.learner;
  FoldPlan plan = make_folds(ds, est.folds, out.fold_seed);
  const OutcomeResiduals residuals = crossfit_outcome(ds, learner, plan, 1);
  const SandwichOptions sandwich{est.df_correction};

  const DmlFit fit = fit_final_stage(ds, est.spec, residuals);
  const InferenceState state = sandwich_variance(fit, build_scores(fit, ds), sandwich);
  out.theta.assign(fit.theta.data(), fit.theta.data() + fit.theta.size());

  const MistakesEstimate mk = mistakes(fit, state, est.alpha);
  out.f1_hat = mk.signed_value;
  out.f1_se = mk.se;
  const double z = normal_quantile(1.0 - est.alpha / 2.0);
  const double f1_true = sim.truth.effect(1.0);
  out.f1_covered = std::fabs(out.f1_hat - f1_true) <= z * out.f1_se;
  out.mistakes_point = mk.point;

  out.wald_zero_p = wald_test(state, fit.theta, WaldPreset::zero).p_value;
  if (est.spec.degree >= 1) out.wald_homogeneous_p = wald_test(state, fit.theta, WaldPreset::homogeneous).p_value;

  const SupInference sup = bootstrap_inference(fit, state, est.grid, est.alpha,
                                               BootstrapOptions{est.boot_reps, out.boot_seed, 1});
  out.critical_value = sup.band.critical_value;
  out.sup_zero_p = sup.zero.p_value;
  out.sup_homogeneous_p = sup.homogeneous.p_value;
  out.band_covered = true;
  for (std::size_t i = 0; i < est.grid.points.size(); ++i) {
    const double truth_value = sim.truth.effect(est.grid.points[i]);
    if (std::fabs(sup.band.f_hat[i] - truth_value) > sup.band.uniform_halfwidth[i]) {
      out.band_covered = false;
      break;
    }
  }

  if (est.constant_ate) {
    const DmlFit ate = fit_final_stage(ds, PolySpec::constant(), residuals);
    const InferenceState ate_state = sandwich_variance(ate, build_scores(ate, ds), sandwich);
    out.ate_zero_p = wald_test(ate_state, ate.theta, WaldPreset::zero).p_value;
  }
  return out;
}

namespace {

RateEstimate rate(const std::vector<RepOutcome>& outcomes, auto&& predicate) {
  std::size_t hits = 0;
  for (const auto& o : outcomes) hits += predicate(o) ? 1 : 0;
  const double n = static_cast<double>(outcomes.size());
  const double p = static_cast<double>(hits) / n;
  return {p, std::sqrt(p * (1.0 - p) / n)};
}

RateEstimate mean_with_se(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return {mean, sd / std::sqrt(n)};
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double rmse(const std::vector<double>& values, double truth) {
  double ss = 0.0;
  for (double v : values) ss += (v - truth) * (v - truth);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

}  // namespace

McReport monte_carlo(const SimConfig& cfg, const EstimationConfig& est, std::size_t reps, std::uint64_t mc_seed,
                     unsigned threads) {
  require(reps >= 1, ErrorKind::InvalidArgument, "Monte Carlo repetitions must be >= 1");
  cfg.validate();
  if (est.learner.kind != LearnerKind::oracle) est.learner.validate();
  est.grid.validate();

  McReport report;
  report.sim = cfg;
  report.est = est;
  report.reps = reps;
  report.mc_seed = mc_seed;
  report.outcomes.resize(reps);

  parallel_for(reps, threads, [&](std::size_t rep) {
    try {
      report.outcomes[rep] = run_replication(cfg, est, mc_seed, rep);
    } catch (const Error& e) {
      throw RepetitionError(rep, e);
    }
  });

  const auto& outs = report.outcomes;
  const SimTruth truth = [&] {
    SimTruth t;
    t.true_f = cfg.truth == TruthMode::linear_mistakes
                   ? std::vector<double>{cfg.mistake_rate, -2.0 * cfg.mistake_rate}
                   : cfg.custom_theta;
    return t;
  }();
  const std::size_t k = static_cast<std::size_t>(est.spec.coefficient_count());
  report.true_f = truth.true_f;
  report.true_f.resize(k, 0.0);
  report.true_mistakes = std::fabs(truth.effect(1.0));

  for (std::size_t i = 0; i < k; ++i) {
    std::vector<double> values;
    for (const auto& o : outs) values.push_back(o.theta[i]);
    RateEstimate bias = mean_with_se(values);
    bias.value -= report.true_f[i];
    report.theta_bias.push_back(bias);
    report.theta_rmse.push_back(rmse(values, report.true_f[i]));
  }

  std::vector<double> f1;
  std::vector<double> mk;
  std::vector<double> crit;
  for (const auto& o : outs) {
    f1.push_back(o.f1_hat);
    mk.push_back(o.mistakes_point);
    crit.push_back(o.critical_value);
  }
  const double f1_true = truth.effect(1.0);
  report.f1_bias = mean_with_se(f1);
  report.f1_bias.value -= f1_true;
  report.f1_rmse = rmse(f1, f1_true);
  report.mistakes_mean = mean_with_se(mk);
  report.mistakes_median = median(mk);
  report.critical_value_min = *std::min_element(crit.begin(), crit.end());
  report.critical_value_mean = mean_with_se(crit).value;

  const double alpha = est.alpha;
  report.pointwise_coverage_f1 = rate(outs, [](const RepOutcome& o) { return o.f1_covered; });
  report.uniform_coverage = rate(outs, [](const RepOutcome& o) { return o.band_covered; });
  report.reject_wald_zero = rate(outs, [&](const RepOutcome& o) { return o.wald_zero_p < alpha; });
  if (est.spec.degree >= 1) {
    report.reject_wald_homogeneous =
        rate(outs, [&](const RepOutcome& o) { return o.wald_homogeneous_p.value_or(1.0) < alpha; });
  }
  report.reject_sup_zero = rate(outs, [&](const RepOutcome& o) { return o.sup_zero_p < alpha; });
  report.reject_sup_homogeneous = rate(outs, [&](const RepOutcome& o) { return o.sup_homogeneous_p < alpha; });
  if (est.constant_ate) {
    report.reject_ate_zero = rate(outs, [&](const RepOutcome& o) { return o.ate_zero_p.value_or(1.0) < alpha; });
  }
  return report;
}

}  // namespace cdml
