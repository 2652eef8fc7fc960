#include "cli/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "cdml/error.hpp"

namespace cdml::report {

namespace {

std::string number_text(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

json decisions_json(const std::map<double, bool>& decisions) {
  json out = json::object();
  for (const auto& [alpha, reject] : decisions) out[number_text(alpha)] = reject;
  return out;
}

json rate_json(const RateEstimate& r) { return {{"value", r.value}, {"mc_se", r.mc_se}}; }

json optional_rate_json(const std::optional<RateEstimate>& r) {
  return r ? rate_json(*r) : not_applicable("degree below 1 or constant fit disabled");
}

}  // namespace

json coefficient_table(const DmlFit& fit, const InferenceState& state, double alpha) {
  const double z = normal_quantile(1.0 - alpha / 2.0);
  json rows = json::array();
  for (Eigen::Index i = 0; i < fit.theta.size(); ++i) {
    const double est = fit.theta[i];
    const double se = std::sqrt(std::max(0.0, state.var_theta(i, i)));
    const double t = se > 0.0 ? est / se : 0.0;
    rows.push_back({{"term", "theta_" + std::to_string(i)},
                    {"estimate", est},
                    {"se", se},
                    {"t", t},
                    {"p_value", se > 0.0 ? normal_two_sided_p(t) : 1.0},
                    {"ci_low", est - z * se},
                    {"ci_high", est + z * se}});
  }
  return rows;
}

json test_json(const TestResult& r) {
  json out = {{"applicable", true},
              {"method", std::string(to_string(r.method))},
              {"statistic", r.statistic},
              {"p_value", r.p_value},
              {"reject", decisions_json(r.decision_at)}};
  if (r.dof) out["dof"] = *r.dof;
  if (r.method == TestMethod::z) {
    out["estimate"] = r.estimate;
    out["se"] = r.se;
    out["independence_assumed"] = r.independence_assumed;
  }
  return out;
}

json not_applicable(const std::string& reason) { return {{"applicable", false}, {"reason", reason}}; }

json sup_test_json(const SupTestResult& r) {
  json out = {{"applicable", true},
              {"method", "bootstrap_sup"},
              {"kind", r.kind == SupTestKind::zero_sup ? "zero_sup" : "homogeneous_sup"},
              {"statistic", r.statistic},
              {"p_value", r.p_value},
              {"replications", r.replications}};
  if (r.kind == SupTestKind::homogeneous_sup) out["center"] = r.center;
  return out;
}

json mistakes_json(const MistakesEstimate& m, double alpha) {
  return {{"point", m.point},      {"signed_value", m.signed_value}, {"se", m.se},
          {"ci_low", m.ci_low},    {"ci_high", m.ci_high},           {"p_value", m.p_value},
          {"ci_level", 1.0 - alpha}, {"se_of", "f_hat(1)"}};
}

json curve_json(const BandResult& b) {
  return {{"grid", b.grid.points},
          {"f_hat", b.f_hat},
          {"se", b.se},
          {"pointwise_halfwidth", b.pointwise_halfwidth},
          {"uniform_halfwidth", b.uniform_halfwidth},
          {"critical_value", b.critical_value},
          {"pointwise_critical_value", b.pointwise_critical_value},
          {"alpha", b.alpha},
          {"replications", b.replications},
          {"seed", b.seed}};
}

json design_json(const DesignSummary& s) {
  return {{"clusters", s.clusters},
          {"rows", s.rows},
          {"treated", s.treated},
          {"control", s.control},
          {"treated_share", s.treated_share},
          {"small_cluster_warning", s.small_cluster_warning}};
}

json learner_json(const LearnerSpec& spec) {
  json out = {{"kind", std::string(to_string(spec.kind))}};
  switch (spec.kind) {
    case LearnerKind::ridge:
      out["lambda"] = spec.ridge_lambda ? json(*spec.ridge_lambda) : json("cv");
      break;
    case LearnerKind::boosted_trees:
      out["depth"] = spec.tree_depth;
      out["rounds"] = spec.tree_rounds;
      out["learning_rate"] = spec.learning_rate;
      out["min_leaf"] = spec.min_leaf;
      break;
    default:
      break;
  }
  return out;
}

json sim_config_json(const SimConfig& c) {
  return {{"clusters", c.clusters},
          {"n_min", c.n_min},
          {"n_max", c.n_max},
          {"treated_prob", c.treated_prob},
          {"truth", std::string(to_string(c.truth))},
          {"m", c.mistake_rate},
          {"custom_theta", c.custom_theta},
          {"g_kind", std::string(to_string(c.g_kind))},
          {"noise_sd", c.noise_sd},
          {"beta_w", c.beta_w},
          {"gamma_z", c.gamma_z},
          {"x_beta", {c.x_beta_a, c.x_beta_b}},
          {"seed", c.seed},
          {"clamped", false}};
}

json truth_json(const SimTruth& t, std::uint64_t seed) {
  return {{"true_f", t.true_f},
          {"true_mistakes", t.true_mistakes},
          {"realized_treated_share", t.realized_treated_share},
          {"seed", seed},
          {"note", "outcomes are not clamped to [0, 1]; ingest with --mode synthetic"}};
}

json mc_report_json(const McReport& r) {
  json bias = json::array();
  for (std::size_t i = 0; i < r.theta_bias.size(); ++i) {
    bias.push_back({{"term", "theta_" + std::to_string(i)},
                    {"true", r.true_f[i]},
                    {"bias", r.theta_bias[i].value},
                    {"mc_se", r.theta_bias[i].mc_se},
                    {"rmse", r.theta_rmse[i]}});
  }
  json repetitions = json::array();
  for (const RepOutcome& o : r.outcomes) {
    json entry = {{"rep", o.rep},
                  {"data_seed", o.data_seed},
                  {"fold_seed", o.fold_seed},
                  {"bootstrap_seed", o.boot_seed},
                  {"theta", o.theta},
                  {"f1_hat", o.f1_hat},
                  {"f1_se", o.f1_se},
                  {"mistakes", o.mistakes_point},
                  {"critical_value", o.critical_value},
                  {"wald_zero_p", o.wald_zero_p},
                  {"sup_zero_p", o.sup_zero_p},
                  {"sup_homogeneous_p", o.sup_homogeneous_p}};
    if (o.wald_homogeneous_p) entry["wald_homogeneous_p"] = *o.wald_homogeneous_p;
    if (o.ate_zero_p) entry["ate_zero_p"] = *o.ate_zero_p;
    repetitions.push_back(entry);
  }
  return {
      {"reps", r.reps},
      {"mc_seed", r.mc_seed},
      {"simulation", sim_config_json(r.sim)},
      {"estimation",
       {{"spec", r.est.spec.name()},
        {"degree", r.est.spec.degree},
        {"learner", learner_json(r.est.learner)},
        {"folds", r.est.folds},
        {"grid_points", r.est.grid.points.size()},
        {"bootstrap_replications", r.est.boot_reps},
        {"alpha", r.est.alpha},
        {"df_correction", r.est.df_correction}}},
      {"coefficients", bias},
      {"f1", {{"bias", r.f1_bias.value}, {"mc_se", r.f1_bias.mc_se}, {"rmse", r.f1_rmse}}},
      {"coverage",
       {{"pointwise_f1", rate_json(r.pointwise_coverage_f1)}, {"uniform_band", rate_json(r.uniform_coverage)}}},
      {"rejection_rates",
       {{"wald_zero", rate_json(r.reject_wald_zero)},
        {"wald_homogeneous", optional_rate_json(r.reject_wald_homogeneous)},
        {"sup_zero", rate_json(r.reject_sup_zero)},
        {"sup_homogeneous", rate_json(r.reject_sup_homogeneous)},
        {"ate_zero", optional_rate_json(r.reject_ate_zero)}}},
      {"mistakes",
       {{"mean", r.mistakes_mean.value},
        {"mc_se", r.mistakes_mean.mc_se},
        {"median", r.mistakes_median},
        {"true", r.true_mistakes}}},
      {"critical_value", {{"min", r.critical_value_min}, {"mean", r.critical_value_mean}}},
      {"repetitions", repetitions},
  };
}

void write_curve_csv(const BandResult& b, std::ostream& out) {
  out << "x,f_hat,se,pw_lo,pw_hi,uni_lo,uni_hi\n";
  for (std::size_t i = 0; i < b.grid.points.size(); ++i) {
    out << number_text(b.grid.points[i]) << ',' << number_text(b.f_hat[i]) << ',' << number_text(b.se[i]) << ','
        << number_text(b.f_hat[i] - b.pointwise_halfwidth[i]) << ','
        << number_text(b.f_hat[i] + b.pointwise_halfwidth[i]) << ','
        << number_text(b.f_hat[i] - b.uniform_halfwidth[i]) << ','
        << number_text(b.f_hat[i] + b.uniform_halfwidth[i]) << '\n';
  }
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  std::uint64_t h = 0xCBF29CE484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace cdml::report
