#include "cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "cdml/bootstrap.hpp"
#include "cdml/error.hpp"
#include "cdml/estimator.hpp"
#include "cdml/inference.hpp"
#include "cdml/nuisance.hpp"
#include "cdml/panel.hpp"
#include "cdml/rng.hpp"
#include "cdml/simgen.hpp"
#include "cli/report.hpp"

namespace cdml::cli {

using report::json;

namespace {

constexpr std::size_t kLowReplicationWarning = 100;
constexpr std::uint64_t kBootstrapStream = 0xB0075;

struct EstimationFlags {
  std::string spec = "cubic";
  std::string learner = "boosted";
  int folds = 5;
  std::size_t grid = 1001;
  std::size_t reps = 2000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool df_correction = false;
  std::optional<double> ridge_lambda;
  int tree_depth = 3;
  int tree_rounds = 200;
  double learning_rate = 0.1;
  int min_leaf = 5;
};

struct DataFlags {
  std::string data;
  std::string mode = "strict";
  std::string party;
  std::string out;
  std::string csv_curve;
  bool timestamp = false;
};

struct SimFlags {
  SimConfig cfg;
  std::string truth = "linear_mistakes";
  std::string g_kind = "nonlinear";
};

void add_estimation_flags(CLI::App& app, EstimationFlags& f) {
  app.add_option("--spec", f.spec, "constant | linear | cubic | q=N")->capture_default_str();
  app.add_option("--learner", f.learner, "mean | linear | ridge | boosted")->capture_default_str();
  app.add_option("--folds", f.folds, "cross-fitting folds K")->capture_default_str();
  app.add_option("--grid", f.grid, "evaluation grid points on [0, 1]")->capture_default_str();
  app.add_option("--reps", f.reps, "bootstrap replications M")->capture_default_str();
  app.add_option("--alpha", f.alpha, "significance level")->capture_default_str();
  app.add_option("--seed", f.seed, "random seed")->capture_default_str();
  app.add_option("--threads", f.threads, "worker threads (0 = all cores)")->capture_default_str();
  app.add_flag("--df-correction", f.df_correction, "scale the sandwich middle matrix by C/(C-1)");
  app.add_option("--ridge-lambda", f.ridge_lambda, "ridge penalty (default: inner cross-validation)");
  app.add_option("--tree-depth", f.tree_depth)->capture_default_str();
  app.add_option("--tree-rounds", f.tree_rounds)->capture_default_str();
  app.add_option("--learning-rate", f.learning_rate)->capture_default_str();
  app.add_option("--min-leaf", f.min_leaf)->capture_default_str();
}

void add_data_flags(CLI::App& app, DataFlags& f, bool curve) {
  app.add_option("--data", f.data, "panel CSV")->required();
  app.add_option("--mode", f.mode, "validation mode: strict | synthetic")->capture_default_str();
  app.add_option("--party", f.party, "read a two-party file and analyse party d or r");
  app.add_option("--out", f.out, "write the JSON report here instead of stdout");
  if (curve) app.add_option("--csv-curve", f.csv_curve, "write the effect curve as CSV");
  app.add_flag("--timestamp", f.timestamp, "record the wall-clock time in the provenance block");
}

void add_sim_flags(CLI::App& app, SimFlags& f) {
  SimConfig& c = f.cfg;
  app.add_option("--C,--clusters", c.clusters, "cluster count")->capture_default_str();
  app.add_option("--n-min", c.n_min, "minimum precincts per cluster")->capture_default_str();
  app.add_option("--n-max", c.n_max, "maximum precincts per cluster")->capture_default_str();
  app.add_option("--treated-prob", c.treated_prob)->capture_default_str();
  app.add_option("--truth", f.truth, "linear_mistakes | custom_poly")->capture_default_str();
  app.add_option("--m", c.mistake_rate, "true mistake rate m; f(x) = m(1 - 2x)")->capture_default_str();
  app.add_option("--theta", c.custom_theta, "custom_poly coefficients")->delimiter(',');
  app.add_option("--g-kind", f.g_kind, "linear | nonlinear")->capture_default_str();
  app.add_option("--noise-sd", c.noise_sd)->capture_default_str();
  app.add_option("--beta-w", c.beta_w, "w covariate effects")->delimiter(',');
  app.add_option("--gamma-z", c.gamma_z, "z covariate effects")->delimiter(',');
  app.add_option("--x-beta-a", c.x_beta_a)->capture_default_str();
  app.add_option("--x-beta-b", c.x_beta_b)->capture_default_str();
}

SimConfig resolve_sim(const SimFlags& f, std::uint64_t seed) {
  SimConfig c = f.cfg;
  c.truth = parse_truth_mode(f.truth);
  c.g_kind = parse_g_kind(f.g_kind);
  c.seed = seed;
  c.validate();
  return c;
}

LearnerSpec resolve_learner(const EstimationFlags& f) {
  LearnerSpec spec = LearnerSpec::of(parse_learner_kind(f.learner));
  spec.ridge_lambda = f.ridge_lambda;
  spec.tree_depth = f.tree_depth;
  spec.tree_rounds = f.tree_rounds;
  spec.learning_rate = f.learning_rate;
  spec.min_leaf = f.min_leaf;
  spec.validate();
  return spec;
}

void check_estimation(const EstimationFlags& f) {
  require(f.folds >= 2, ErrorKind::InvalidArgument, "--folds must be >= 2");
  require(f.grid >= 2, ErrorKind::InvalidArgument, "--grid must be >= 2");
  require(f.reps >= 1, ErrorKind::InvalidArgument, "--reps must be >= 1");
  require(f.alpha > 0.0 && f.alpha < 1.0, ErrorKind::InvalidArgument, "--alpha must lie in (0, 1)");
}

struct LoadedData {
  PanelDataset ds;
  std::string digest;
};

LoadedData load(const DataFlags& f) {
  const ValidationMode mode = parse_validation_mode(f.mode);
  LoadedData out;
  out.digest = report::file_digest(f.data);
  if (f.party.empty()) {
    out.ds = ingest_csv(std::filesystem::path(f.data), mode);
  } else {
    require(f.party == "d" || f.party == "r", ErrorKind::InvalidArgument, "--party must be d or r");
    auto [d, r] = split_by_party(ingest_two_party_csv(std::filesystem::path(f.data), mode));
    out.ds = f.party == "d" ? std::move(d) : std::move(r);
  }
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json provenance(const DataFlags& d, const LoadedData& data, const EstimationFlags& e, const PolySpec& spec,
                const LearnerSpec& learner, std::uint64_t boot_seed) {
  json p = {{"dataset", d.data},
            {"dataset_digest_fnv1a64", data.digest},
            {"validation_mode", std::string(to_string(data.ds.mode()))},
            {"party", d.party.empty() ? json(nullptr) : json(d.party)},
            {"spec", spec.name()},
            {"degree", spec.degree},
            {"learner", report::learner_json(learner)},
            {"folds", e.folds},
            {"seed", e.seed},
            {"bootstrap_seed", boot_seed},
            {"bootstrap_replications", e.reps},
            {"grid_points", e.grid},
            {"alpha", e.alpha},
            {"df_correction", e.df_correction},
            {"tool", "cdml 0.1.0"}};
  if (d.timestamp) p["timestamp"] = utc_timestamp();
  return p;
}

void emit(const json& doc, const std::string& path, std::ostream& out) {
  const std::string text = doc.dump(2) + "\n";
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorKind::IoError, "cannot write '" + path + "'");
  file << text;
}

void emit_curve(const BandResult& band, const std::string& path) {
  if (path.empty()) return;
  std::ofstream file(path, std::ios::binary);
  if (!file) fail(ErrorKind::IoError, "cannot write '" + path + "'");
  report::write_curve_csv(band, file);
}

// Shared front half of fit / test / band.
struct Analysis {
  LoadedData data;
  DesignSummary design;
  PolySpec spec;
  LearnerSpec learner;
  DmlFit fit;
  InferenceState state;
  std::uint64_t boot_seed = 0;
  json warnings = json::array();
};

Analysis analyse(const DataFlags& d, const EstimationFlags& e) {
  check_estimation(e);
  Analysis a;
  a.spec = PolySpec::parse(e.spec);
  a.learner = resolve_learner(e);
  a.data = load(d);
  a.design = validate_design(a.data.ds);
  if (a.design.small_cluster_warning) {
    a.warnings.push_back("only " + std::to_string(a.design.clusters) +
                         " clusters; cluster-robust inference may be unreliable");
  }
  a.fit = fit_dml(a.data.ds, a.spec, a.learner, e.folds, e.seed, e.threads);
  for (const auto& w : a.fit.warnings) a.warnings.push_back(w);
  a.state = sandwich_variance(a.fit, build_scores(a.fit, a.data.ds), SandwichOptions{e.df_correction});
  a.boot_seed = derive_seed(e.seed, kBootstrapStream);
  if (e.reps < kLowReplicationWarning) {
    a.warnings.push_back("only " + std::to_string(e.reps) + " bootstrap replications; p-value resolution is 1/" +
                         std::to_string(e.reps));
  }
  return a;
}

json wald_block(const Analysis& a) {
  json tests = json::object();
  tests["zero"] = report::test_json(wald_test(a.state, a.fit.theta, WaldPreset::zero));
  tests["homogeneous"] = a.spec.degree >= 1
                             ? report::test_json(wald_test(a.state, a.fit.theta, WaldPreset::homogeneous))
                             : report::not_applicable("needs degree >= 1");
  tests["linearity"] = a.spec.degree >= 2
                           ? report::test_json(wald_test(a.state, a.fit.theta, WaldPreset::linearity))
                           : report::not_applicable("needs degree >= 2");
  return tests;
}

json fold_block(const DmlFit& fit) {
  json folds = json::array();
  for (const auto& f : fit.fold_diagnostics) {
    json entry = {{"fold", f.fold},
                  {"train_rows", f.train_rows},
                  {"test_rows", f.test_rows},
                  {"train_mse", f.train_mse},
                  {"test_mse", f.test_mse}};
    if (fit.learner == LearnerKind::ridge) entry["ridge_lambda"] = f.ridge_lambda;
    folds.push_back(entry);
  }
  return folds;
}

BootstrapOptions boot_options(const Analysis& a, const EstimationFlags& e) {
  return BootstrapOptions{e.reps, a.boot_seed, e.threads};
}

int cmd_fit(const DataFlags& d, const EstimationFlags& e, std::ostream& out) {
  const Analysis a = analyse(d, e);
  const GridSpec grid = GridSpec::uniform(e.grid);
  require(e.reps >= 2, ErrorKind::InvalidArgument, "uniform bands need --reps >= 2");
  const BandResult band = uniform_band(a.fit, a.state, grid, e.alpha, boot_options(a, e));

  json doc = {{"command", "fit"},
              {"coefficients", report::coefficient_table(a.fit, a.state, e.alpha)},
              {"tests", wald_block(a)},
              {"mistakes", report::mistakes_json(mistakes(a.fit, a.state, e.alpha), e.alpha)},
              {"effect_at_half", report::test_json(linear_combination_test(
                                     a.state, a.fit.theta, polynomial_basis(0.5, a.spec.degree)))},
              {"curve", report::curve_json(band)},
              {"design", report::design_json(a.design)},
              {"folds", fold_block(a.fit)},
              {"treated_mean", a.fit.treated_mean},
              {"provenance", provenance(d, a.data, e, a.spec, a.learner, a.boot_seed)},
              {"warnings", a.warnings}};
  emit(doc, d.out, out);
  emit_curve(band, d.csv_curve);
  return kExitOk;
}

int cmd_test(const DataFlags& d, const EstimationFlags& e, const std::string& method, std::ostream& out) {
  require(method == "wald" || method == "sup", ErrorKind::InvalidArgument, "--method must be wald or sup");
  const Analysis a = analyse(d, e);
  json doc = {{"command", "test"},
              {"method", method},
              {"design", report::design_json(a.design)},
              {"provenance", provenance(d, a.data, e, a.spec, a.learner, a.boot_seed)}};
  json warnings = a.warnings;
  if (method == "wald") {
    doc["tests"] = wald_block(a);
    // Bootstrap warnings do not apply to Wald tests.
    warnings = json::array();
    for (const auto& w : a.warnings) {
      if (w.get<std::string>().find("bootstrap") == std::string::npos) warnings.push_back(w);
    }
  } else {
    const GridSpec grid = GridSpec::uniform(e.grid);
    const BootstrapOptions opts = boot_options(a, e);
    json tests = json::object();
    tests["zero_sup"] = report::sup_test_json(sup_test_zero(a.fit, a.state, grid, opts));
    tests["homogeneous_sup"] = report::sup_test_json(sup_test_homogeneous(a.fit, a.state, grid, opts));
    doc["tests"] = tests;
  }
  doc["warnings"] = warnings;
  emit(doc, d.out, out);
  return kExitOk;
}

int cmd_band(const DataFlags& d, const EstimationFlags& e, std::ostream& out) {
  const Analysis a = analyse(d, e);
  require(e.reps >= 2, ErrorKind::InvalidArgument, "uniform bands need --reps >= 2");
  const BandResult band = uniform_band(a.fit, a.state, GridSpec::uniform(e.grid), e.alpha, boot_options(a, e));
  json doc = {{"command", "band"},
              {"curve", report::curve_json(band)},
              {"provenance", provenance(d, a.data, e, a.spec, a.learner, a.boot_seed)},
              {"warnings", a.warnings}};
  emit(doc, d.out, out);
  emit_curve(band, d.csv_curve);
  return kExitOk;
}

int cmd_simulate(const SimFlags& s, std::uint64_t seed, const std::string& emit_data, const std::string& out_path,
                 bool two_party, std::ostream& out) {
  const SimConfig cfg = resolve_sim(s, seed);
  const SimResult sim = generate(cfg);
  if (!emit_data.empty()) {
    std::ofstream file(emit_data, std::ios::binary);
    if (!file) fail(ErrorKind::IoError, "cannot write '" + emit_data + "'");
    if (two_party) {
      write_two_party_csv(to_two_party(sim.data), file);
    } else {
      write_csv(sim.data, file);
    }
  }
  json doc = report::truth_json(sim.truth, seed);
  doc["command"] = "simulate";
  doc["config"] = report::sim_config_json(cfg);
  doc["clusters"] = sim.data.cluster_count();
  doc["rows"] = sim.data.row_count();
  emit(doc, out_path, out);
  return kExitOk;
}

int cmd_mc(const SimFlags& s, const EstimationFlags& e, std::size_t mc_reps, const std::string& emit_data,
           const std::string& out_path, std::ostream& out) {
  check_estimation(e);
  require(mc_reps >= 1, ErrorKind::InvalidArgument, "--mc-reps must be >= 1");
  require(e.reps >= 2, ErrorKind::InvalidArgument, "uniform bands need --reps >= 2");
  const SimConfig cfg = resolve_sim(s, e.seed);
  EstimationConfig est;
  est.spec = PolySpec::parse(e.spec);
  est.learner = resolve_learner(e);
  est.folds = e.folds;
  est.grid = GridSpec::uniform(e.grid);
  est.boot_reps = e.reps;
  est.alpha = e.alpha;
  est.df_correction = e.df_correction;

  if (!emit_data.empty()) {
    SimConfig first = cfg;
    first.seed = derive_seed(e.seed, 0, 0);
    write_csv(generate(first).data, std::filesystem::path(emit_data));
  }

  const McReport rep = monte_carlo(cfg, est, mc_reps, e.seed, e.threads);
  json doc = report::mc_report_json(rep);
  doc["command"] = "mc";
  doc["note"] = "synthetic outcomes are not clamped to [0, 1]";
  emit(doc, out_path, out);
  return kExitOk;
}

void write_error(std::ostream& err, std::string_view kind, const std::string& message, int code,
                 std::optional<std::size_t> rep = std::nullopt) {
  json e = {{"error", std::string(kind)}, {"message", message}, {"exit_code", code}};
  if (rep) e["rep"] = *rep;
  err << e.dump() << "\n";
}

const std::set<std::string>& boolean_flags() {
  static const std::set<std::string> flags = {"df-correction", "timestamp", "two-party"};
  return flags;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      require(i + 1 < args.size(), ErrorKind::InvalidArgument, "--config needs a path");
      path = args[++i];
    } else if (args[i].starts_with("--config=")) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path) return rest;

  std::ifstream in(*path);
  if (!in) fail(ErrorKind::IoError, "cannot open config file '" + *path + "'");
  auto present = [&](const std::string& flag) {
    return std::any_of(rest.begin(), rest.end(),
                       [&](const std::string& a) { return a == flag || a.starts_with(flag + "="); });
  };

  std::vector<std::string> injected;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#' || line.front() == ';' || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::InvalidArgument, "config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    while (key.starts_with("-")) key.erase(0, 1);
    std::replace(key.begin(), key.end(), '_', '-');
    const std::string flag = "--" + key;
    if (present(flag)) continue;
    if (boolean_flags().count(key) != 0) {
      if (value == "true" || value == "1" || value == "yes") injected.push_back(flag);
      continue;
    }
    injected.push_back(flag);
    injected.push_back(value);
  }

  // Options belong to the subcommand, so they go after its name.
  std::vector<std::string> merged;
  if (!rest.empty()) merged.push_back(rest.front());
  merged.insert(merged.end(), injected.begin(), injected.end());
  if (rest.size() > 1) merged.insert(merged.end(), rest.begin() + 1, rest.end());
  return merged;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clustered double machine learning for heterogeneous treatment effects"};
  app.require_subcommand(1);
  // Repeated flags and config-file values resolve to the last occurrence.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  EstimationFlags est;
  DataFlags data;
  SimFlags sim;
  std::string method = "wald";
  std::string emit_data;
  std::string sim_out;
  bool two_party = false;
  std::size_t mc_reps = 200;

  auto* fit = app.add_subcommand("fit", "fit the effect curve, run Wald tests and build uniform bands");
  add_data_flags(*fit, data, true);
  add_estimation_flags(*fit, est);

  auto* test = app.add_subcommand("test", "run the Wald or bootstrap sup-statistic test battery");
  add_data_flags(*test, data, false);
  add_estimation_flags(*test, est);
  test->add_option("--method", method, "wald | sup")->capture_default_str();

  auto* band = app.add_subcommand("band", "pointwise and uniform confidence bands");
  add_data_flags(*band, data, true);
  add_estimation_flags(*band, est);

  auto* simulate = app.add_subcommand("simulate", "generate a synthetic panel with known truth");
  add_sim_flags(*simulate, sim);
  simulate->add_option("--seed", est.seed)->capture_default_str();
  simulate->add_option("--emit-data", emit_data, "panel CSV output path");
  simulate->add_option("--out", sim_out, "truth JSON output path (default stdout)");
  simulate->add_flag("--two-party", two_party, "emit an exact two-candidate file (y_d, y_r, x_d, x_r)");

  auto* mc = app.add_subcommand("mc", "Monte Carlo coverage, size and power study");
  add_sim_flags(*mc, sim);
  add_estimation_flags(*mc, est);
  mc->add_option("--mc-reps", mc_reps, "Monte Carlo repetitions")->capture_default_str();
  mc->add_option("--emit-data", emit_data, "write the first repetition's panel as CSV");
  mc->add_option("--out", sim_out, "report output path (default stdout)");

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    write_error(err, "UsageError", e.what(), kExitInput);
    return kExitInput;
  } catch (const Error& e) {
    write_error(err, to_string(e.kind()), e.what(), kExitInput);
    return kExitInput;
  }

  try {
    if (fit->parsed()) return cmd_fit(data, est, out);
    if (test->parsed()) return cmd_test(data, est, method, out);
    if (band->parsed()) return cmd_band(data, est, out);
    if (simulate->parsed()) return cmd_simulate(sim, est.seed, emit_data, sim_out, two_party, out);
    if (mc->parsed()) return cmd_mc(sim, est, mc_reps, emit_data, sim_out, out);
  } catch (const RepetitionError& e) {
    write_error(err, to_string(e.kind()), e.what(), kExitNumeric, e.rep());
    return kExitNumeric;
  } catch (const Error& e) {
    const int code = e.error_class() == ErrorClass::numeric ? kExitNumeric : kExitInput;
    write_error(err, to_string(e.kind()), e.what(), code);
    return code;
  } catch (const std::exception& e) {
    write_error(err, "InternalError", e.what(), 1);
    return 1;
  }
  return kExitInput;
}

}  // namespace cdml::cli
