// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: cdml_acceptance <path-to-cdml-binary> <scratch-dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cdml/bootstrap.hpp"
#include "cdml/estimator.hpp"
#include "cdml/inference.hpp"
#include "cdml/parallel.hpp"
#include "cdml/rng.hpp"
#include "cdml/simgen.hpp"

namespace fs = std::filesystem;
using namespace cdml;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* pattern, auto... values) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, values...);
  return buf;
}

bool within(double v, double lo, double hi) { return v >= lo && v <= hi; }

// Least squares of v on columns x^k * u via Householder QR.
Eigen::VectorXd direct_solve(const Eigen::VectorXd& v, const Eigen::VectorXd& x, const Eigen::VectorXd& u, int q) {
  Eigen::MatrixXd d(v.size(), q + 1);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double power = 1.0;
    for (int k = 0; k <= q; ++k) {
      d(i, k) = power * u[i];
      power *= x[i];
    }
  }
  return d.householderQr().solve(v);
}

const unsigned kThreads = resolve_threads(0);

SimConfig paper_config(double m) {
  SimConfig cfg;
  cfg.clusters = 40;
  cfg.n_min = cfg.n_max = 100;
  cfg.mistake_rate = m;
  cfg.noise_sd = 0.05;
  cfg.g_kind = GKind::nonlinear;
  return cfg;
}

EstimationConfig paper_estimation() {
  EstimationConfig est;
  est.spec = PolySpec::cubic();
  est.learner = LearnerSpec::boosted();
  est.folds = 5;
  est.grid = GridSpec::uniform(1001);
  est.boot_reps = 1000;
  est.alpha = 0.05;
  est.constant_ate = true;
  return est;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int shell(const std::string& cmd) { return std::system(cmd.c_str()); }

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: %s <cdml-binary> <scratch-dir>\n", argv[0]);
    return 2;
  }
  const std::string tool = argv[1];
  const fs::path scratch = argv[2];
  fs::create_directories(scratch);

  report(1, "oracle equivalence (q in {0,1,3}, C=20)", [] {
    SimConfig cfg;
    cfg.clusters = 20;
    cfg.n_min = 30;
    cfg.n_max = 60;
    cfg.seed = 101;
    const SimResult sim = generate(cfg);
    double worst = 0.0;
    for (int q : {0, 1, 3}) {
      const DmlFit fit = fit_dml(sim.data, PolySpec{q}, sim.truth.oracle_learner(), 5, 7);
      const Eigen::VectorXd direct = direct_solve(fit.v_hat, sim.data.modifiers(), fit.u_hat, q);
      worst = std::max(worst, (fit.theta - direct).cwiseAbs().maxCoeff());
    }
    return Outcome{worst <= 1e-8, fmt("max |theta - direct| = %.3g (tol 1e-8)", worst)};
  });

  report(2, "HC0 collapse (n_c = 1)", [] {
    SimConfig cfg;
    cfg.clusters = 200;
    cfg.n_min = cfg.n_max = 1;
    cfg.seed = 202;
    const SimResult sim = generate(cfg);
    double worst = 0.0;
    for (int q : {0, 1, 3}) {
      const DmlFit fit = fit_dml(sim.data, PolySpec{q}, LearnerSpec::linear(), 5, 3);
      const InferenceState st = sandwich_variance(fit, build_scores(fit, sim.data));
      const Eigen::Index n = fit.v_hat.size();
      Eigen::MatrixXd d(n, q + 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (int k = 0; k <= q; ++k) d(i, k) = std::pow(fit.modifier[i], k) * fit.u_hat[i];
      }
      const Eigen::VectorXd e = fit.v_hat - d * direct_solve(fit.v_hat, fit.modifier, fit.u_hat, q);
      const Eigen::MatrixXd bread = (d.transpose() * d).inverse();
      const Eigen::MatrixXd meat = d.transpose() * e.array().square().matrix().asDiagonal() * d;
      const Eigen::MatrixXd hc0 = bread * meat * bread;
      worst = std::max(worst, (st.var_theta - hc0).cwiseAbs().maxCoeff());
    }
    return Outcome{worst <= 1e-10, fmt("max |Var - HC0| = %.3g (tol 1e-10)", worst)};
  });

  report(3, "recovery (50 reps, median mistakes in 0.05 +/- 0.015)", [] {
    const McReport r = monte_carlo(paper_config(0.05), paper_estimation(), 50, 3003, kThreads);
    return Outcome{within(r.mistakes_median, 0.035, 0.065),
                   fmt("median = %.4f, mean = %.4f (mc se %.4f)", r.mistakes_median, r.mistakes_mean.value,
                       r.mistakes_mean.mc_se)};
  });

  // Criteria 4, 5 and 7 share one 200-repetition study of the m = 0.05 design.
  McReport signal;
  bool signal_ok = false;
  std::string signal_error;
  try {
    signal = monte_carlo(paper_config(0.05), paper_estimation(), 200, 4004, kThreads);
    signal_ok = true;
  } catch (const std::exception& e) {
    signal_error = e.what();
  }

  report(4, "pointwise coverage of f(1) (200 reps, in [90%, 99%])", [&] {
    if (!signal_ok) return Outcome{false, signal_error};
    const RateEstimate c = signal.pointwise_coverage_f1;
    return Outcome{within(c.value, 0.90, 0.99), fmt("coverage = %.3f (mc se %.3f)", c.value, c.mc_se)};
  });

  report(5, "uniform band coverage (200 reps, M=1000, 1001 points, in [90%, 99%], q* >= 1.9)", [&] {
    if (!signal_ok) return Outcome{false, signal_error};
    const RateEstimate c = signal.uniform_coverage;
    const bool ok = within(c.value, 0.90, 0.99) && signal.critical_value_min >= 1.9;
    return Outcome{ok, fmt("coverage = %.3f (mc se %.3f), min q* = %.3f, mean q* = %.3f", c.value, c.mc_se,
                           signal.critical_value_min, signal.critical_value_mean)};
  });

  report(6, "test size under m=0 (500 reps; Wald zero in [3%, 8%], sup T_n in [2%, 9%])", [] {
    const McReport r = monte_carlo(paper_config(0.0), paper_estimation(), 500, 6006, kThreads);
    const RateEstimate w = r.reject_wald_zero;
    const RateEstimate s = r.reject_sup_zero;
    const bool ok = within(w.value, 0.03, 0.08) && within(s.value, 0.02, 0.09);
    return Outcome{ok, fmt("Wald zero = %.3f (mc se %.3f), sup T_n = %.3f (mc se %.3f)", w.value, w.mc_se, s.value,
                           s.mc_se)};
  });

  report(7, "power (200 reps; Wald homogeneous > 80%, constant-spec ATE < 20%)", [&] {
    if (!signal_ok) return Outcome{false, signal_error};
    const double h = signal.reject_wald_homogeneous->value;
    const double ate = signal.reject_ate_zero->value;
    return Outcome{h > 0.80 && ate < 0.20, fmt("homogeneous = %.3f, ATE = %.3f", h, ate)};
  });

  report(8, "mirror antisymmetry (two-candidate data, linear learner)", [] {
    SimConfig cfg;
    cfg.clusters = 30;
    cfg.n_min = 40;
    cfg.n_max = 80;
    cfg.seed = 808;
    const SimResult sim = generate(cfg);
    std::stringstream file;
    write_two_party_csv(to_two_party(sim.data), file);
    const auto [d, r] = split_by_party(ingest_two_party_csv(file, ValidationMode::synthetic));
    const DmlFit fd = fit_dml(d, PolySpec::cubic(), LearnerSpec::linear(), 5, 9);
    const DmlFit fr = fit_dml(r, PolySpec::cubic(), LearnerSpec::linear(), 5, 9);
    double worst = 0.0;
    for (double x : GridSpec::uniform(1001).points) {
      worst = std::max(worst, std::fabs(effect_at(fr, x) + effect_at(fd, 1.0 - x)));
    }
    return Outcome{worst <= 1e-6, fmt("max |f_r(x) + f_d(1-x)| = %.3g (tol 1e-6)", worst)};
  });

  report(9, "determinism across runs and thread counts (fit, mc)", [&] {
    const std::string data = (scratch / "determinism.csv").string();
    if (shell(tool + " simulate --seed 909 --emit-data " + data + " --out " + (scratch / "truth.json").string()) !=
        0) {
      return Outcome{false, "simulate failed"};
    }
    std::vector<std::string> outputs;
    const std::vector<std::string> threads = {"1", "4", "1", "3"};
    for (std::size_t i = 0; i < threads.size(); ++i) {
      const std::string out = (scratch / ("fit_" + std::to_string(i) + ".json")).string();
      const std::string cmd = tool + " fit --data " + data + " --mode synthetic --seed 17 --reps 2000 --threads " +
                              threads[i] + " --out " + out;
      if (shell(cmd) != 0) return Outcome{false, "fit failed"};
      outputs.push_back(slurp(out));
    }
    for (std::size_t i = 0; i < 2; ++i) {
      const std::string out = (scratch / ("mc_" + std::to_string(i) + ".json")).string();
      const std::string cmd = tool + " mc --C 20 --n-min 30 --n-max 50 --mc-reps 4 --reps 500 --seed 19 --threads " +
                              threads[i + 1] + " --out " + out;
      if (shell(cmd) != 0) return Outcome{false, "mc failed"};
      outputs.push_back(slurp(out));
    }
    const bool fit_same = outputs[0] == outputs[1] && outputs[1] == outputs[2] && outputs[2] == outputs[3];
    const bool mc_same = outputs[4] == outputs[5];
    return Outcome{fit_same && mc_same && !outputs[0].empty() && !outputs[4].empty(),
                   fmt("fit identical: %s (%zu bytes), mc identical: %s (%zu bytes)", fit_same ? "yes" : "no",
                       outputs[0].size(), mc_same ? "yes" : "no", outputs[4].size())};
  });

  report(10, "H_n oracle (20 five-point toys vs 1e6-point c-grid)", [] {
    CounterRng rng(1010, 0);
    double worst = 0.0;
    for (int toy = 0; toy < 20; ++toy) {
      std::vector<double> f(5);
      std::vector<double> se(5);
      for (int i = 0; i < 5; ++i) {
        f[i] = 0.01 * (rng.uniform() - 0.5);
        se[i] = 0.01 * (1.0 + rng.uniform());
      }
      const double h = homogeneous_statistic(f, se).value;
      const double lo = *std::min_element(f.begin(), f.end());
      const double hi = *std::max_element(f.begin(), f.end());
      double brute = std::numeric_limits<double>::infinity();
      constexpr int kPoints = 1'000'000;
      for (int k = 0; k < kPoints; ++k) {
        const double c = lo + (hi - lo) * k / (kPoints - 1);
        double dev = 0.0;
        for (int i = 0; i < 5; ++i) dev = std::max(dev, std::fabs(f[i] - c) / se[i]);
        brute = std::min(brute, dev);
      }
      worst = std::max(worst, std::fabs(h - brute));
    }
    return Outcome{worst <= 1e-6, fmt("max |H_n - brute force| = %.3g (tol 1e-6)", worst)};
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
