#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdml/bootstrap.hpp"
#include "cdml/rng.hpp"
#include "cdml/simgen.hpp"
#include "toy.hpp"

using namespace cdml;
using cdml::test::error_kind;

namespace {

struct Fitted {
  SimResult sim;
  DmlFit fit;
  InferenceState state;
};

Fitted fitted(std::uint64_t seed, int degree, double m = 0.05, std::size_t clusters = 30) {
  SimConfig cfg;
  cfg.clusters = clusters;
  cfg.n_min = 10;
  cfg.n_max = 20;
  cfg.mistake_rate = m;
  cfg.seed = seed;
  Fitted f{generate(cfg), {}, {}};
  f.fit = fit_dml(f.sim.data, PolySpec{degree}, LearnerSpec::linear(), 5, seed);
  f.state = sandwich_variance(f.fit, build_scores(f.fit, f.sim.data));
  return f;
}

// Exhaustive minimisation of max_i |level_i - c| / scale_i over a uniform c-grid.
double brute_force_h(const std::vector<double>& levels, const std::vector<double>& scales, double lo, double hi,
                     int points) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    const double c = lo + (hi - lo) * k / (points - 1);
    double worst = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i) worst = std::max(worst, std::fabs(levels[i] - c) / scales[i]);
    best = std::min(best, worst);
  }
  return best;
}

}  // namespace

TEST_CASE("grids") {
  const GridSpec g = GridSpec::uniform(5);
  CHECK(g.points == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
  CHECK(error_kind([] { GridSpec::uniform(1); }) == ErrorKind::InvalidArgument);
  CHECK(error_kind([] { GridSpec{{0.0, 0.6, 0.4, 1.0}}.validate(); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("two-cluster multiplier draw matches direct matrix arithmetic") {
  InferenceState st;
  st.rows = 6;
  st.clusters = 2;
  st.J.resize(2, 2);
  st.J << 0.5, 0.1, 0.1, 0.3;
  st.J_inverse = st.J.inverse();
  st.cluster_score_sums.resize(2, 2);
  st.cluster_score_sums << 0.4, -0.2, -0.3, 0.5;
  st.var_theta = st.J_inverse * st.cluster_score_sums.transpose() * st.cluster_score_sums * st.J_inverse / 36.0;
  const Eigen::Vector2d theta(0.1, -0.2);
  const GridSpec grid = GridSpec::uniform(11);
  const MultiplierLoadings l = multiplier_loadings(st, theta, grid);
  const Eigen::Vector2d zeta(1.0, -1.0);

  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    const double x = grid.points[i];
    const Eigen::Vector2d r(1.0, x);
    const double sigma = std::sqrt(r.dot(st.var_theta * r));
    const double direct = r.dot(st.J_inverse * (st.cluster_score_sums.transpose() * zeta)) / (6.0 * sigma);
    CHECK(l.a.row(static_cast<Eigen::Index>(i)).dot(zeta) == doctest::Approx(direct).epsilon(1e-13));
    CHECK(l.f_hat[static_cast<Eigen::Index>(i)] == doctest::Approx(0.1 - 0.2 * x));
  }
}

TEST_CASE("draws are the loadings applied to the seeded multipliers") {
  const Fitted f = fitted(2, 3);
  const GridSpec grid = GridSpec::uniform(21);
  const BootstrapOptions opts{150, 77, 1};
  const Eigen::MatrixXd draws = multiplier_draws(f.state, f.fit.theta, grid, opts);
  const MultiplierLoadings l = multiplier_loadings(f.state, f.fit.theta, grid);
  for (std::size_t m : {0, 63, 64, 149}) {
    const Eigen::VectorXd expected = l.a * multiplier_weights(77, m, f.state.clusters);
    CHECK((draws.row(static_cast<Eigen::Index>(m)).transpose() - expected).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("constant spec draws are flat in x") {
  const Fitted f = fitted(3, 0);
  const Eigen::MatrixXd draws = multiplier_draws(f.state, f.fit.theta, GridSpec::uniform(17), {40, 5, 1});
  for (Eigen::Index m = 0; m < draws.rows(); ++m) {
    CHECK(draws.row(m).maxCoeff() - draws.row(m).minCoeff() < 1e-14);
  }
}

TEST_CASE("zero scores are rejected") {
  InferenceState st;
  st.rows = 4;
  st.clusters = 2;
  st.J = Eigen::MatrixXd::Identity(1, 1);
  st.J_inverse = st.J;
  st.cluster_score_sums = Eigen::MatrixXd::Zero(2, 1);
  st.var_theta = Eigen::MatrixXd::Zero(1, 1);
  CHECK(error_kind([&] { multiplier_loadings(st, Eigen::VectorXd::Zero(1), GridSpec::uniform(3)); }) ==
        ErrorKind::ZeroSE);
}

TEST_CASE("critical value order statistic") {
  CHECK(uniform_critical_value(std::vector<double>{4, 2, 1, 3}, 0.25) == 3.0);
  CHECK(uniform_critical_value(std::vector<double>{0, 0, 0, 0, 0}, 0.05) == 0.0);
  std::vector<double> hundred(100);
  for (int i = 0; i < 100; ++i) hundred[i] = 100 - i;
  CHECK(uniform_critical_value(hundred, 0.05) == 95.0);
  CHECK(uniform_critical_value(hundred, 0.1) == 90.0);
  CHECK(error_kind([] { uniform_critical_value(std::vector<double>{1.0}, 0.05); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("critical value decreases as alpha grows") {
  const Fitted f = fitted(4, 3);
  const Eigen::MatrixXd draws = multiplier_draws(f.state, f.fit.theta, GridSpec::uniform(51), {500, 9, 1});
  double previous = std::numeric_limits<double>::infinity();
  for (double alpha : {0.001, 0.01, 0.05, 0.1, 0.2, 0.5, 0.9}) {
    const double q = uniform_critical_value(draws, alpha);
    CHECK(q <= previous);
    previous = q;
  }
}

TEST_CASE("constant spec critical value matches an independent simulation") {
  const Fitted f = fitted(5, 0);
  const GridSpec grid = GridSpec::uniform(5);
  const std::size_t m_total = 20000;
  const std::uint64_t seed = 31;
  const BandResult band = uniform_band(f.fit, f.state, grid, 0.05, {m_total, seed, 1});

  const MultiplierLoadings l = multiplier_loadings(f.state, f.fit.theta, grid);
  std::vector<double> sups(m_total);
  for (std::size_t m = 0; m < m_total; ++m) {
    CounterRng rng(seed, m);
    double t = 0.0;
    for (Eigen::Index c = 0; c < l.a.cols(); ++c) t += l.a(0, c) * rng.normal();
    sups[m] = std::fabs(t);
  }
  std::sort(sups.begin(), sups.end());
  const double brute = sups[static_cast<std::size_t>(std::ceil(0.95 * m_total)) - 1];
  CHECK(band.critical_value == doctest::Approx(brute).epsilon(1e-12));
  CHECK(std::abs(band.critical_value - 1.96) < 0.05);
  // Unit-norm loadings make t_m a standard normal draw.
  CHECK(l.a.row(0).norm() == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    CHECK(band.uniform_halfwidth[i] == doctest::Approx(band.critical_value * band.se[i]));
  }
}

TEST_CASE("doubling the replications barely moves the critical value") {
  const Fitted f = fitted(6, 3);
  const GridSpec grid = GridSpec::uniform(101);
  const double q2 = uniform_band(f.fit, f.state, grid, 0.05, {5000, 3, 1}).critical_value;
  const double q4 = uniform_band(f.fit, f.state, grid, 0.05, {10000, 3, 1}).critical_value;
  CHECK(std::abs(q2 - q4) < 0.05);
  CHECK(q2 >= 1.9);
}

TEST_CASE("bootstrap output does not depend on the thread count") {
  const Fitted f = fitted(7, 3);
  const GridSpec grid = GridSpec::uniform(101);
  for (std::size_t reps : {1, 63, 64, 65, 300}) {
    const Eigen::MatrixXd one = multiplier_draws(f.state, f.fit.theta, grid, {reps, 1, 1});
    const Eigen::MatrixXd three = multiplier_draws(f.state, f.fit.theta, grid, {reps, 1, 3});
    CHECK(one == three);
  }
  const SupInference a = bootstrap_inference(f.fit, f.state, grid, 0.05, {257, 4, 1});
  const SupInference b = bootstrap_inference(f.fit, f.state, grid, 0.05, {257, 4, 4});
  CHECK(a.band.critical_value == b.band.critical_value);
  CHECK(a.zero.p_value == b.zero.p_value);
  CHECK(a.homogeneous.p_value == b.homogeneous.p_value);
}

TEST_CASE("zero fit gives a zero sup statistic") {
  Fitted f = fitted(8, 3);
  f.fit.theta.setZero();
  const SupTestResult r = sup_test_zero(f.fit, f.state, GridSpec::uniform(51), {200, 1, 1});
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("extreme fit gives a zero p-value") {
  Fitted f = fitted(9, 3);
  f.fit.theta *= 1e6;
  f.fit.theta[0] += 1e3;
  const SupTestResult r = sup_test_zero(f.fit, f.state, GridSpec::uniform(51), {200, 1, 1});
  CHECK(r.p_value == 0.0);
}

TEST_CASE("sup statistic and uniform band agree on excluding zero") {
  for (std::uint64_t seed = 10; seed < 22; ++seed) {
    const Fitted f = fitted(seed, 3, seed % 2 == 0 ? 0.0 : 0.02);
    const GridSpec grid = GridSpec::uniform(101);
    const SupInference inf = bootstrap_inference(f.fit, f.state, grid, 0.05, {400, seed, 1});
    bool excluded = false;
    for (std::size_t i = 0; i < grid.points.size(); ++i) {
      excluded = excluded || std::fabs(inf.band.f_hat[i]) > inf.band.uniform_halfwidth[i];
    }
    CHECK(excluded == (inf.zero.statistic > inf.band.critical_value));
    if (excluded) {
      CHECK(inf.zero.p_value <= 0.05);
    } else {
      CHECK(inf.zero.p_value >= 0.05);
    }
  }
}

TEST_CASE("homogeneity statistic of a constant fit is exactly zero") {
  const Fitted f = fitted(12, 0);
  const SupTestResult r = sup_test_homogeneous(f.fit, f.state, GridSpec::uniform(101), {300, 2, 1});
  CHECK(r.statistic == 0.0);
  CHECK(r.center == doctest::Approx(f.fit.theta[0]).epsilon(1e-12));
  CHECK(r.p_value == 1.0);
}

TEST_CASE("homogeneity statistic of a line is half the slope over sigma") {
  const GridSpec grid = GridSpec::uniform(1001);
  std::vector<double> f(grid.points.size());
  const std::vector<double> se(grid.points.size(), 0.02);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = 0.03 - 0.08 * grid.points[i];
  const SupDeviation h = homogeneous_statistic(f, se);
  CHECK(h.value == doctest::Approx(0.08 / (2 * 0.02)).epsilon(1e-9));
  CHECK(h.center == doctest::Approx(0.03 - 0.04).epsilon(1e-9));
}

TEST_CASE("five-point homogeneity toys match exhaustive search") {
  CounterRng rng(99, 0);
  for (int toy = 0; toy < 20; ++toy) {
    std::vector<double> levels(5);
    std::vector<double> scales(5);
    // Level spread of at most one scale unit keeps the 1e6-point grid accurate to 5e-7.
    for (int i = 0; i < 5; ++i) {
      levels[i] = 0.01 * (rng.uniform() - 0.5);
      scales[i] = 0.01 * (1.0 + rng.uniform());
    }
    const SupDeviation h = homogeneous_statistic(levels, scales);
    const double lo = *std::min_element(levels.begin(), levels.end());
    const double hi = *std::max_element(levels.begin(), levels.end());
    const double brute = brute_force_h(levels, scales, lo, hi, 1'000'001);
    CHECK(std::abs(h.value - brute) < 1e-6);
    CHECK(h.value <= brute + 1e-12);
  }
}

TEST_CASE("sup deviation minimum is never beaten by random probes") {
  CounterRng rng(100, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(30);
    std::vector<double> levels(n);
    std::vector<double> scales(n);
    for (std::size_t i = 0; i < n; ++i) {
      levels[i] = rng.normal();
      scales[i] = 0.1 + rng.uniform();
    }
    const SupDeviation h = homogeneous_statistic(levels, scales);
    for (int probe = 0; probe < 200; ++probe) {
      const double c = rng.normal() * 2.0;
      double worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::fabs(levels[i] - c) / scales[i]);
      CHECK(h.value <= worst + 1e-12);
    }
  }
}

TEST_CASE("a single replication still yields tests") {
  const Fitted f = fitted(13, 3);
  const SupInference inf = bootstrap_inference(f.fit, f.state, GridSpec::uniform(51), 0.05, {1, 3, 1});
  CHECK((inf.zero.p_value == 0.0 || inf.zero.p_value == 1.0));
  CHECK((inf.homogeneous.p_value == 0.0 || inf.homogeneous.p_value == 1.0));
}
