#include "cdml/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cdml/error.hpp"
#include "cdml/parallel.hpp"
#include "cdml/rng.hpp"

namespace cdml {

namespace {

// Replications are processed in fixed-width blocks so the floating-point work
// for each replication is identical for any worker count.
constexpr std::size_t kBlockWidth = 64;
constexpr double kCenterTolerance = 1e-8;

double sup_deviation_at(std::span<const double> levels, std::span<const double> scales, double c) {
  double worst = 0.0;
  for (std::size_t i = 0; i < levels.size(); ++i) worst = std::max(worst, std::fabs(levels[i] - c) / scales[i]);
  return worst;
}

std::size_t order_statistic_index(std::size_t m, double alpha) {
  // Guard against (1 - alpha) * M landing a rounding error above an integer.
  const double target = (1.0 - alpha) * static_cast<double>(m);
  auto k = static_cast<std::size_t>(std::ceil(target - 1e-9 * std::max(1.0, target)));
  return std::clamp<std::size_t>(k, 1, m);
}

void check_options(const BootstrapOptions& options) {
  require(options.replications >= 1, ErrorKind::InvalidArgument, "bootstrap replications must be >= 1");
}

}  // namespace

GridSpec GridSpec::uniform(std::size_t n) {
  require(n >= 2, ErrorKind::InvalidArgument, "grid needs at least 2 points");
  GridSpec g;
  g.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.points[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

void GridSpec::validate() const {
  require(points.size() >= 2, ErrorKind::InvalidArgument, "grid needs at least 2 points");
  require(points.front() == 0.0 && points.back() == 1.0, ErrorKind::InvalidArgument,
          "grid must start at 0 and end at 1");
  for (std::size_t i = 1; i < points.size(); ++i) {
    require(points[i] > points[i - 1], ErrorKind::InvalidArgument, "grid must be strictly increasing");
  }
}

MultiplierLoadings multiplier_loadings(const InferenceState& state, const Eigen::VectorXd& theta,
                                       const GridSpec& grid) {
  grid.validate();
  const int q = state.degree();
  require(theta.size() == q + 1, ErrorKind::SpecMismatch, "coefficient vector does not match the inference state");
  const auto g = static_cast<Eigen::Index>(grid.points.size());
  const double n = static_cast<double>(state.rows);

  // B = Psi J^-1 is C x (q+1); a(x) = B r(x) / (N sigma(x)).
  const Eigen::MatrixXd psi_jinv = state.cluster_score_sums * state.J_inverse;
  MultiplierLoadings out;
  out.a.resize(g, psi_jinv.rows());
  out.se.resize(g);
  out.f_hat.resize(g);
  for (Eigen::Index i = 0; i < g; ++i) {
    const double x = grid.points[static_cast<std::size_t>(i)];
    const Eigen::VectorXd r = polynomial_basis(x, q);
    const double se = pointwise_se(state, x);
    if (!(se > 0.0)) {
      fail(ErrorKind::ZeroSE, "pointwise standard error is zero at x = " + std::to_string(x));
    }
    out.se[i] = se;
    out.f_hat[i] = r.dot(theta);
    out.a.row(i) = (psi_jinv * r).transpose() / (n * se);
  }
  return out;
}

Eigen::VectorXd multiplier_weights(std::uint64_t seed, std::size_t replication, std::size_t clusters) {
  CounterRng rng(seed, replication);
  Eigen::VectorXd zeta(static_cast<Eigen::Index>(clusters));
  for (Eigen::Index c = 0; c < zeta.size(); ++c) zeta[c] = rng.normal();
  return zeta;
}

namespace {

// Calls visit(m, column) for every replication, block by block.
template <class Visit>
void for_each_replication(const MultiplierLoadings& loadings, const BootstrapOptions& options, Visit&& visit) {
  const std::size_t m_total = options.replications;
  const auto clusters = static_cast<std::size_t>(loadings.a.cols());
  const std::size_t blocks = (m_total + kBlockWidth - 1) / kBlockWidth;
  parallel_for(blocks, options.threads, [&](std::size_t b) {
    const std::size_t first = b * kBlockWidth;
    const std::size_t width = std::min(kBlockWidth, m_total - first);
    Eigen::MatrixXd zeta(static_cast<Eigen::Index>(clusters), static_cast<Eigen::Index>(kBlockWidth));
    zeta.setZero();
    for (std::size_t j = 0; j < width; ++j) {
      zeta.col(static_cast<Eigen::Index>(j)) = multiplier_weights(options.seed, first + j, clusters);
    }
    // Always multiply a full-width block: unused columns are zero.
    const Eigen::MatrixXd t = loadings.a * zeta;
    for (std::size_t j = 0; j < width; ++j) visit(first + j, t.col(static_cast<Eigen::Index>(j)));
  });
}

}  // namespace

Eigen::MatrixXd multiplier_draws(const InferenceState& state, const Eigen::VectorXd& theta, const GridSpec& grid,
                                 const BootstrapOptions& options) {
  check_options(options);
  const MultiplierLoadings loadings = multiplier_loadings(state, theta, grid);
  Eigen::MatrixXd draws(static_cast<Eigen::Index>(options.replications), loadings.a.rows());
  for_each_replication(loadings, options, [&](std::size_t m, const auto& column) {
    draws.row(static_cast<Eigen::Index>(m)) = column.transpose();
  });
  return draws;
}

double uniform_critical_value(std::span<const double> sups, double alpha) {
  require(sups.size() >= 2, ErrorKind::InvalidArgument, "critical value needs at least 2 replications");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");
  std::vector<double> sorted(sups.begin(), sups.end());
  const std::size_t k = order_statistic_index(sorted.size(), alpha);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
  return sorted[k - 1];
}

double uniform_critical_value(const Eigen::MatrixXd& draws, double alpha) {
  std::vector<double> sups(static_cast<std::size_t>(draws.rows()));
  for (Eigen::Index m = 0; m < draws.rows(); ++m) {
    sups[static_cast<std::size_t>(m)] = draws.row(m).cwiseAbs().maxCoeff();
  }
  return uniform_critical_value(sups, alpha);
}

SupDeviation minimize_sup_deviation(std::span<const double> levels, std::span<const double> scales, double lo,
                                    double hi) {
  require(levels.size() == scales.size() && !levels.empty(), ErrorKind::InvalidArgument,
          "levels and scales must be nonempty and of equal length");
  require(lo <= hi, ErrorKind::InvalidArgument, "empty search bracket");
  for (double s : scales) require(s > 0.0, ErrorKind::ZeroSE, "scale must be positive");

  for (int iter = 0; iter < 400 && hi - lo > kCenterTolerance; ++iter) {
    const double third = (hi - lo) / 3.0;
    const double m1 = lo + third;
    const double m2 = hi - third;
    if (sup_deviation_at(levels, scales, m1) <= sup_deviation_at(levels, scales, m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  SupDeviation best{0.5 * (lo + hi), 0.0};
  best.value = sup_deviation_at(levels, scales, best.center);

  // Polish: the minimum sits where the largest-above and largest-below
  // pieces active at the ternary centre cross.
  std::size_t above = 0;
  std::size_t below = 0;
  double above_dev = -std::numeric_limits<double>::infinity();
  double below_dev = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double d = (levels[i] - best.center) / scales[i];
    if (d > above_dev) above_dev = d, above = i;
    if (-d > below_dev) below_dev = -d, below = i;
  }
  const double crossing =
      levels[above] + (levels[below] - levels[above]) * scales[above] / (scales[above] + scales[below]);
  const double crossing_value = sup_deviation_at(levels, scales, crossing);
  if (crossing_value < best.value) best = {crossing, crossing_value};
  return best;
}

SupDeviation homogeneous_statistic(std::span<const double> f_hat, std::span<const double> se) {
  require(f_hat.size() == se.size() && !f_hat.empty(), ErrorKind::InvalidArgument, "mismatched grid values");
  const double max_se = *std::max_element(se.begin(), se.end());
  const auto [lo_it, hi_it] = std::minmax_element(f_hat.begin(), f_hat.end());
  return minimize_sup_deviation(f_hat, se, *lo_it - 3.0 * max_se, *hi_it + 3.0 * max_se);
}

BootstrapSummary run_multiplier_bootstrap(const MultiplierLoadings& loadings, const BootstrapOptions& options,
                                          bool with_homogeneous) {
  check_options(options);
  const auto g = static_cast<std::size_t>(loadings.a.rows());
  const std::span<const double> se(loadings.se.data(), g);
  const double max_se = loadings.se.maxCoeff();

  BootstrapSummary out;
  out.sup_abs.resize(options.replications);
  if (with_homogeneous) out.homogeneous.resize(options.replications);
  for_each_replication(loadings, options, [&](std::size_t m, const auto& column) {
    out.sup_abs[m] = column.cwiseAbs().maxCoeff();
    if (!with_homogeneous) return;
    // Recentre in the units of f: delta plays the role of c.
    std::vector<double> levels(g);
    for (std::size_t i = 0; i < g; ++i) levels[i] = column[static_cast<Eigen::Index>(i)] * se[i];
    const auto [lo_it, hi_it] = std::minmax_element(levels.begin(), levels.end());
    out.homogeneous[m] = minimize_sup_deviation(levels, se, *lo_it - 3.0 * max_se, *hi_it + 3.0 * max_se).value;
  });
  return out;
}

namespace {

BandResult make_band(const MultiplierLoadings& loadings, const GridSpec& grid, double alpha, double critical,
                     const BootstrapOptions& options) {
  BandResult band;
  band.grid = grid;
  band.alpha = alpha;
  band.critical_value = critical;
  band.pointwise_critical_value = normal_quantile(1.0 - alpha / 2.0);
  band.replications = options.replications;
  band.seed = options.seed;
  const auto g = static_cast<std::size_t>(loadings.se.size());
  band.f_hat.resize(g);
  band.se.resize(g);
  band.pointwise_halfwidth.resize(g);
  band.uniform_halfwidth.resize(g);
  for (std::size_t i = 0; i < g; ++i) {
    const double se = loadings.se[static_cast<Eigen::Index>(i)];
    band.f_hat[i] = loadings.f_hat[static_cast<Eigen::Index>(i)];
    band.se[i] = se;
    band.pointwise_halfwidth[i] = band.pointwise_critical_value * se;
    band.uniform_halfwidth[i] = critical * se;
  }
  return band;
}

double exceedance_share(const std::vector<double>& draws, double statistic) {
  std::size_t count = 0;
  for (double d : draws) count += d >= statistic ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(draws.size());
}

SupTestResult zero_result(const MultiplierLoadings& loadings, const BootstrapSummary& summary) {
  SupTestResult res;
  res.kind = SupTestKind::zero_sup;
  res.replications = summary.sup_abs.size();
  res.statistic = (loadings.f_hat.array() / loadings.se.array()).abs().maxCoeff();
  res.p_value = exceedance_share(summary.sup_abs, res.statistic);
  return res;
}

SupTestResult homogeneous_result(const MultiplierLoadings& loadings, const BootstrapSummary& summary) {
  SupTestResult res;
  res.kind = SupTestKind::homogeneous_sup;
  res.replications = summary.homogeneous.size();
  const SupDeviation h = homogeneous_statistic(
      std::span<const double>(loadings.f_hat.data(), static_cast<std::size_t>(loadings.f_hat.size())),
      std::span<const double>(loadings.se.data(), static_cast<std::size_t>(loadings.se.size())));
  res.statistic = h.value;
  res.center = h.center;
  res.p_value = exceedance_share(summary.homogeneous, res.statistic);
  return res;
}

}  // namespace

BandResult uniform_band(const DmlFit& fit, const InferenceState& state, const GridSpec& grid, double alpha,
                        const BootstrapOptions& options) {
  const MultiplierLoadings loadings = multiplier_loadings(state, fit.theta, grid);
  const BootstrapSummary summary = run_multiplier_bootstrap(loadings, options, false);
  return make_band(loadings, grid, alpha, uniform_critical_value(summary.sup_abs, alpha), options);
}

SupTestResult sup_test_zero(const DmlFit& fit, const InferenceState& state, const GridSpec& grid,
                            const BootstrapOptions& options) {
  const MultiplierLoadings loadings = multiplier_loadings(state, fit.theta, grid);
  return zero_result(loadings, run_multiplier_bootstrap(loadings, options, false));
}

SupTestResult sup_test_homogeneous(const DmlFit& fit, const InferenceState& state, const GridSpec& grid,
                                   const BootstrapOptions& options) {
  const MultiplierLoadings loadings = multiplier_loadings(state, fit.theta, grid);
  return homogeneous_result(loadings, run_multiplier_bootstrap(loadings, options, true));
}

SupInference bootstrap_inference(const DmlFit& fit, const InferenceState& state, const GridSpec& grid, double alpha,
                                 const BootstrapOptions& options) {
  const MultiplierLoadings loadings = multiplier_loadings(state, fit.theta, grid);
  const BootstrapSummary summary = run_multiplier_bootstrap(loadings, options, true);
  SupInference out;
  const double critical = options.replications >= 2 ? uniform_critical_value(summary.sup_abs, alpha)
                                                    : summary.sup_abs.front();
  out.band = make_band(loadings, grid, alpha, critical, options);
  out.zero = zero_result(loadings, summary);
  out.homogeneous = homogeneous_result(loadings, summary);
  return out;
}

}  // namespace cdml
