#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cdml/estimator.hpp"
#include "cdml/inference.hpp"

namespace cdml {

struct GridSpec {
  std::vector<double> points;

  // n equally spaced points on [0, 1], endpoints included; n >= 2.
  static GridSpec uniform(std::size_t n = 1001);
  // Strictly increasing, starting at 0 and ending at 1.
  void validate() const;
};

struct BootstrapOptions {
  std::size_t replications = 2000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// The multiplier process is t_m(x) = a(x)^T zeta_m with zeta_m ~ N(0, I_C) and
// a(x) = Psi J^-1 r(x) / (N sigma_hat(x)).
struct MultiplierLoadings {
  Eigen::MatrixXd a;      // |grid| x C
  Eigen::VectorXd se;     // sigma_hat(f_hat(x)) on the grid
  Eigen::VectorXd f_hat;  // f_hat(x) on the grid
};

// ZeroSE when sigma_hat vanishes anywhere on the grid.
MultiplierLoadings multiplier_loadings(const InferenceState& state, const Eigen::VectorXd& theta,
                                       const GridSpec& grid);

// Multiplier weights of replication m: C standard normals from substream (seed, m).
Eigen::VectorXd multiplier_weights(std::uint64_t seed, std::size_t replication, std::size_t clusters);

// Full M x |grid| matrix of t_m(x).
Eigen::MatrixXd multiplier_draws(const InferenceState& state, const Eigen::VectorXd& theta, const GridSpec& grid,
                                 const BootstrapOptions& options);

// Order statistic ceil((1 - alpha) M) (1-based) of the per-replication sups.
double uniform_critical_value(std::span<const double> sups, double alpha);
double uniform_critical_value(const Eigen::MatrixXd& draws, double alpha);

struct BandResult {
  GridSpec grid;
  std::vector<double> f_hat;
  std::vector<double> se;
  std::vector<double> pointwise_halfwidth;
  std::vector<double> uniform_halfwidth;
  double critical_value = 0.0;
  double pointwise_critical_value = 0.0;
  double alpha = 0.05;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
};

BandResult uniform_band(const DmlFit& fit, const InferenceState& state, const GridSpec& grid, double alpha,
                        const BootstrapOptions& options);

enum class SupTestKind { zero_sup, homogeneous_sup };

struct SupTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t replications = 0;
  SupTestKind kind = SupTestKind::zero_sup;
  double center = 0.0;  // minimising c (homogeneous only)
};

// T_n = sup_x |f_hat / sigma_hat|; p = share of replications with sup|t_m| >= T_n.
SupTestResult sup_test_zero(const DmlFit& fit, const InferenceState& state, const GridSpec& grid,
                            const BootstrapOptions& options);

// H_n = inf_c sup_x |(f_hat - c) / sigma_hat|, bootstrapped with the recentred
// process inf_delta sup_x |t_m(x) - delta / sigma_hat(x)|.
SupTestResult sup_test_homogeneous(const DmlFit& fit, const InferenceState& state, const GridSpec& grid,
                                   const BootstrapOptions& options);

struct SupDeviation {
  double center = 0.0;
  double value = 0.0;
};

// Minimises the convex phi(c) = max_x |levels(x) - c| / scales(x) over
// [lo, hi] by ternary search to absolute tolerance 1e-8 in c, then snaps to
// the crossing of the two active pieces when that is lower.
SupDeviation minimize_sup_deviation(std::span<const double> levels, std::span<const double> scales, double lo,
                                    double hi);

// H statistic for f_hat and sigma_hat values on a grid.
SupDeviation homogeneous_statistic(std::span<const double> f_hat, std::span<const double> se);

// Per-replication summaries from one pass over the multiplier process.
struct BootstrapSummary {
  std::vector<double> sup_abs;      // sup_x |t_m(x)|
  std::vector<double> homogeneous;  // inf_delta sup_x |t_m(x) - delta / sigma_hat(x)|; empty unless requested
};

BootstrapSummary run_multiplier_bootstrap(const MultiplierLoadings& loadings, const BootstrapOptions& options,
                                          bool with_homogeneous);

// Everything the band and both sup tests need from one bootstrap pass.
struct SupInference {
  BandResult band;
  SupTestResult zero;
  SupTestResult homogeneous;
};

SupInference bootstrap_inference(const DmlFit& fit, const InferenceState& state, const GridSpec& grid, double alpha,
                                 const BootstrapOptions& options);

}  // namespace cdml
