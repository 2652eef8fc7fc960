#include "cdml/nuisance.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cdml/error.hpp"
#include "cdml/parallel.hpp"
#include "cdml/rng.hpp"
#include "cdml/trees.hpp"

namespace cdml {

std::string_view to_string(LearnerKind kind) noexcept {
  switch (kind) {
    case LearnerKind::mean: return "mean";
    case LearnerKind::linear: return "linear";
    case LearnerKind::ridge: return "ridge";
    case LearnerKind::boosted_trees: return "boosted";
    case LearnerKind::oracle: return "oracle";
  }
  return "unknown";
}

LearnerKind parse_learner_kind(std::string_view text) {
  if (text == "mean") return LearnerKind::mean;
  if (text == "linear") return LearnerKind::linear;
  if (text == "ridge") return LearnerKind::ridge;
  if (text == "boosted" || text == "boosted_trees") return LearnerKind::boosted_trees;
  fail(ErrorKind::InvalidArgument, "unknown learner '" + std::string(text) + "'");
}

void LearnerSpec::validate() const {
  if (ridge_lambda) require(*ridge_lambda >= 0.0 && std::isfinite(*ridge_lambda), ErrorKind::InvalidArgument, "ridge lambda must be >= 0");
  require(tree_depth >= 1, ErrorKind::InvalidArgument, "tree depth must be >= 1");
  require(tree_rounds >= 1, ErrorKind::InvalidArgument, "boosting rounds must be >= 1");
  require(learning_rate > 0.0 && learning_rate <= 1.0, ErrorKind::InvalidArgument,
          "learning rate must lie in (0, 1]");
  require(min_leaf >= 1, ErrorKind::InvalidArgument, "min_leaf must be >= 1");
  require(kind != LearnerKind::oracle || static_cast<bool>(oracle), ErrorKind::InvalidArgument,
          "oracle learner requires a truth function");
}

std::vector<std::size_t> FoldPlan::clusters_in(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < assignment.size(); ++c) {
    if (assignment[c] == fold) out.push_back(c);
  }
  return out;
}

FoldPlan make_folds(const PanelDataset& ds, int folds, std::uint64_t seed) {
  const std::size_t clusters = ds.cluster_count();
  require(folds >= 2, ErrorKind::InvalidArgument, "fold count must be >= 2");
  require(static_cast<std::size_t>(folds) <= clusters, ErrorKind::TooFewClusters,
          std::to_string(folds) + " folds requested but only " + std::to_string(clusters) + " clusters");

  std::vector<std::size_t> order(clusters);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed, 0xF01D);
  for (std::size_t i = clusters; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(order[i - 1], order[j]);
  }

  FoldPlan plan;
  plan.folds = folds;
  plan.assignment.assign(clusters, 0);
  for (std::size_t k = 0; k < clusters; ++k) plan.assignment[order[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  return plan;
}

namespace {

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

Eigen::VectorXd select_rows(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

double mse(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == 0 ? 0.0 : (a - b).squaredNorm() / static_cast<double>(a.size());
}

// Inner cluster-level CV for the ridge penalty. Training clusters are dealt
// round-robin in cluster order, so no randomness is involved.
double select_ridge_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const std::vector<std::size_t>& row_cluster) {
  constexpr int kInnerFolds = 5;
  std::vector<std::size_t> distinct;
  for (std::size_t c : row_cluster) {
    if (distinct.empty() || distinct.back() != c) distinct.push_back(c);
  }
  const int folds = std::min<int>(kInnerFolds, static_cast<int>(distinct.size()));
  if (folds < 2) return kRidgeGrid[0];

  std::vector<int> fold_of_row(row_cluster.size());
  {
    std::size_t k = 0;
    std::size_t prev = row_cluster.front();
    for (std::size_t i = 0; i < row_cluster.size(); ++i) {
      if (row_cluster[i] != prev) {
        ++k;
        prev = row_cluster[i];
      }
      fold_of_row[i] = static_cast<int>(k % static_cast<std::size_t>(folds));
    }
  }

  double best_lambda = kRidgeGrid[0];
  double best_error = std::numeric_limits<double>::infinity();
  for (double lambda : kRidgeGrid) {
    double sse = 0.0;
    for (int k = 0; k < folds; ++k) {
      std::vector<Eigen::Index> train;
      std::vector<Eigen::Index> test;
      for (std::size_t i = 0; i < fold_of_row.size(); ++i) {
        (fold_of_row[i] == k ? test : train).push_back(static_cast<Eigen::Index>(i));
      }
      const LinearModel m = fit_ridge(select_rows(x, train), select_rows(y, train), lambda);
      sse += (m.predict(select_rows(x, test)) - select_rows(y, test)).squaredNorm();
    }
    if (sse < best_error) {
      best_error = sse;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

}  // namespace

LinearModel fit_linear(const Eigen::MatrixXd& features, const Eigen::VectorXd& target) {
  const Eigen::RowVectorXd means = features.colwise().mean();
  const double y_mean = target.mean();
  const Eigen::MatrixXd centered = features.rowwise() - means;
  LinearModel m;
  if (features.cols() == 0) {
    m.intercept = y_mean;
    m.coefficients.resize(0);
    return m;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(centered);
  qr.setThreshold(1e-10);
  if (qr.rank() < features.cols()) {
    fail(ErrorKind::SingularDesign, "linear learner: feature matrix is rank deficient (rank " +
                                        std::to_string(qr.rank()) + " of " + std::to_string(features.cols()) + ")");
  }
  m.coefficients = qr.solve((target.array() - y_mean).matrix());
  m.intercept = y_mean - means.dot(m.coefficients);
  return m;
}

LinearModel fit_ridge(const Eigen::MatrixXd& features, const Eigen::VectorXd& target, double lambda) {
  require(lambda >= 0.0, ErrorKind::InvalidArgument, "ridge lambda must be >= 0");
  const Eigen::Index p = features.cols();
  const Eigen::RowVectorXd means = features.colwise().mean();
  const double y_mean = target.mean();
  LinearModel m;
  if (p == 0) {
    m.intercept = y_mean;
    m.coefficients.resize(0);
    return m;
  }
  Eigen::MatrixXd z = features.rowwise() - means;
  Eigen::VectorXd scale = (z.colwise().squaredNorm() / static_cast<double>(z.rows())).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (scale[j] <= 0.0) {
      if (lambda == 0.0) fail(ErrorKind::SingularDesign, "ridge learner: constant feature with lambda = 0");
      scale[j] = 1.0;
    }
  }
  z = z.array().rowwise() / scale.transpose().array();

  Eigen::MatrixXd gram = z.transpose() * z;
  gram.diagonal().array() += lambda * static_cast<double>(z.rows());
  const Eigen::VectorXd rhs = z.transpose() * (target.array() - y_mean).matrix();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
  const double dmin = ldlt.vectorD().minCoeff();
  if (ldlt.info() != Eigen::Success || !(dmin > 1e-12 * dmax)) {
    fail(ErrorKind::SingularDesign, "ridge learner: normal equations are singular");
  }
  const Eigen::VectorXd beta_std = ldlt.solve(rhs);
  m.coefficients = beta_std.array() / scale.array();
  m.intercept = y_mean - means.dot(m.coefficients);
  return m;
}

OutcomeResiduals crossfit_outcome(const PanelDataset& ds, const LearnerSpec& spec,
                                  const FoldPlan& plan, unsigned threads) {
  spec.validate();
  require(plan.assignment.size() == ds.cluster_count() && plan.folds >= 2, ErrorKind::InvalidArgument,
          "fold plan does not match the dataset");
  for (int k = 0; k < plan.folds; ++k) {
    require(!plan.clusters_in(k).empty(), ErrorKind::InvalidArgument, "fold " + std::to_string(k) + " is empty");
  }

  const auto n = static_cast<Eigen::Index>(ds.row_count());
  const Eigen::VectorXd y = ds.outcomes();
  const FeatureMatrix fm = (spec.kind == LearnerKind::oracle) ? FeatureMatrix{} : design_features(ds);

  OutcomeResiduals out;
  out.prediction.setZero(n);
  out.folds.resize(static_cast<std::size_t>(plan.folds));

  parallel_for(static_cast<std::size_t>(plan.folds), threads, [&](std::size_t fold_index) {
    const int k = static_cast<int>(fold_index);
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
    std::vector<std::size_t> train_cluster;
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t c = ds.rows()[static_cast<std::size_t>(i)].cluster;
      if (plan.assignment[c] == k) {
        test.push_back(i);
      } else {
        train.push_back(i);
        train_cluster.push_back(c);
      }
    }

    FoldDiagnostics diag;
    diag.fold = k;
    diag.train_rows = train.size();
    diag.test_rows = test.size();

    Eigen::VectorXd train_pred;
    Eigen::VectorXd test_pred;
    const Eigen::VectorXd y_train = select_rows(y, train);
    switch (spec.kind) {
      case LearnerKind::mean: {
        const double mu = y_train.mean();
        train_pred = Eigen::VectorXd::Constant(y_train.size(), mu);
        test_pred = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(test.size()), mu);
        break;
      }
      case LearnerKind::linear:
      case LearnerKind::ridge: {
        const Eigen::MatrixXd x_train = select_rows(fm.values, train);
        LinearModel m;
        if (spec.kind == LearnerKind::linear) {
          m = fit_linear(x_train, y_train);
        } else {
          const double lambda = spec.ridge_lambda ? *spec.ridge_lambda
                                                  : select_ridge_lambda(x_train, y_train, train_cluster);
          diag.ridge_lambda = lambda;
          m = fit_ridge(x_train, y_train, lambda);
        }
        train_pred = m.predict(x_train);
        test_pred = m.predict(select_rows(fm.values, test));
        break;
      }
      case LearnerKind::boosted_trees: {
        const Eigen::MatrixXd x_train = select_rows(fm.values, train);
        GradientBoostedTrees model(BoostingParams{spec.tree_depth, spec.tree_rounds, spec.learning_rate, spec.min_leaf});
        model.fit(x_train, y_train);
        train_pred = model.predict(x_train);
        test_pred = model.predict(select_rows(fm.values, test));
        break;
      }
      case LearnerKind::oracle: {
        train_pred.resize(y_train.size());
        test_pred.resize(static_cast<Eigen::Index>(test.size()));
        for (std::size_t i = 0; i < train.size(); ++i) {
          train_pred[static_cast<Eigen::Index>(i)] = spec.oracle(ds, static_cast<std::size_t>(train[i]));
        }
        for (std::size_t i = 0; i < test.size(); ++i) {
          test_pred[static_cast<Eigen::Index>(i)] = spec.oracle(ds, static_cast<std::size_t>(test[i]));
        }
        break;
      }
    }

    diag.train_mse = mse(train_pred, y_train);
    diag.test_mse = mse(test_pred, select_rows(y, test));
    for (std::size_t i = 0; i < test.size(); ++i) out.prediction[test[i]] = test_pred[static_cast<Eigen::Index>(i)];
    out.folds[fold_index] = diag;
  });

  out.v_hat = y - out.prediction;
  return out;
}

}  // namespace cdml
