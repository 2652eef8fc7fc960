#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cdml/panel.hpp"

namespace cdml {

enum class LearnerKind { mean, linear, ridge, boosted_trees, oracle };

std::string_view to_string(LearnerKind kind) noexcept;
// Accepts "mean", "linear", "ridge", "boosted" / "boosted_trees".
LearnerKind parse_learner_kind(std::string_view text);

// Predicts the outcome of row `row` of `ds` from the truth; test-only.
using OracleFn = std::function<double(const PanelDataset& ds, std::size_t row)>;

struct LearnerSpec {
  LearnerKind kind = LearnerKind::boosted_trees;
  // Ridge penalty on standardised features. Unset: chosen by inner 5-fold
  // cluster cross-validation over kRidgeGrid.
  std::optional<double> ridge_lambda;
  int tree_depth = 3;
  int tree_rounds = 200;
  double learning_rate = 0.1;
  int min_leaf = 5;
  OracleFn oracle;

  static LearnerSpec of(LearnerKind kind) {
    LearnerSpec s;
    s.kind = kind;
    return s;
  }
  static LearnerSpec mean() { return of(LearnerKind::mean); }
  static LearnerSpec linear() { return of(LearnerKind::linear); }
  static LearnerSpec ridge(std::optional<double> lambda = std::nullopt) {
    LearnerSpec s = of(LearnerKind::ridge);
    s.ridge_lambda = lambda;
    return s;
  }
  static LearnerSpec boosted() { return of(LearnerKind::boosted_trees); }
  static LearnerSpec from_oracle(OracleFn fn) {
    LearnerSpec s = of(LearnerKind::oracle);
    s.oracle = std::move(fn);
    return s;
  }

  // Throws InvalidArgument when a hyperparameter is outside its domain.
  void validate() const;
};

inline constexpr double kRidgeGrid[] = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5};

// Cluster-level fold assignment.
struct FoldPlan {
  int folds = 0;
  std::vector<int> assignment;  // per cluster, in [0, folds)

  std::vector<std::size_t> clusters_in(int fold) const;
  friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

// Clusters are shuffled with the seeded generator and dealt round-robin.
FoldPlan make_folds(const PanelDataset& ds, int folds, std::uint64_t seed);

struct FoldDiagnostics {
  int fold = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  double train_mse = 0.0;
  double test_mse = 0.0;
  double ridge_lambda = 0.0;  // selected penalty (ridge only)
};

struct OutcomeResiduals {
  Eigen::VectorXd v_hat;       // Y - g_hat, out of fold
  Eigen::VectorXd prediction;  // g_hat
  std::vector<FoldDiagnostics> folds;
};

// Each row's prediction comes from a learner trained on the clusters outside
// its fold. Folds may be trained concurrently; results do not depend on
// `threads`.
OutcomeResiduals crossfit_outcome(const PanelDataset& ds, const LearnerSpec& spec,
                                  const FoldPlan& plan, unsigned threads = 1);

// Learner primitives, exposed for tests.
struct LinearModel {
  double intercept = 0.0;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const {
    return (features * coefficients).array() + intercept;
  }
};

// Ordinary least squares with intercept; SingularDesign when rank deficient.
LinearModel fit_linear(const Eigen::MatrixXd& features, const Eigen::VectorXd& target);
// Ridge with unpenalised intercept on standardised features; lambda >= 0.
LinearModel fit_ridge(const Eigen::MatrixXd& features, const Eigen::VectorXd& target, double lambda);

}  // namespace cdml
