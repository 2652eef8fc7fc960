#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cdml {

struct TreeParams {
  int depth = 3;
  int min_leaf = 5;
};

// Least-squares regression tree grown level by level with exact greedy
// splits. Ties in gain go to the lowest feature index, then the lowest
// threshold, so growth is fully deterministic.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;   // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  // sorted_rows[f] lists the rows of `features` ordered by feature f
  // (ties by row index).
  void fit(const Eigen::MatrixXd& features,
           const std::vector<std::vector<int>>& sorted_rows,
           const std::vector<double>& target, const TreeParams& params);

  double predict(const Eigen::MatrixXd& features, Eigen::Index row) const;

  const std::vector<Node>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

struct BoostingParams {
  int depth = 3;
  int rounds = 200;
  double learning_rate = 0.1;
  int min_leaf = 5;
};

// Gradient boosting on squared loss, initialised at the target mean.
class GradientBoostedTrees {
 public:
  explicit GradientBoostedTrees(BoostingParams params = {}) : params_(params) {}

  void fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& target);
  double predict(const Eigen::MatrixXd& features, Eigen::Index row) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;

  std::size_t tree_count() const noexcept { return trees_.size(); }

 private:
  BoostingParams params_;
  double base_ = 0.0;
  std::vector<RegressionTree> trees_;
};

}  // namespace cdml
