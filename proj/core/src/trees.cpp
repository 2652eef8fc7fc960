#include "cdml/trees.hpp"

#include <algorithm>
#include <numeric>

#include "cdml/error.hpp"

namespace cdml {

namespace {

constexpr double kMinGain = 1e-12;

struct NodeStats {
  double sum = 0.0;
  int count = 0;
};

struct SplitCandidate {
  double gain = kMinGain;
  int feature = -1;
  double threshold = 0.0;
};

}  // namespace

void RegressionTree::fit(const Eigen::MatrixXd& features,
                         const std::vector<std::vector<int>>& sorted_rows,
                         const std::vector<double>& target, const TreeParams& params) {
  const auto n = static_cast<int>(target.size());
  const auto p = static_cast<int>(features.cols());
  nodes_.clear();
  nodes_.push_back(Node{});

  // node_of[i]: node currently holding row i, or -1 once it sits in a finished leaf.
  std::vector<int> node_of(static_cast<std::size_t>(n), 0);
  std::vector<int> frontier{0};

  for (int level = 0; level <= params.depth && !frontier.empty(); ++level) {
    // Map frontier node id -> slot.
    std::vector<int> slot_of(nodes_.size(), -1);
    for (std::size_t s = 0; s < frontier.size(); ++s) slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<int>(s);

    std::vector<NodeStats> totals(frontier.size());
    for (int i = 0; i < n; ++i) {
      const int node = node_of[static_cast<std::size_t>(i)];
      if (node < 0) continue;
      auto& t = totals[static_cast<std::size_t>(slot_of[static_cast<std::size_t>(node)])];
      t.sum += target[static_cast<std::size_t>(i)];
      ++t.count;
    }
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      const auto& t = totals[s];
      nodes_[static_cast<std::size_t>(frontier[s])].value = t.count > 0 ? t.sum / t.count : 0.0;
    }
    if (level == params.depth) break;

    std::vector<SplitCandidate> best(frontier.size());
    std::vector<NodeStats> left(frontier.size());
    std::vector<double> last_value(frontier.size());
    std::vector<bool> started(frontier.size());
    for (int f = 0; f < p; ++f) {
      std::fill(left.begin(), left.end(), NodeStats{});
      std::fill(started.begin(), started.end(), false);
      for (int i : sorted_rows[static_cast<std::size_t>(f)]) {
        const int node = node_of[static_cast<std::size_t>(i)];
        if (node < 0) continue;
        const auto s = static_cast<std::size_t>(slot_of[static_cast<std::size_t>(node)]);
        const double x = features(i, f);
        auto& l = left[s];
        const auto& t = totals[s];
        if (started[s] && x > last_value[s] && l.count >= params.min_leaf &&
            t.count - l.count >= params.min_leaf) {
          const double right_sum = t.sum - l.sum;
          const int right_count = t.count - l.count;
          const double gain = l.sum * l.sum / l.count + right_sum * right_sum / right_count -
                              t.sum * t.sum / t.count;
          if (gain > best[s].gain) {
            double threshold = 0.5 * (last_value[s] + x);
            if (threshold >= x) threshold = last_value[s];
            best[s] = SplitCandidate{gain, f, threshold};
          }
        }
        l.sum += target[static_cast<std::size_t>(i)];
        ++l.count;
        last_value[s] = x;
        started[s] = true;
      }
    }

    std::vector<int> next_frontier;
    for (std::size_t s = 0; s < frontier.size(); ++s) {
      if (best[s].feature < 0) continue;
      const int id = frontier[s];
      const int left_id = static_cast<int>(nodes_.size());
      nodes_.push_back(Node{});
      nodes_.push_back(Node{});
      Node& node = nodes_[static_cast<std::size_t>(id)];
      node.feature = best[s].feature;
      node.threshold = best[s].threshold;
      node.left = left_id;
      node.right = left_id + 1;
      next_frontier.push_back(left_id);
      next_frontier.push_back(left_id + 1);
    }
    for (int i = 0; i < n; ++i) {
      int& node = node_of[static_cast<std::size_t>(i)];
      if (node < 0) continue;
      const Node& nd = nodes_[static_cast<std::size_t>(node)];
      if (nd.feature < 0) {
        node = -1;
      } else {
        node = features(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
      }
    }
    frontier = std::move(next_frontier);
  }
}

double RegressionTree::predict(const Eigen::MatrixXd& features, Eigen::Index row) const {
  std::size_t id = 0;
  while (nodes_[id].feature >= 0) {
    const Node& nd = nodes_[id];
    id = static_cast<std::size_t>(features(row, nd.feature) <= nd.threshold ? nd.left : nd.right);
  }
  return nodes_[id].value;
}

void GradientBoostedTrees::fit(const Eigen::MatrixXd& features, const Eigen::VectorXd& target) {
  require(params_.depth >= 1 && params_.rounds >= 1 && params_.min_leaf >= 1 &&
              params_.learning_rate > 0.0 && params_.learning_rate <= 1.0,
          ErrorKind::InvalidArgument, "invalid boosting parameters");
  require(features.rows() == target.size() && target.size() > 0, ErrorKind::InvalidArgument,
          "feature/target size mismatch");
  const auto n = static_cast<int>(target.size());
  const auto p = static_cast<int>(features.cols());

  std::vector<std::vector<int>> sorted(static_cast<std::size_t>(p));
  for (int f = 0; f < p; ++f) {
    auto& order = sorted[static_cast<std::size_t>(f)];
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return features(a, f) < features(b, f); });
  }

  base_ = target.mean();
  std::vector<double> residual(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) residual[static_cast<std::size_t>(i)] = target[i] - base_;

  trees_.clear();
  trees_.reserve(static_cast<std::size_t>(params_.rounds));
  const TreeParams tree_params{params_.depth, params_.min_leaf};
  for (int round = 0; round < params_.rounds; ++round) {
    RegressionTree tree;
    tree.fit(features, sorted, residual, tree_params);
    for (int i = 0; i < n; ++i) {
      residual[static_cast<std::size_t>(i)] -= params_.learning_rate * tree.predict(features, i);
    }
    trees_.push_back(std::move(tree));
  }
}

double GradientBoostedTrees::predict(const Eigen::MatrixXd& features, Eigen::Index row) const {
  double value = base_;
  for (const auto& tree : trees_) value += params_.learning_rate * tree.predict(features, row);
  return value;
}

Eigen::VectorXd GradientBoostedTrees::predict(const Eigen::MatrixXd& features) const {
  Eigen::VectorXd out(features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) out[i] = predict(features, i);
  return out;
}

}  // namespace cdml
