#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "stalign/simulator.hpp"

namespace stalign {

struct GraphNode {
  double x = 0.0;
  double y = 0.0;
  int source_index = 0;  // index of the box in the originating frame
};

/// n x n x k tensor of per-ordered-pair edge features, row-major.
struct EdgeFeatures {
  int n = 0;
  int k = 0;
  std::vector<double> data;

  static EdgeFeatures zeros(int n, int k) {
    return {n, k, std::vector<double>(static_cast<size_t>(n) * n * k, 0.0)};
  }
  Eigen::Map<const Eigen::VectorXd> at(int p, int q) const {
    return {data.data() + (static_cast<size_t>(p) * n + q) * k, k};
  }
  double* mut(int p, int q) { return data.data() + (static_cast<size_t>(p) * n + q) * k; }
};

/// Fully-connected graph over one frame's detected objects. Nodes are sorted
/// by (x, y, source index) so identical frames always produce identical
/// graphs. `distances` is the pairwise Euclidean distance matrix; `features`
/// starts in handcrafted mode (k=1, the distance itself) and may be replaced
/// by a learned embedding.
struct SalientObjectGraph {
  std::vector<GraphNode> nodes;
  Eigen::MatrixXd distances;
  EdgeFeatures features;
  std::string source_agent;
  double source_time_ms = 0.0;

  int size() const { return static_cast<int>(nodes.size()); }
};

/// Throws EmptyFrame when the frame has no boxes.
SalientObjectGraph build_graph(const DetectionFrame& frame);

/// k=1 features equal to the pairwise distances (the no-learning ablation).
EdgeFeatures handcrafted_features(const Eigen::MatrixXd& distances);

using Correspondence = std::vector<std::pair<int, int>>;

/// Max |R_a[p][q] - R_b[e][f]| over all pairs of correspondence entries.
/// Zero for noise-free views of the same scene regardless of agent pose.
double graph_invariance_check(const SalientObjectGraph& a, const SalientObjectGraph& b,
                              const Correspondence& corr);

}  // namespace stalign
