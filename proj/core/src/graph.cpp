#include "stalign/graph.hpp"

#include <algorithm>
#include <cmath>

#include "stalign/errors.hpp"

namespace stalign {

SalientObjectGraph build_graph(const DetectionFrame& frame) {
  if (frame.boxes.empty()) throw EmptyFrame("build_graph: frame has no boxes");

  SalientObjectGraph g;
  g.source_agent = frame.agent_id;
  g.source_time_ms = frame.local_time_ms;
  g.nodes.reserve(frame.boxes.size());
  for (int i = 0; i < static_cast<int>(frame.boxes.size()); ++i) {
    const DetectionBox& b = frame.boxes[i];
    if (!std::isfinite(b.x) || !std::isfinite(b.y))
      throw Error("build_graph: non-finite box center");
    g.nodes.push_back({b.x, b.y, i});
  }
  std::sort(g.nodes.begin(), g.nodes.end(), [](const GraphNode& a, const GraphNode& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.source_index < b.source_index;
  });

  const int n = g.size();
  g.distances = Eigen::MatrixXd::Zero(n, n);
  for (int p = 0; p < n; ++p) {
    for (int q = p + 1; q < n; ++q) {
      const double d = std::hypot(g.nodes[p].x - g.nodes[q].x, g.nodes[p].y - g.nodes[q].y);
      g.distances(p, q) = d;
      g.distances(q, p) = d;
    }
  }
  g.features = handcrafted_features(g.distances);
  return g;
}

EdgeFeatures handcrafted_features(const Eigen::MatrixXd& distances) {
  const int n = static_cast<int>(distances.rows());
  EdgeFeatures f = EdgeFeatures::zeros(n, 1);
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      if (p != q) *f.mut(p, q) = distances(p, q);
  return f;
}

double graph_invariance_check(const SalientObjectGraph& a, const SalientObjectGraph& b,
                              const Correspondence& corr) {
  for (const auto& [p, e] : corr) {
    if (p < 0 || p >= a.size() || e < 0 || e >= b.size())
      throw BadCorrespondence("graph_invariance_check: index out of range");
  }
  double worst = 0.0;
  for (size_t i = 0; i < corr.size(); ++i) {
    for (size_t j = i + 1; j < corr.size(); ++j) {
      const double da = a.distances(corr[i].first, corr[j].first);
      const double db = b.distances(corr[i].second, corr[j].second);
      worst = std::max(worst, std::abs(da - db));
    }
  }
  return worst;
}

}  // namespace stalign
