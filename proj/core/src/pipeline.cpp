#include "stalign/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stalign/errors.hpp"
#include "stalign/rng.hpp"

namespace stalign {

void GraphBuffer::push(double local_time_ms, SalientObjectGraph graph,
                       const RigidTransform2D& odom_increment) {
  if (!entries_.empty()) {
    const double dt = local_time_ms - entries_.front().local_time_ms;
    if (std::abs(dt - tau_ms_) > tau_ms_ / 10.0)
      throw OutOfOrderFrame("push: expected the next sample interval, got dt=" +
                            std::to_string(dt) + " ms");
    for (BufferEntry& e : entries_) e.to_current = compose(odom_increment, e.to_current);
  }
  entries_.push_front({local_time_ms, std::move(graph), RigidTransform2D::identity()});
  while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_back();
}

std::optional<TemporalMatch> temporal_align(const GraphBuffer& buffer,
                                            const SalientObjectGraph& collab,
                                            const MatchConfig& cfg,
                                            double tie_tolerance) {
  std::optional<TemporalMatch> best;
  std::vector<std::pair<int, double>> scored;  // (index, epsilon) of matches
  for (int i = 0; i < buffer.size(); ++i) {
    const SalientObjectGraph& g = buffer.entries()[i].graph;
    if (g.features.k != collab.features.k) continue;  // un-embeddable entry
    auto sub = find_common_subgraph(g, collab, cfg);
    if (!sub) continue;
    scored.emplace_back(i, sub->epsilon);
    if (!best || sub->epsilon < best->subgraph.epsilon)
      best = TemporalMatch{i, std::move(*sub), false};
  }
  if (!best) return std::nullopt;

  // Prefer the most recent entry among near-ties (smallest-latency reading).
  int tied = 0;
  int chosen = best->buffer_index;
  for (const auto& [idx, eps] : scored) {
    if (eps - best->subgraph.epsilon <= tie_tolerance) {
      ++tied;
      chosen = std::min(chosen, idx);
    }
  }
  if (chosen != best->buffer_index) {
    auto sub = find_common_subgraph(buffer.entries()[chosen].graph, collab, cfg);
    best = TemporalMatch{chosen, std::move(*sub), false};
  }
  best->ambiguous_time = tied > 1;
  return best;
}

namespace {

struct CorrPoints {
  PointSet2D src;  // collaborator side
  PointSet2D dst;  // ego side
};

CorrPoints corresponding_points(const CommonSubgraph& sub, const SalientObjectGraph& ego,
                                const SalientObjectGraph& collab) {
  CorrPoints pts;
  pts.src.reserve(sub.pairs.size());
  pts.dst.reserve(sub.pairs.size());
  for (const auto& [e, c] : sub.pairs) {
    pts.dst.push_back({ego.nodes[e].x, ego.nodes[e].y});
    pts.src.push_back({collab.nodes[c].x, collab.nodes[c].y});
  }
  return pts;
}

constexpr double kMinSampleSeparation = 1e-6;

std::vector<double> squared_residuals(const RigidTransform2D& t, const PointSet2D& src,
                                      const PointSet2D& dst) {
  std::vector<double> r(src.size());
  for (size_t i = 0; i < src.size(); ++i) {
    const Point2D m = apply(t, src[i]);
    const double ex = m.x - dst[i].x, ey = m.y - dst[i].y;
    r[i] = ex * ex + ey * ey;
  }
  return r;
}

PoseFit refit_on_inliers(const PointSet2D& src, const PointSet2D& dst,
                         const std::vector<int>& inliers) {
  PointSet2D s, d;
  s.reserve(inliers.size());
  d.reserve(inliers.size());
  for (int i : inliers) {
    s.push_back(src[i]);
    d.push_back(dst[i]);
  }
  return {rigid_fit(s, d), inliers};
}

PoseFit ransac_fit(const PointSet2D& src, const PointSet2D& dst, int iterations,
                   double inlier_radius, uint64_t seed) {
  const int n = static_cast<int>(src.size());
  Rng rng = Rng(seed).fork(31);
  int best_count = -1;
  double best_sse = std::numeric_limits<double>::infinity();
  std::vector<int> best_inliers;

  for (int it = 0; it < iterations; ++it) {
    const int i = static_cast<int>(rng.uniform_int(0, n - 1));
    int j = static_cast<int>(rng.uniform_int(0, n - 2));
    if (j >= i) ++j;
    const double sep = std::hypot(src[i].x - src[j].x, src[i].y - src[j].y);
    if (sep < kMinSampleSeparation) continue;
    const RigidTransform2D t = rigid_fit({src[i], src[j]}, {dst[i], dst[j]});
    const std::vector<double> r2 = squared_residuals(t, src, dst);
    std::vector<int> inliers;
    double sse = 0;
    for (int k = 0; k < n; ++k) {
      if (r2[k] <= inlier_radius * inlier_radius) {
        inliers.push_back(k);
        sse += r2[k];
      }
    }
    const int count = static_cast<int>(inliers.size());
    if (count > best_count || (count == best_count && sse < best_sse)) {
      best_count = count;
      best_sse = sse;
      best_inliers = std::move(inliers);
    }
  }
  if (best_count < 2)
    throw DegenerateGeometry("estimate_pose: all sampled minimal sets near-coincident");
  return refit_on_inliers(src, dst, best_inliers);
}

PoseFit lmeds_fit(const PointSet2D& src, const PointSet2D& dst, int iterations,
                  uint64_t seed) {
  const int n = static_cast<int>(src.size());
  Rng rng = Rng(seed).fork(37);

  // Enumerate all 2-point samples when feasible, otherwise sample.
  std::vector<std::pair<int, int>> samples;
  if (n * (n - 1) / 2 <= iterations) {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) samples.emplace_back(i, j);
  } else {
    samples.reserve(iterations);
    for (int it = 0; it < iterations; ++it) {
      const int i = static_cast<int>(rng.uniform_int(0, n - 1));
      int j = static_cast<int>(rng.uniform_int(0, n - 2));
      if (j >= i) ++j;
      samples.emplace_back(i, j);
    }
  }

  double best_median = std::numeric_limits<double>::infinity();
  std::optional<RigidTransform2D> best_model;
  for (const auto& [i, j] : samples) {
    const double sep = std::hypot(src[i].x - src[j].x, src[i].y - src[j].y);
    if (sep < kMinSampleSeparation) continue;
    const RigidTransform2D t = rigid_fit({src[i], src[j]}, {dst[i], dst[j]});
    std::vector<double> r2 = squared_residuals(t, src, dst);
    auto mid = r2.begin() + r2.size() / 2;
    std::nth_element(r2.begin(), mid, r2.end());
    if (*mid < best_median) {
      best_median = *mid;
      best_model = t;
    }
  }
  if (!best_model)
    throw DegenerateGeometry("estimate_pose: all sampled minimal sets near-coincident");

  // Robust scale from the minimal median (Rousseeuw-Leroy), then refit on
  // points within 2.5 scaled deviations.
  const double scale = 1.4826 * (1.0 + 5.0 / (n - 2)) * std::sqrt(best_median);
  const double cutoff = std::max(2.5 * scale, 1e-9);
  const std::vector<double> r2 = squared_residuals(*best_model, src, dst);
  std::vector<int> inliers;
  for (int k = 0; k < n; ++k)
    if (r2[k] <= cutoff * cutoff) inliers.push_back(k);
  if (static_cast<int>(inliers.size()) < 2) return {*best_model, inliers};
  return refit_on_inliers(src, dst, inliers);
}

}  // namespace

PoseFit estimate_pose(const CommonSubgraph& sub, const SalientObjectGraph& ego,
                      const SalientObjectGraph& collab, PoseEstimator method,
                      int ransac_iterations, double inlier_radius, uint64_t seed) {
  if (sub.size() < 3)
    throw DegenerateGeometry("estimate_pose: need at least 3 correspondences");
  const CorrPoints pts = corresponding_points(sub, ego, collab);
  if (method == PoseEstimator::Ransac)
    return ransac_fit(pts.src, pts.dst, ransac_iterations, inlier_radius, seed);
  return lmeds_fit(pts.src, pts.dst, ransac_iterations, seed);
}

AlignmentResult align_frame(const GraphBuffer& buffer, const DetectionFrame& collab_frame,
                            std::optional<double> advertised_latency_ms,
                            const PipelineConfig& cfg, const EmbeddingParams* model) {
  AlignmentResult result;
  auto reject = [&](const std::string& why) {
    result.status = AlignmentStatus::Rejected;
    result.reject_reason = why;
    return result;
  };

  if (buffer.empty()) return reject("empty buffer");
  if (collab_frame.boxes.empty()) return reject("empty collaborator frame");

  SalientObjectGraph collab = build_graph(collab_frame);
  if (collab.size() < cfg.match.min_subgraph_size)
    return reject("collaborator frame below minimum subgraph size");
  if (cfg.feature_mode == FeatureMode::Learned) {
    if (!model) return reject("learned feature mode without a model");
    collab.features = embed_edges(*model, collab);
  }

  auto match = temporal_align(buffer, collab, cfg.match, cfg.epsilon_tie_tolerance);
  if (!match) return reject("no common subgraph across the buffer");

  const BufferEntry& entry = buffer.entries()[match->buffer_index];
  PoseFit fit;
  try {
    fit = estimate_pose(match->subgraph, entry.graph, collab, cfg.estimator,
                        cfg.ransac_iterations, cfg.inlier_radius, cfg.estimator_seed);
  } catch (const DegenerateGeometry&) {
    return reject("degenerate correspondence geometry");
  }
  // A correspondence set that no rigid motion explains is not a match,
  // however well its edge features agreed.
  if (static_cast<int>(fit.inliers.size()) < cfg.match.min_subgraph_size)
    return reject("correspondences inconsistent with a rigid transform");

  result.status = AlignmentStatus::Aligned;
  result.relative_pose = compose(entry.to_current, fit.transform);
  result.matched_ego_time_ms = entry.local_time_ms;
  result.latency_estimate_ms = buffer.newest_time_ms() - entry.local_time_ms;
  if (advertised_latency_ms)
    result.clock_deviation_estimate_ms = *result.latency_estimate_ms - *advertised_latency_ms;
  result.subgraph = std::move(match->subgraph);
  result.confidence = result.subgraph->epsilon;
  result.ambiguous_time = match->ambiguous_time;
  return result;
}

}  // namespace stalign
