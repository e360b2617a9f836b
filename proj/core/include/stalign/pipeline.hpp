#pragma once

#include <deque>
#include <optional>
#include <string>

#include "stalign/embedding.hpp"
#include "stalign/matching.hpp"

namespace stalign {

enum class FeatureMode { Handcrafted, Learned };
enum class PoseEstimator { Ransac, LMedS };

struct PipelineConfig {
  MatchConfig match;
  FeatureMode feature_mode = FeatureMode::Handcrafted;
  PoseEstimator estimator = PoseEstimator::Ransac;
  int ransac_iterations = 200;
  double inlier_radius = 0.5;  // meters
  uint64_t estimator_seed = 1;
  int buffer_length = 10;  // l; the buffer keeps l+1 graphs
  double tau_ms = 100.0;
  /// Buffer entries within this epsilon of the best are considered tied;
  /// the most recent wins and the result is flagged ambiguous.
  double epsilon_tie_tolerance = 1e-6;
};

struct BufferEntry {
  double local_time_ms = 0.0;
  SalientObjectGraph graph;
  /// Odometry-accumulated transform from this entry's frame into the newest
  /// buffered frame.
  RigidTransform2D to_current;
};

/// Ring buffer of the ego agent's recent salient-object graphs, newest
/// first, spaced one sample interval apart.
class GraphBuffer {
 public:
  GraphBuffer(int capacity, double tau_ms) : capacity_(capacity), tau_ms_(tau_ms) {}

  /// Pushes the next frame's graph. odom_increment maps the previous newest
  /// frame's coordinates into this frame's coordinates (ignored on the first
  /// push). Throws OutOfOrderFrame unless the timestamp advances by one
  /// sample interval within a tau/10 jitter tolerance.
  void push(double local_time_ms, SalientObjectGraph graph,
            const RigidTransform2D& odom_increment);

  const std::deque<BufferEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  double tau_ms() const { return tau_ms_; }
  double newest_time_ms() const { return entries_.front().local_time_ms; }

 private:
  int capacity_;
  double tau_ms_;
  std::deque<BufferEntry> entries_;
};

struct TemporalMatch {
  int buffer_index = 0;  // 0 = newest entry
  CommonSubgraph subgraph;
  bool ambiguous_time = false;
};

/// Matches the collaborator graph against every buffered graph and keeps the
/// minimal-epsilon match; nullopt when no buffered graph yields a subgraph of
/// at least cfg.min_subgraph_size. Ties within tie_tolerance pick the most
/// recent entry and set ambiguous_time.
std::optional<TemporalMatch> temporal_align(const GraphBuffer& buffer,
                                            const SalientObjectGraph& collab,
                                            const MatchConfig& cfg,
                                            double tie_tolerance = 1e-6);

struct PoseFit {
  RigidTransform2D transform;  // collaborator frame -> ego frame
  std::vector<int> inliers;    // indices into the subgraph's correspondences
};

/// Robust rigid fit over the matched node centers. RANSAC samples 2-point
/// minimal sets; LMedS minimizes the median squared residual and refits on
/// points within 2.5 robust standard deviations. Deterministic given seed.
/// Throws DegenerateGeometry when no usable minimal set exists.
PoseFit estimate_pose(const CommonSubgraph& sub, const SalientObjectGraph& ego,
                      const SalientObjectGraph& collab, PoseEstimator method,
                      int ransac_iterations, double inlier_radius, uint64_t seed);

enum class AlignmentStatus { Aligned, Rejected };

struct AlignmentResult {
  AlignmentStatus status = AlignmentStatus::Rejected;
  std::optional<RigidTransform2D> relative_pose;  // collab frame -> current ego frame
  std::optional<double> matched_ego_time_ms;
  std::optional<double> latency_estimate_ms;  // nonnegative multiple of tau
  std::optional<double> clock_deviation_estimate_ms;
  std::optional<CommonSubgraph> subgraph;
  std::optional<double> confidence;  // the match's epsilon; lower is better
  bool ambiguous_time = false;
  std::string reject_reason;  // empty when aligned
};

/// End-to-end alignment of one collaborator frame against the ego buffer:
/// build + feature the collaborator graph, select the best buffered
/// timestamp, robust-fit the relative pose, and compose the matched entry's
/// odometry so the returned pose lands in the ego's current frame. All
/// unalignable inputs come back as Rejected rather than errors. The
/// advertised latency, when given, is only used to report the estimated
/// clock deviation; it never influences matching.
AlignmentResult align_frame(const GraphBuffer& buffer, const DetectionFrame& collab_frame,
                            std::optional<double> advertised_latency_ms,
                            const PipelineConfig& cfg,
                            const EmbeddingParams* model = nullptr);

}  // namespace stalign
