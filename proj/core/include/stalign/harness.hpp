#pragma once

#include <limits>
#include <string>
#include <vector>

#include "stalign/pipeline.hpp"
#include "stalign/simulator.hpp"

namespace stalign {

/// Aligned results with translation error beyond this count as errors
/// (the threshold that turns a correct box into a false positive).
inline constexpr double kErrorRadiusMeters = 3.0;

struct BenchmarkConfig {
  ScenarioConfig scenario;
  PipelineConfig pipeline;
  int trials = 100;
  uint64_t bench_seed = 1;
  /// Trial admission: candidate scenarios are scanned deterministically and
  /// kept only when the ego/collaborator overlap satisfies these bounds.
  int min_shared = 0;
  int max_shared = std::numeric_limits<int>::max();
  int min_distractors = 0;
  int threads = 0;  // 0 = hardware concurrency
  bool count_rejected_as_errors = false;
  double attack_magnitude = 10.0;  // used when scenario.pose_attack is set
};

struct TrialRecord {
  int trial = 0;
  uint64_t scenario_seed = 0;
  int receiver_frame = 0;
  int sender_frame = 0;
  int shared_objects = 0;
  double true_latency_ms = 0;
  double advertised_latency_ms = 0;
  double true_clock_deviation_ms = 0;
  bool aligned = false;
  bool ambiguous_time = false;
  int true_slot = 0;
  int matched_slot = -1;  // estimated latency in sample intervals, -1 = rejected
  double est_latency_ms = 0;
  double est_clock_deviation_ms = 0;
  double true_dx = 0, true_dy = 0, true_dtheta = 0;
  double est_dx = 0, est_dy = 0, est_dtheta = 0;
  double translation_error_m = 0;
  double rotation_error_rad = 0;
  double baseline_dx = 0, baseline_dy = 0, baseline_dtheta = 0;
  double baseline_translation_error_m = 0;
  double baseline_rotation_error_rad = 0;
  int baseline_slot = 0;  // latency slot implied by the advertised clock
  int psi = 0;
  double epsilon = 0;
  std::string reject_reason;
  /// Serialized alignment result, for paired-run equality checks.
  std::string result_fingerprint;
};

struct MetricsReport {
  int trials = 0;
  int aligned = 0;
  int rejected = 0;
  double mean_abs_rotation_error_deg = 0;
  double mean_planar_error_m = 0;
  double error_rate = 0;
  double sync_accuracy_all = 0;
  double sync_accuracy_aligned = 0;
  double mean_abs_clock_deviation_error_ms = 0;
  double rejection_rate = 0;
  std::vector<TrialRecord> records;
};

/// Aggregates a record set; rejected trials are excluded from pose means and
/// reported through rejection_rate unless count_rejected_as_errors.
MetricsReport summarize(std::vector<TrialRecord> records, bool count_rejected_as_errors);

/// Same aggregation over the trusted-pose baseline columns.
MetricsReport summarize_baseline(const std::vector<TrialRecord>& records,
                                 bool count_rejected_as_errors);

/// Runs `trials` seeded scenario+message trials through the alignment
/// pipeline and scores them against ground truth. Deterministic for a fixed
/// config regardless of thread count.
MetricsReport run_benchmark(const BenchmarkConfig& cfg, const EmbeddingParams* model = nullptr);

struct AttackComparison {
  MetricsReport baseline_under_attack;  // trusting advertised poses
  MetricsReport aligned_under_attack;
  MetricsReport aligned_clean;
  bool results_identical = false;  // attacked vs clean alignment outputs
};

/// Paired runs on identical seeds: a pose-trusting baseline versus the
/// device-free pipeline, with advertised poses corrupted by `magnitude`
/// (no corruption when magnitude <= 0).
AttackComparison compare_baseline_trusted_pose(const BenchmarkConfig& cfg, double magnitude,
                                               const EmbeddingParams* model = nullptr);

/// Builds a supervised corpus from simulated scenario pairs: matched edges
/// from truth correspondences, an equal number of sampled non-matching
/// edges.
std::vector<TrainingPair> make_training_pairs(const ScenarioConfig& base, int count,
                                              uint64_t seed);

struct OracleCheckSummary {
  int instances = 0;
  int size_within_one = 0;   // search size >= oracle size - 1
  int exact_matches = 0;     // identical correspondence sets
  double mean_oracle_size = 0;
  double mean_search_size = 0;
};

/// Random small instances (n, m <= max_nodes, >= min_shared truth-shared
/// nodes in generic position) solved by both the anchor search and the
/// exhaustive oracle.
OracleCheckSummary oracle_check(int instances, uint64_t seed, int max_nodes,
                                int min_shared, const MatchConfig& cfg);

/// Empty frames become empty graphs (the strict builder rejects them), and
/// learned features are attached when a model is given.
SalientObjectGraph featured_graph(const DetectionFrame& frame, const PipelineConfig& cfg,
                                  const EmbeddingParams* model);

/// Composite seed for per-trial candidate streams.
uint64_t hash_mix(uint64_t a, uint64_t b, uint64_t c = 0);

}  // namespace stalign
