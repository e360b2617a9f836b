#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stalign/harness.hpp"

namespace stalign {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  uint64_t train_seed = 1;
  int corpus_pairs = 200;
  int holdout_pairs = 40;
  int hidden = 32;
  int rounds = 2;
  int feature_dim = 8;
  int profile_len = 16;
  double margin = 1.0;
  std::optional<double> stop_at_mean_loss;
  int threads = 0;
};

/// Everything the CLI reads from one config file: scenario, matcher,
/// pipeline, benchmark, and training keys in a flat `key = value` format
/// ('#' starts a comment; ranges are two numbers).
struct HarnessConfig {
  BenchmarkConfig bench;
  TrainConfig train;
  std::string checkpoint;  // model path for learned feature mode
};

/// Throws InvalidConfig naming the offending line for unknown keys or
/// malformed values.
HarnessConfig parse_config_text(const std::string& text);

/// Throws IoError when the file cannot be read.
HarnessConfig load_config(const std::string& path);

/// Serializes a config back into the same text format.
std::string config_to_text(const HarnessConfig& cfg);

// --- detection frame streams: one JSON object per line,
//     {"agent": str, "t": int_ms, "boxes": [[x,y,yaw],...]}
//     plus "truth_ids" (int or null per box) in ground-truth exports.

void export_frames(const std::vector<std::vector<DetectionFrame>>& streams,
                   const std::string& path, bool with_truth_ids);

/// Streams grouped by agent in first-seen order. Throws IoError on
/// unreadable files and MalformedRecord (with the line number) on parse
/// errors, length mismatches, or non-finite coordinates.
std::vector<std::vector<DetectionFrame>> import_frames(const std::string& path);

// --- ground truth + odometry side file (JSON)

struct TruthFile {
  GroundTruth truth;
  std::vector<OdometryTrack> odometry;
};

void export_truth(const Scenario& sc, const std::string& path);
TruthFile import_truth(const std::string& path);

// --- outputs

/// Canonical serialization of one alignment outcome (sorted keys, shortest
/// round-trip floats), also used for paired-run equality checks.
std::string to_json_string(const AlignmentResult& r);

void write_report_json(const MetricsReport& r, const std::string& path);
void write_trials_csv(const std::vector<TrialRecord>& records, const std::string& path);
std::vector<TrialRecord> read_trials_csv(const std::string& path);
void write_loss_csv(const std::vector<double>& epoch_loss, const std::string& path);

}  // namespace stalign
