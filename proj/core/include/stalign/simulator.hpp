#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stalign/geometry.hpp"

namespace stalign {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Knobs of the synthetic multi-agent world. Field names double as the keys
/// of the plain-text config format (see io.hpp).
struct ScenarioConfig {
  uint64_t seed = 1;
  int num_agents = 2;
  int num_objects = 12;
  double world_extent = 60.0;             // side of the square world, meters
  Range object_speed_range{2.0, 5.0};     // m/s
  double sample_interval_tau = 100.0;     // ms, must stay <= 100
  int duration = 20;                      // frames
  double fov_radius = 60.0;               // per-agent sensing radius, meters
  double detection_jitter_sigma = 0.1;    // meters
  double miss_rate = 0.1;                 // per-detection drop probability
  double false_positive_rate = 2.0;       // expected spurious boxes per frame
  Range clock_offset_range{-200.0, 200.0};  // ms
  Range latency_range{0.0, 500.0};          // ms
  bool pose_attack = false;
  double odometry_drift_sigma = 0.0;      // per-increment translation noise, m
};

/// Throws InvalidConfig when a field violates its documented range.
void validate(const ScenarioConfig& cfg);

struct DetectionBox {
  double x = 0.0;    // center, agent ego frame
  double y = 0.0;
  double yaw = 0.0;  // radians, ego frame
  std::optional<int> truth_id;  // absent for false positives
};

/// One agent's detections at one local-clock timestamp; the unit of exchange.
struct DetectionFrame {
  std::string agent_id;
  double local_time_ms = 0.0;
  std::vector<DetectionBox> boxes;
};

/// Relative transforms between consecutive sample poses of one agent;
/// increments[k] maps frame-k coordinates into frame-(k+1) coordinates.
struct OdometryTrack {
  std::vector<RigidTransform2D> increments;
};

struct AgentTruth {
  std::string id;
  double clock_offset_ms = 0.0;
  std::vector<Pose2D> poses;             // global, per frame
  std::vector<Pose2D> advertised_poses;  // equals poses unless attacked
};

struct MessageTruth {
  int receiver = 0;
  int sender = 0;
  int receiver_frame = 0;
  int sender_frame = 0;
  double true_latency_ms = 0.0;
  double advertised_latency_ms = 0.0;  // computed from the two skewed clocks
  double clock_deviation_ms = 0.0;     // true minus advertised latency
};

struct GroundTruth {
  double tau_ms = 100.0;
  std::vector<AgentTruth> agents;
  std::vector<std::vector<Point2D>> object_positions;  // [frame][object]
  std::vector<MessageTruth> messages;
};

struct Scenario {
  ScenarioConfig config;
  std::vector<std::vector<DetectionFrame>> frames;  // [agent][frame]
  std::vector<OdometryTrack> odometry;              // [agent]
  GroundTruth truth;
};

/// Deterministic world synthesis: objects follow piecewise-constant
/// velocities, agents trace smooth arcs near the world center (keeping all
/// fields of view overlapped), detections are jittered/missed/padded with
/// false positives, clocks are offset per agent, and one message per ordered
/// agent pair per frame carries a latency drawn from latency_range rounded
/// to a whole number of sample intervals.
Scenario generate_scenario(const ScenarioConfig& cfg);

/// Corrupts the advertised-pose channel of the targeted agents (all agents
/// when `agents` is empty) by a displacement of magnitude/2..magnitude plus a
/// heading error, independently per frame. The truth channel is untouched and
/// the alignment pipeline never reads advertised poses. Throws InvalidConfig
/// when magnitude <= 0.
void inject_pose_attack(GroundTruth& truth, double magnitude, uint64_t seed,
                        const std::vector<int>& agents = {});

/// Number of truth ids detected by both frames.
int shared_detection_count(const DetectionFrame& a, const DetectionFrame& b);

/// Boxes of `a` with no counterpart in `b` (false positives included).
int distractor_count(const DetectionFrame& a, const DetectionFrame& b);

/// Transform mapping sender-frame coordinates at sender_frame into
/// receiver-frame coordinates at receiver_frame, from true poses.
RigidTransform2D true_relative_transform(const GroundTruth& truth, int receiver,
                                         int receiver_frame, int sender,
                                         int sender_frame);

}  // namespace stalign
