#include "stalign/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "stalign/errors.hpp"
#include "stalign/rng.hpp"

namespace stalign {

void validate(const ScenarioConfig& cfg) {
  if (cfg.num_agents < 2) throw InvalidConfig("num_agents must be >= 2");
  if (cfg.num_objects < 0) throw InvalidConfig("num_objects must be >= 0");
  if (cfg.world_extent <= 0) throw InvalidConfig("world_extent must be positive");
  if (cfg.sample_interval_tau <= 0 || cfg.sample_interval_tau > 100.0)
    throw InvalidConfig("sample_interval_tau must be in (0, 100] ms");
  if (cfg.duration < 1) throw InvalidConfig("duration must be >= 1 frame");
  if (cfg.fov_radius <= 0) throw InvalidConfig("fov_radius must be positive");
  if (cfg.detection_jitter_sigma < 0) throw InvalidConfig("detection_jitter_sigma must be >= 0");
  if (cfg.miss_rate < 0 || cfg.miss_rate > 1) throw InvalidConfig("miss_rate must be in [0, 1]");
  if (cfg.false_positive_rate < 0) throw InvalidConfig("false_positive_rate must be >= 0");
  if (cfg.object_speed_range.lo > cfg.object_speed_range.hi ||
      cfg.object_speed_range.lo < 0)
    throw InvalidConfig("object_speed_range must satisfy 0 <= min <= max");
  if (cfg.clock_offset_range.lo > cfg.clock_offset_range.hi)
    throw InvalidConfig("clock_offset_range must satisfy min <= max");
  if (cfg.latency_range.lo > cfg.latency_range.hi || cfg.latency_range.lo < 0)
    throw InvalidConfig("latency_range must satisfy 0 <= min <= max");
  if (cfg.odometry_drift_sigma < 0) throw InvalidConfig("odometry_drift_sigma must be >= 0");
}

namespace {

struct ObjectState {
  double x, y;
  double vx, vy;
  double heading;
};

void redraw_velocity(Rng& rng, const ScenarioConfig& cfg, ObjectState& o) {
  const double speed = rng.uniform(cfg.object_speed_range.lo, cfg.object_speed_range.hi);
  const double dir = rng.uniform(-kPi, kPi);
  o.vx = speed * std::cos(dir);
  o.vy = speed * std::sin(dir);
  o.heading = dir;
}

// Reflect at the world boundary; keeps |position| inside and flips velocity.
void bounce(double half, double& p, double& v) {
  if (p > half) {
    p = 2 * half - p;
    v = -v;
  } else if (p < -half) {
    p = -2 * half - p;
    v = -v;
  }
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& cfg) {
  validate(cfg);

  Scenario sc;
  sc.config = cfg;
  const double tau_s = cfg.sample_interval_tau / 1000.0;
  const double half = cfg.world_extent / 2.0;

  Rng object_rng = Rng(cfg.seed).fork(1);
  Rng agent_rng = Rng(cfg.seed).fork(2);
  Rng clock_rng = Rng(cfg.seed).fork(3);
  Rng latency_rng = Rng(cfg.seed).fork(4);

  // --- objects: piecewise-constant velocity, occasionally re-randomized
  std::vector<ObjectState> objects(cfg.num_objects);
  for (auto& o : objects) {
    o.x = object_rng.uniform(-half, half);
    o.y = object_rng.uniform(-half, half);
    redraw_velocity(object_rng, cfg, o);
  }

  sc.truth.tau_ms = cfg.sample_interval_tau;
  sc.truth.object_positions.resize(cfg.duration);
  std::vector<std::vector<ObjectState>> object_frames(cfg.duration);
  for (int k = 0; k < cfg.duration; ++k) {
    if (k > 0) {
      for (auto& o : objects) {
        if (object_rng.uniform01() < 0.05) redraw_velocity(object_rng, cfg, o);
        o.x += o.vx * tau_s;
        o.y += o.vy * tau_s;
        bounce(half, o.x, o.vx);
        bounce(half, o.y, o.vy);
      }
    }
    object_frames[k] = objects;
    sc.truth.object_positions[k].reserve(objects.size());
    for (const auto& o : objects) sc.truth.object_positions[k].push_back({o.x, o.y});
  }

  // --- agents: concentric arcs around the world center. Radii are capped at
  // 0.35 * fov_radius so any two agents stay within 0.7 * fov_radius of each
  // other and their fields of view always overlap.
  const double max_orbit = 0.35 * std::min(cfg.fov_radius, half > 0 ? half : cfg.fov_radius);
  sc.truth.agents.resize(cfg.num_agents);
  for (int a = 0; a < cfg.num_agents; ++a) {
    AgentTruth& at = sc.truth.agents[a];
    at.id = "agent" + std::to_string(a);
    const double radius = agent_rng.uniform(0.4 * max_orbit, max_orbit);
    const double phase = agent_rng.uniform(-kPi, kPi);
    double omega = agent_rng.uniform(0.02, 0.05);  // rad per frame
    if (agent_rng.uniform01() < 0.5) omega = -omega;
    at.poses.resize(cfg.duration);
    for (int k = 0; k < cfg.duration; ++k) {
      const double ang = phase + omega * k;
      Pose2D p;
      p.x = radius * std::cos(ang);
      p.y = radius * std::sin(ang);
      p.theta = wrap_angle(ang + (omega >= 0 ? kPi / 2 : -kPi / 2));
      at.poses[k] = p;
    }
    at.advertised_poses = at.poses;
    at.clock_offset_ms =
        std::round(clock_rng.uniform(cfg.clock_offset_range.lo, cfg.clock_offset_range.hi));
  }

  // --- odometry: increment k maps frame-k coordinates into frame-(k+1)
  sc.odometry.resize(cfg.num_agents);
  for (int a = 0; a < cfg.num_agents; ++a) {
    Rng drift_rng = Rng(cfg.seed).fork(50 + static_cast<uint64_t>(a));
    auto& track = sc.odometry[a].increments;
    track.reserve(cfg.duration > 0 ? cfg.duration - 1 : 0);
    for (int k = 0; k + 1 < cfg.duration; ++k) {
      RigidTransform2D inc =
          relative_pose(sc.truth.agents[a].poses[k + 1], sc.truth.agents[a].poses[k]);
      if (cfg.odometry_drift_sigma > 0) {
        inc.tx += drift_rng.normal(cfg.odometry_drift_sigma);
        inc.ty += drift_rng.normal(cfg.odometry_drift_sigma);
        inc.rotation = wrap_angle(inc.rotation + drift_rng.normal(cfg.odometry_drift_sigma * 0.02));
      }
      track.push_back(inc);
    }
  }

  // --- detections. Jitter norms are truncated at 1.5 sigma so two matched
  // detections mapped into a common frame always land within 3 sigma.
  const double jitter_cap = 1.5 * cfg.detection_jitter_sigma;
  sc.frames.resize(cfg.num_agents);
  for (int a = 0; a < cfg.num_agents; ++a) {
    Rng detect_rng = Rng(cfg.seed).fork(100 + static_cast<uint64_t>(a));
    const AgentTruth& at = sc.truth.agents[a];
    sc.frames[a].resize(cfg.duration);
    for (int k = 0; k < cfg.duration; ++k) {
      DetectionFrame& frame = sc.frames[a][k];
      frame.agent_id = at.id;
      frame.local_time_ms = k * cfg.sample_interval_tau + at.clock_offset_ms;
      const Pose2D& pose = at.poses[k];
      const double c = std::cos(pose.theta), s = std::sin(pose.theta);
      for (int o = 0; o < cfg.num_objects; ++o) {
        const ObjectState& obj = object_frames[k][o];
        const double wx = obj.x - pose.x, wy = obj.y - pose.y;
        if (wx * wx + wy * wy > cfg.fov_radius * cfg.fov_radius) continue;
        if (detect_rng.uniform01() < cfg.miss_rate) continue;
        double jx, jy;
        normal_in_disc(detect_rng, cfg.detection_jitter_sigma, jitter_cap, jx, jy);
        DetectionBox box;
        box.x = c * wx + s * wy + jx;  // world -> ego
        box.y = -s * wx + c * wy + jy;
        box.yaw = wrap_angle(obj.heading - pose.theta);
        box.truth_id = o;
        frame.boxes.push_back(box);
      }
      const int fp_count = detect_rng.poisson(cfg.false_positive_rate);
      for (int f = 0; f < fp_count; ++f) {
        const double r = cfg.fov_radius * std::sqrt(detect_rng.uniform01());
        const double ang = detect_rng.uniform(-kPi, kPi);
        DetectionBox box;
        box.x = r * std::cos(ang);
        box.y = r * std::sin(ang);
        box.yaw = detect_rng.uniform(-kPi, kPi);
        frame.boxes.push_back(box);
      }
    }
  }

  // --- message schedule: one message per ordered pair per receiver frame.
  // Latency is quantized to whole sample intervals (the buffer granularity),
  // uniform over the multiples of tau inside latency_range.
  const double tau = cfg.sample_interval_tau;
  const int lo_slot = static_cast<int>(std::ceil(cfg.latency_range.lo / tau - 1e-9));
  const int hi_slot = static_cast<int>(std::floor(cfg.latency_range.hi / tau + 1e-9));
  for (int k = 0; k < cfg.duration; ++k) {
    for (int i = 0; i < cfg.num_agents; ++i) {
      for (int j = 0; j < cfg.num_agents; ++j) {
        if (i == j) continue;
        const int slots = hi_slot <= lo_slot
                              ? lo_slot
                              : static_cast<int>(latency_rng.uniform_int(lo_slot, hi_slot));
        if (k - slots < 0) continue;
        MessageTruth m;
        m.receiver = i;
        m.sender = j;
        m.receiver_frame = k;
        m.sender_frame = k - slots;
        m.true_latency_ms = slots * tau;
        m.advertised_latency_ms = m.true_latency_ms + sc.truth.agents[i].clock_offset_ms -
                                  sc.truth.agents[j].clock_offset_ms;
        m.clock_deviation_ms = m.true_latency_ms - m.advertised_latency_ms;
        sc.truth.messages.push_back(m);
      }
    }
  }

  return sc;
}

void inject_pose_attack(GroundTruth& truth, double magnitude, uint64_t seed,
                        const std::vector<int>& agents) {
  if (magnitude <= 0) throw InvalidConfig("inject_pose_attack: magnitude must be > 0");
  std::unordered_set<int> targets(agents.begin(), agents.end());
  int rank = 0;
  for (int a = 0; a < static_cast<int>(truth.agents.size()); ++a) {
    if (!targets.empty() && !targets.count(a)) continue;
    Rng rng = Rng(seed).fork(7777 + static_cast<uint64_t>(a));
    const int frames = static_cast<int>(truth.agents[a].advertised_poses.size());
    for (int f = 0; f < frames; ++f) {
      Pose2D& p = truth.agents[a].advertised_poses[f];
      // Displacements of different agents point apart (per-frame base
      // direction plus pi per attacked agent); an attacker aiming to spawn
      // false positives gains nothing from a shared offset, which would
      // cancel out of relative poses.
      Rng frame_rng(Rng(seed).fork(4242).next_u64() ^ (0x9e3779b97f4a7c15ULL * (f + 1)));
      const double base = frame_rng.uniform(-kPi, kPi);
      const double dir = base + kPi * rank + rng.uniform(-0.4, 0.4);
      const double norm = rng.uniform(0.7 * magnitude, magnitude);
      p.x += norm * std::cos(dir);
      p.y += norm * std::sin(dir);
      // Heading is attacked too; a skewed ego heading rotates every box a
      // pose-trusting consumer ingests.
      const double dtheta = rng.uniform(0.25, 0.6) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
      p.theta = wrap_angle(p.theta + dtheta);
    }
    ++rank;
  }
}

int shared_detection_count(const DetectionFrame& a, const DetectionFrame& b) {
  std::unordered_set<int> ids;
  for (const auto& box : a.boxes)
    if (box.truth_id) ids.insert(*box.truth_id);
  int shared = 0;
  for (const auto& box : b.boxes)
    if (box.truth_id && ids.count(*box.truth_id)) ++shared;
  return shared;
}

int distractor_count(const DetectionFrame& a, const DetectionFrame& b) {
  std::unordered_set<int> other;
  for (const auto& box : b.boxes)
    if (box.truth_id) other.insert(*box.truth_id);
  int count = 0;
  for (const auto& box : a.boxes)
    if (!box.truth_id || !other.count(*box.truth_id)) ++count;
  return count;
}

RigidTransform2D true_relative_transform(const GroundTruth& truth, int receiver,
                                         int receiver_frame, int sender,
                                         int sender_frame) {
  return relative_pose(truth.agents[receiver].poses[receiver_frame],
                       truth.agents[sender].poses[sender_frame]);
}

}  // namespace stalign
