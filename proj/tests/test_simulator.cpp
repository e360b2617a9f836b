#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "stalign/errors.hpp"
#include "stalign/io.hpp"
#include "stalign/simulator.hpp"
#include "support.hpp"

using namespace stalign;
using test_support::near;

namespace {

ScenarioConfig base_config() {
  ScenarioConfig cfg;
  cfg.seed = 7;
  cfg.num_agents = 2;
  cfg.num_objects = 10;
  cfg.world_extent = 50;
  cfg.duration = 12;
  cfg.fov_radius = 60;
  cfg.detection_jitter_sigma = 0.1;
  cfg.miss_rate = 0.1;
  cfg.false_positive_rate = 2.0;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE_BEGIN("simulator");

TEST_CASE("config invariants are enforced") {
  ScenarioConfig cfg = base_config();
  cfg.sample_interval_tau = 150;  // over the 100 ms bound
  CHECK_THROWS_AS(validate(cfg), InvalidConfig);
  cfg = base_config();
  cfg.miss_rate = 1.5;
  CHECK_THROWS_AS(validate(cfg), InvalidConfig);
  cfg = base_config();
  cfg.object_speed_range = {5, 2};
  CHECK_THROWS_AS(validate(cfg), InvalidConfig);
  cfg = base_config();
  cfg.num_agents = 1;
  CHECK_THROWS_AS(generate_scenario(cfg), InvalidConfig);
}

TEST_CASE("identical seeds give byte-identical exports") {
  const ScenarioConfig cfg = base_config();
  const Scenario s1 = generate_scenario(cfg);
  const Scenario s2 = generate_scenario(cfg);
  const auto dir = std::filesystem::temp_directory_path();
  const std::string p1 = (dir / "stalign_det1.jsonl").string();
  const std::string p2 = (dir / "stalign_det2.jsonl").string();
  export_frames(s1.frames, p1, true);
  export_frames(s2.frames, p2, true);
  CHECK(slurp(p1) == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("noise-free detections coincide through the true relative pose") {
  ScenarioConfig cfg = base_config();
  cfg.detection_jitter_sigma = 0;
  cfg.miss_rate = 0;
  cfg.false_positive_rate = 0;
  const Scenario sc = generate_scenario(cfg);
  for (int k = 0; k < cfg.duration; ++k) {
    const RigidTransform2D t = true_relative_transform(sc.truth, 0, k, 1, k);
    for (const DetectionBox& b : sc.frames[1][k].boxes) {
      REQUIRE(b.truth_id.has_value());
      const Point2D mapped = apply(t, {b.x, b.y});
      bool found = false;
      for (const DetectionBox& a : sc.frames[0][k].boxes) {
        if (a.truth_id && *a.truth_id == *b.truth_id) {
          CHECK(near(mapped.x, a.x, 1e-9));
          CHECK(near(mapped.y, a.y, 1e-9));
          found = true;
        }
      }
      CHECK(found);  // full-world FOV, no misses
    }
  }
}

TEST_CASE("zero clock offsets and zero latency give zero clock deviation") {
  ScenarioConfig cfg = base_config();
  cfg.clock_offset_range = {0, 0};
  cfg.latency_range = {0, 0};
  const Scenario sc = generate_scenario(cfg);
  REQUIRE(!sc.truth.messages.empty());
  for (const MessageTruth& m : sc.truth.messages) {
    CHECK(m.true_latency_ms == 0);
    CHECK(m.clock_deviation_ms == 0);
  }
}

TEST_CASE("clock deviation equals true minus advertised latency for every message") {
  const Scenario sc = generate_scenario(base_config());
  for (const MessageTruth& m : sc.truth.messages) {
    CHECK(m.clock_deviation_ms ==
          doctest::Approx(m.true_latency_ms - m.advertised_latency_ms).epsilon(1e-12));
    CHECK(m.true_latency_ms >= 0);
    const double slots = m.true_latency_ms / sc.truth.tau_ms;
    CHECK(near(slots, std::round(slots), 1e-9));  // whole sample intervals
  }
}

TEST_CASE("matched detections coincide within the jitter bound almost always") {
  const Scenario sc = generate_scenario(base_config());
  const double bound = 3 * sc.config.detection_jitter_sigma + 1e-9;
  int total = 0, within = 0;
  for (int k = 0; k < sc.config.duration; ++k) {
    const RigidTransform2D t = true_relative_transform(sc.truth, 0, k, 1, k);
    for (const DetectionBox& b : sc.frames[1][k].boxes) {
      if (!b.truth_id) continue;
      for (const DetectionBox& a : sc.frames[0][k].boxes) {
        if (!a.truth_id || *a.truth_id != *b.truth_id) continue;
        ++total;
        const Point2D mapped = apply(t, {b.x, b.y});
        if (std::hypot(mapped.x - a.x, mapped.y - a.y) <= bound) ++within;
      }
    }
  }
  REQUIRE(total > 50);
  CHECK(within >= static_cast<int>(0.99 * total));
}

TEST_CASE("the scene is dynamic between any two sampled instants") {
  const Scenario sc = generate_scenario(base_config());
  const double min_step = sc.config.object_speed_range.lo * sc.config.sample_interval_tau / 1000.0;
  for (int k1 = 0; k1 < sc.config.duration; ++k1) {
    for (int k2 = k1 + 1; k2 < sc.config.duration; ++k2) {
      double biggest = 0;
      for (size_t o = 0; o < sc.truth.object_positions[k1].size(); ++o) {
        const Point2D& p1 = sc.truth.object_positions[k1][o];
        const Point2D& p2 = sc.truth.object_positions[k2][o];
        biggest = std::max(biggest, std::hypot(p1.x - p2.x, p1.y - p2.y));
      }
      CHECK(biggest >= min_step - 1e-9);
    }
  }
}

TEST_CASE("odometry increments compose to the true relative pose") {
  const Scenario sc = generate_scenario(base_config());
  for (int agent = 0; agent < sc.config.num_agents; ++agent) {
    for (int from = 0; from < sc.config.duration - 1; ++from) {
      RigidTransform2D acc = RigidTransform2D::identity();
      for (int k = from; k < sc.config.duration - 1; ++k)
        acc = compose(sc.odometry[agent].increments[k], acc);
      const RigidTransform2D want =
          relative_pose(sc.truth.agents[agent].poses[sc.config.duration - 1],
                        sc.truth.agents[agent].poses[from]);
      CHECK(test_support::transforms_near(acc, want, 1e-9));
    }
  }
}

TEST_CASE("pose attack") {
  Scenario sc = generate_scenario(base_config());
  SUBCASE("zero magnitude violates the precondition") {
    CHECK_THROWS_AS(inject_pose_attack(sc.truth, 0.0, 1), InvalidConfig);
  }
  SUBCASE("all-agent attack displaces every advertised pose in range") {
    inject_pose_attack(sc.truth, 10.0, 99);
    const Scenario pristine = generate_scenario(base_config());
    for (size_t a = 0; a < sc.truth.agents.size(); ++a) {
      for (size_t k = 0; k < sc.truth.agents[a].poses.size(); ++k) {
        const Pose2D& truth = sc.truth.agents[a].poses[k];
        const Pose2D& adv = sc.truth.agents[a].advertised_poses[k];
        const double d = std::hypot(adv.x - truth.x, adv.y - truth.y);
        CHECK(d >= 10.0 * 0.7 - 1e-9);
        CHECK(d <= 10.0 + 1e-9);
        // The truth channel stays exactly what an unattacked run produces.
        CHECK(truth.x == pristine.truth.agents[a].poses[k].x);
        CHECK(truth.y == pristine.truth.agents[a].poses[k].y);
      }
    }
  }
  SUBCASE("a single-agent attack leaves the others untouched") {
    ScenarioConfig cfg = base_config();
    cfg.num_agents = 3;
    Scenario sc3 = generate_scenario(cfg);
    inject_pose_attack(sc3.truth, 10.0, 99, {1});
    for (int a = 0; a < 3; ++a) {
      for (size_t k = 0; k < sc3.truth.agents[a].poses.size(); ++k) {
        const double d = std::hypot(
            sc3.truth.agents[a].advertised_poses[k].x - sc3.truth.agents[a].poses[k].x,
            sc3.truth.agents[a].advertised_poses[k].y - sc3.truth.agents[a].poses[k].y);
        if (a == 1)
          CHECK(d >= 7.0 - 1e-9);
        else
          CHECK(d == 0.0);
      }
    }
  }
}

TEST_CASE("frame export/import round trip") {
  const Scenario sc = generate_scenario(base_config());
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "stalign_frames.jsonl").string();
  export_frames(sc.frames, path, true);
  const auto streams = import_frames(path);
  REQUIRE(streams.size() == sc.frames.size());
  for (size_t a = 0; a < streams.size(); ++a) {
    REQUIRE(streams[a].size() == sc.frames[a].size());
    for (size_t k = 0; k < streams[a].size(); ++k) {
      const DetectionFrame& in = streams[a][k];
      const DetectionFrame& out = sc.frames[a][k];
      CHECK(in.agent_id == out.agent_id);
      CHECK(in.local_time_ms == out.local_time_ms);
      REQUIRE(in.boxes.size() == out.boxes.size());
      for (size_t b = 0; b < in.boxes.size(); ++b) {
        CHECK(in.boxes[b].x == out.boxes[b].x);
        CHECK(in.boxes[b].y == out.boxes[b].y);
        CHECK(in.boxes[b].yaw == out.boxes[b].yaw);
        CHECK(in.boxes[b].truth_id == out.boxes[b].truth_id);
      }
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("malformed frame files are reported with their line") {
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "stalign_bad.jsonl").string();

  SUBCASE("truncated record") {
    std::ofstream out(path);
    out << R"({"agent":"a","t":0,"boxes":[[1.0,2.0,0.0]]})" << "\n";
    out << R"({"agent":"a","t":100,"boxes":[[1.0,)" << "\n";
    out.close();
    try {
      import_frames(path);
      FAIL("expected MalformedRecord");
    } catch (const MalformedRecord& e) {
      CHECK(e.line == 2);
    }
  }
  SUBCASE("non-finite center is rejected") {
    std::ofstream out(path);
    out << R"({"agent":"a","t":0,"boxes":[[null,2.0,0.0]]})" << "\n";
    out.close();
    CHECK_THROWS_AS(import_frames(path), MalformedRecord);
  }
  SUBCASE("missing file is an I/O error") {
    CHECK_THROWS_AS(import_frames("/nonexistent/frames.jsonl"), IoError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("truth export/import round trip") {
  const Scenario sc = generate_scenario(base_config());
  const auto dir = std::filesystem::temp_directory_path();
  const std::string path = (dir / "stalign_truth.json").string();
  export_truth(sc, path);
  const TruthFile tf = import_truth(path);
  CHECK(tf.truth.tau_ms == sc.truth.tau_ms);
  REQUIRE(tf.truth.agents.size() == sc.truth.agents.size());
  CHECK(tf.truth.agents[1].clock_offset_ms == sc.truth.agents[1].clock_offset_ms);
  CHECK(tf.truth.messages.size() == sc.truth.messages.size());
  REQUIRE(tf.odometry.size() == sc.odometry.size());
  CHECK(tf.odometry[0].increments.size() == sc.odometry[0].increments.size());
  for (size_t k = 0; k < sc.truth.agents[0].poses.size(); ++k) {
    CHECK(tf.truth.agents[0].poses[k].x == sc.truth.agents[0].poses[k].x);
    CHECK(tf.truth.agents[0].poses[k].theta == sc.truth.agents[0].poses[k].theta);
  }
  std::filesystem::remove(path);
}

TEST_SUITE_END();
