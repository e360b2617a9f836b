#pragma once

// Shared helpers for the test suites: seeded generators and rough-equality
// checks. Oracles that double-check production code live in the individual
// test files, implemented independently of the code under test.

#include <cmath>
#include <string>
#include <vector>

#include "stalign/geometry.hpp"
#include "stalign/graph.hpp"
#include "stalign/rng.hpp"
#include "stalign/simulator.hpp"

namespace test_support {

using namespace stalign;

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline bool transforms_near(const RigidTransform2D& a, const RigidTransform2D& b,
                            double tol) {
  return near(wrap_angle(a.rotation - b.rotation), 0.0, tol) && near(a.tx, b.tx, tol) &&
         near(a.ty, b.ty, tol);
}

inline RigidTransform2D random_transform(Rng& rng, double span = 10.0) {
  return {wrap_angle(rng.uniform(-kPi, kPi)), rng.uniform(-span, span),
          rng.uniform(-span, span)};
}

inline PointSet2D random_points(Rng& rng, int n, double span = 20.0) {
  PointSet2D pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) pts.push_back({rng.uniform(-span, span), rng.uniform(-span, span)});
  return pts;
}

inline DetectionFrame frame_from_points(const PointSet2D& pts, const std::string& agent = "a",
                                        double t_ms = 0.0) {
  DetectionFrame f;
  f.agent_id = agent;
  f.local_time_ms = t_ms;
  for (size_t i = 0; i < pts.size(); ++i)
    f.boxes.push_back({pts[i].x, pts[i].y, 0.0, static_cast<int>(i)});
  return f;
}

// Two views of one scene: graph A sees the points as-is; graph B sees them
// through a rigid transform with optional per-endpoint jitter and extra
// unshared points on both sides. Returns the truth correspondence between
// node indices of the two built graphs.
struct ScenePair {
  SalientObjectGraph a;
  SalientObjectGraph b;
  std::vector<std::pair<int, int>> truth;  // (node in a, node in b)
};

inline ScenePair make_scene_pair(Rng& rng, int shared, int extra_a, int extra_b,
                                 double jitter, double span = 20.0) {
  const PointSet2D common = random_points(rng, shared, span);
  const RigidTransform2D t = random_transform(rng);

  DetectionFrame fa, fb;
  fa.agent_id = "a";
  fb.agent_id = "b";
  for (int i = 0; i < shared; ++i) {
    fa.boxes.push_back({common[i].x + rng.normal(jitter), common[i].y + rng.normal(jitter),
                        0.0, i});
    const Point2D m = apply(t, common[i]);
    fb.boxes.push_back({m.x + rng.normal(jitter), m.y + rng.normal(jitter), 0.0, i});
  }
  for (int i = 0; i < extra_a; ++i)
    fa.boxes.push_back({rng.uniform(-span, span), rng.uniform(-span, span), 0.0, std::nullopt});
  for (int i = 0; i < extra_b; ++i)
    fb.boxes.push_back({rng.uniform(-span, span), rng.uniform(-span, span), 0.0, std::nullopt});

  ScenePair sp;
  sp.a = build_graph(fa);
  sp.b = build_graph(fb);
  for (int ia = 0; ia < sp.a.size(); ++ia) {
    const auto& ta = fa.boxes[sp.a.nodes[ia].source_index].truth_id;
    if (!ta) continue;
    for (int ib = 0; ib < sp.b.size(); ++ib) {
      const auto& tb = fb.boxes[sp.b.nodes[ib].source_index].truth_id;
      if (tb && *tb == *ta) sp.truth.emplace_back(ia, ib);
    }
  }
  return sp;
}

}  // namespace test_support
