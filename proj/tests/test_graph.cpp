#include <doctest.h>

#include "stalign/errors.hpp"
#include "stalign/graph.hpp"
#include "stalign/matching.hpp"
#include "stalign/rng.hpp"
#include "support.hpp"

using namespace stalign;
using test_support::frame_from_points;
using test_support::random_points;
using test_support::random_transform;

TEST_SUITE_BEGIN("graph");

TEST_CASE("single box gives a one-node graph with an empty edge set") {
  DetectionFrame f;
  f.agent_id = "a";
  f.boxes.push_back({1.0, 2.0, 0.0, 0});
  const SalientObjectGraph g = build_graph(f);
  CHECK(g.size() == 1);
  CHECK(g.distances.rows() == 1);
  CHECK(g.distances(0, 0) == 0.0);
  CHECK(g.features.k == 1);
}

TEST_CASE("empty frame is rejected") {
  DetectionFrame f;
  f.agent_id = "a";
  CHECK_THROWS_AS(build_graph(f), EmptyFrame);
}

TEST_CASE("3-4-5 triangle distance") {
  const SalientObjectGraph g = build_graph(frame_from_points({{0, 0}, {3, 4}}));
  CHECK(g.distances(0, 1) == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(g.distances(1, 0) == doctest::Approx(5.0).epsilon(1e-12));
}

// Brute-force oracle: recompute every pairwise distance from node
// coordinates with the plain formula.
TEST_CASE("distance matrix matches an independently computed one") {
  Rng rng(23);
  const SalientObjectGraph g = build_graph(frame_from_points(random_points(rng, 20)));
  for (int p = 0; p < g.size(); ++p) {
    for (int q = 0; q < g.size(); ++q) {
      const double dx = g.nodes[p].x - g.nodes[q].x;
      const double dy = g.nodes[p].y - g.nodes[q].y;
      CHECK(g.distances(p, q) == doctest::Approx(std::sqrt(dx * dx + dy * dy)).epsilon(1e-12));
      CHECK(g.distances(p, q) == g.distances(q, p));
    }
    CHECK(g.distances(p, p) == 0.0);
  }
}

TEST_CASE("handcrafted features mirror the distance matrix symmetrically") {
  Rng rng(29);
  const SalientObjectGraph g = build_graph(frame_from_points(random_points(rng, 8)));
  for (int p = 0; p < g.size(); ++p)
    for (int q = 0; q < g.size(); ++q)
      if (p != q) {
        CHECK(g.features.at(p, q)(0) == g.distances(p, q));
        CHECK(g.features.at(p, q)(0) == g.features.at(q, p)(0));
      }
}

TEST_CASE("node order is deterministic regardless of input order") {
  Rng rng(31);
  const PointSet2D pts = random_points(rng, 10);
  PointSet2D shuffled = pts;
  std::swap(shuffled[0], shuffled[7]);
  std::swap(shuffled[2], shuffled[9]);
  const SalientObjectGraph a = build_graph(frame_from_points(pts));
  const SalientObjectGraph b = build_graph(frame_from_points(shuffled));
  REQUIRE(a.size() == b.size());
  for (int i = 0; i < a.size(); ++i) {
    CHECK(a.nodes[i].x == b.nodes[i].x);
    CHECK(a.nodes[i].y == b.nodes[i].y);
  }
  CHECK((a.distances - b.distances).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("distances are invariant under rigid motion of the frame") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const PointSet2D pts = random_points(rng, 9);
    const PointSet2D moved = apply_transform(random_transform(rng), pts);
    const SalientObjectGraph a = build_graph(frame_from_points(pts));
    const SalientObjectGraph b = build_graph(frame_from_points(moved));
    // Node order may differ after the motion; compare through the
    // source-index correspondence.
    Correspondence corr;
    std::vector<int> where_b(b.size());
    for (int i = 0; i < b.size(); ++i) where_b[b.nodes[i].source_index] = i;
    for (int i = 0; i < a.size(); ++i)
      corr.emplace_back(i, where_b[a.nodes[i].source_index]);
    CHECK(graph_invariance_check(a, b, corr) <= 1e-9);
  }
}

TEST_CASE("invariance check flags bad indices") {
  Rng rng(41);
  const SalientObjectGraph g = build_graph(frame_from_points(random_points(rng, 4)));
  CHECK_THROWS_AS(graph_invariance_check(g, g, {{0, 7}}), BadCorrespondence);
}

TEST_CASE("jittered views stay within the two-endpoint jitter bound") {
  Rng rng(43);
  int within = 0;
  const int trials = 1000;
  const double sigma = 0.1;
  for (int t = 0; t < trials; ++t) {
    const PointSet2D base = random_points(rng, 6);
    DetectionFrame fa, fb;
    fa.agent_id = "a";
    fb.agent_id = "b";
    for (size_t i = 0; i < base.size(); ++i) {
      double jx, jy;
      normal_in_disc(rng, sigma, 1.5 * sigma, jx, jy);
      fa.boxes.push_back({base[i].x + jx, base[i].y + jy, 0.0, static_cast<int>(i)});
      normal_in_disc(rng, sigma, 1.5 * sigma, jx, jy);
      fb.boxes.push_back({base[i].x + jx, base[i].y + jy, 0.0, static_cast<int>(i)});
    }
    const SalientObjectGraph ga = build_graph(fa);
    const SalientObjectGraph gb = build_graph(fb);
    Correspondence corr;
    for (int ia = 0; ia < ga.size(); ++ia)
      for (int ib = 0; ib < gb.size(); ++ib)
        if (ga.nodes[ia].source_index == gb.nodes[ib].source_index)
          corr.emplace_back(ia, ib);
    // Each distance involves two endpoints, each jittered on both sides.
    if (graph_invariance_check(ga, gb, corr) <= 4 * 1.5 * sigma + 1e-9) ++within;
  }
  CHECK(within >= static_cast<int>(0.99 * trials));
}

TEST_CASE("wrong correspondences on generic positions exceed the threshold") {
  Rng rng(47);
  int exceeded = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    const SalientObjectGraph g = build_graph(frame_from_points(random_points(rng, 6)));
    // Swap two nodes in an otherwise correct self-correspondence.
    Correspondence corr;
    for (int i = 0; i < g.size(); ++i) corr.emplace_back(i, i);
    std::swap(corr[1].second, corr[4].second);
    if (graph_invariance_check(g, g, corr) > 0.5) ++exceeded;
  }
  CHECK(exceeded >= static_cast<int>(0.99 * trials));
}

TEST_SUITE_END();
