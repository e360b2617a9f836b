#include "stalign/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stalign/errors.hpp"

namespace stalign {

void validate(const MatchConfig& cfg) {
  if (cfg.edge_threshold <= 0) throw InvalidConfig("edge_threshold must be > 0");
  if (cfg.gamma_anchors < 2) throw InvalidConfig("gamma_anchors must be >= 2");
  if (cfg.min_subgraph_size < 3) throw InvalidConfig("min_subgraph_size must be >= 3");
  if (cfg.max_seeds && *cfg.max_seeds < 1) throw InvalidConfig("max_seeds must be >= 1");
}

double edge_discrepancy(Eigen::Ref<const Eigen::VectorXd> wa,
                        Eigen::Ref<const Eigen::VectorXd> wb) {
  if (wa.size() != wb.size())
    throw DimensionMismatch("edge_discrepancy: feature dimensions differ");
  return (wa - wb).norm();
}

namespace {

// Discrepancy between edge (p,u) of A and edge (q,v) of B, oriented
// anchor-to-candidate on both sides.
inline double pair_discrepancy(const SalientObjectGraph& a, const SalientObjectGraph& b,
                               int p, int u, int q, int v) {
  return (a.features.at(p, u) - b.features.at(q, v)).norm();
}

// Inside the score, agreement below a fraction of the matching threshold is
// treated as noise-level agreement. Learned feature spaces can contract
// unrelated edges to near-identical codes; without a floor such a
// coincidence scores orders of magnitude "cleaner" than a genuine match ever
// can and min-epsilon selection prefers it over a much larger true subgraph.
constexpr double kNoiseFloorFraction = 0.3;

inline double floored(double d, const MatchConfig& cfg) {
  return std::max(d, kNoiseFloorFraction * cfg.edge_threshold);
}

struct Candidate {
  int u, v;
  double sum;  // discrepancy sum against the current anchor set
};

// Deterministic pick: smallest mean discrepancy, ties by lowest index pair.
size_t best_candidate(const std::vector<Candidate>& cands) {
  size_t best = 0;
  for (size_t i = 1; i < cands.size(); ++i) {
    if (cands[i].sum < cands[best].sum ||
        (cands[i].sum == cands[best].sum &&
         std::make_pair(cands[i].u, cands[i].v) < std::make_pair(cands[best].u, cands[best].v)))
      best = i;
  }
  return best;
}

void drop_conflicting(std::vector<Candidate>& cands, int u, int v) {
  std::erase_if(cands, [&](const Candidate& c) { return c.u == u || c.v == v; });
}

std::vector<double> sorted_distance_profile(const SalientObjectGraph& g, int node) {
  std::vector<double> row;
  row.reserve(g.size() - 1);
  for (int q = 0; q < g.size(); ++q)
    if (q != node) row.push_back(g.distances(node, q));
  std::sort(row.begin(), row.end());
  return row;
}

}  // namespace

std::vector<std::pair<int, int>> init_seeds(const SalientObjectGraph& a,
                                            const SalientObjectGraph& b,
                                            const MatchConfig& cfg) {
  std::vector<std::pair<int, int>> seeds;
  seeds.reserve(static_cast<size_t>(a.size()) * b.size());
  for (int p = 0; p < a.size(); ++p)
    for (int q = 0; q < b.size(); ++q) seeds.emplace_back(p, q);

  if (!cfg.max_seeds || static_cast<int>(seeds.size()) <= *cfg.max_seeds) return seeds;

  std::vector<std::vector<double>> prof_a(a.size()), prof_b(b.size());
  for (int p = 0; p < a.size(); ++p) prof_a[p] = sorted_distance_profile(a, p);
  for (int q = 0; q < b.size(); ++q) prof_b[q] = sorted_distance_profile(b, q);

  std::vector<double> mismatch(seeds.size(), 0.0);
  for (size_t i = 0; i < seeds.size(); ++i) {
    const auto& pa = prof_a[seeds[i].first];
    const auto& pb = prof_b[seeds[i].second];
    const size_t common = std::min(pa.size(), pb.size());
    if (common == 0) continue;
    double sum = 0;
    for (size_t j = 0; j < common; ++j) sum += std::abs(pa[j] - pb[j]);
    mismatch[i] = sum / static_cast<double>(common);
  }
  std::vector<size_t> order(seeds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t x, size_t y) { return mismatch[x] < mismatch[y]; });
  std::vector<std::pair<int, int>> ranked;
  ranked.reserve(*cfg.max_seeds);
  for (int i = 0; i < *cfg.max_seeds; ++i) ranked.push_back(seeds[order[i]]);
  return ranked;
}

AnchorList expand_anchors(const SalientObjectGraph& a, const SalientObjectGraph& b,
                          std::pair<int, int> seed, const MatchConfig& cfg) {
  AnchorList anchors;
  anchors.pairs.push_back(seed);
  if (!cfg.multi_anchor) return anchors;

  // Candidates that survive against every anchor so far. A pair rejected by
  // any anchor can never qualify later, so the list only shrinks.
  std::vector<Candidate> cands;
  for (int u = 0; u < a.size(); ++u) {
    if (u == seed.first) continue;
    for (int v = 0; v < b.size(); ++v) {
      if (v == seed.second) continue;
      const double d = pair_discrepancy(a, b, seed.first, u, seed.second, v);
      if (d < cfg.edge_threshold) cands.push_back({u, v, d});
    }
  }

  while (static_cast<int>(anchors.pairs.size()) < cfg.gamma_anchors && !cands.empty()) {
    const Candidate chosen = cands[best_candidate(cands)];
    anchors.pairs.emplace_back(chosen.u, chosen.v);
    drop_conflicting(cands, chosen.u, chosen.v);
    std::erase_if(cands, [&](Candidate& c) {
      const double d = pair_discrepancy(a, b, chosen.u, c.u, chosen.v, c.v);
      if (d >= cfg.edge_threshold) return true;
      c.sum += d;
      return false;
    });
  }
  return anchors;
}

CommonSubgraph grow_subgraph(const SalientObjectGraph& a, const SalientObjectGraph& b,
                             const AnchorList& anchors, const MatchConfig& cfg) {
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  for (const auto& [p, q] : anchors.pairs) {
    used_a[p] = true;
    used_b[q] = true;
  }

  // The inclusion test is against the fixed anchor set, so each candidate's
  // qualification and mean discrepancy are computed once up front.
  std::vector<Candidate> cands;
  for (int u = 0; u < a.size(); ++u) {
    if (used_a[u]) continue;
    for (int v = 0; v < b.size(); ++v) {
      if (used_b[v]) continue;
      double sum = 0;
      bool ok = true;
      for (const auto& [p, q] : anchors.pairs) {
        const double d = pair_discrepancy(a, b, p, u, q, v);
        if (d >= cfg.edge_threshold) {
          ok = false;
          break;
        }
        sum += d;
      }
      if (ok) cands.push_back({u, v, sum});
    }
  }

  CommonSubgraph sub;
  sub.pairs = anchors.pairs;
  while (!cands.empty()) {
    const Candidate chosen = cands[best_candidate(cands)];
    sub.pairs.emplace_back(chosen.u, chosen.v);
    drop_conflicting(cands, chosen.u, chosen.v);
  }

  auto [eps, per_edge] = score_correspondences(a, b, sub.pairs, cfg);
  sub.epsilon = eps;
  sub.edge_discrepancies = std::move(per_edge);
  return sub;
}

std::pair<double, std::vector<double>> score_correspondences(
    const SalientObjectGraph& a, const SalientObjectGraph& b,
    const std::vector<std::pair<int, int>>& pairs, const MatchConfig& cfg) {
  std::vector<double> per_edge;
  const size_t r = pairs.size();
  per_edge.reserve(r * (r - 1) / 2);
  double sum = 0;
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = i + 1; j < r; ++j) {
      const double d = pair_discrepancy(a, b, pairs[i].first, pairs[j].first,
                                        pairs[i].second, pairs[j].second);
      per_edge.push_back(d);
      sum += floored(d, cfg);
    }
  }
  const double eps = r == 0 ? 0.0 : sum / std::pow(static_cast<double>(r), cfg.p_exp);
  return {eps, std::move(per_edge)};
}

std::optional<CommonSubgraph> find_common_subgraph(const SalientObjectGraph& a,
                                                   const SalientObjectGraph& b,
                                                   const MatchConfig& cfg) {
  validate(cfg);
  if (a.size() == 0 || b.size() == 0) return std::nullopt;

  std::optional<CommonSubgraph> best;
  for (const auto& seed : init_seeds(a, b, cfg)) {
    const AnchorList anchors = expand_anchors(a, b, seed, cfg);
    CommonSubgraph sub = grow_subgraph(a, b, anchors, cfg);
    if (sub.size() < cfg.min_subgraph_size) continue;
    if (!best || sub.epsilon < best->epsilon) best = std::move(sub);
  }
  return best;
}

namespace {

struct OracleState {
  const SalientObjectGraph& a;
  const SalientObjectGraph& b;
  const MatchConfig& cfg;
  std::vector<std::pair<int, int>> current;
  std::vector<bool> used_b;
  double sum = 0.0;
  int best_size = 0;
  double best_eps = std::numeric_limits<double>::infinity();
  std::vector<std::pair<int, int>> best_pairs;

  void consider_leaf() {
    const size_t r = current.size();
    const double eps =
        r == 0 ? 0.0 : sum / std::pow(static_cast<double>(r), cfg.p_exp);
    if (static_cast<int>(r) > best_size ||
        (static_cast<int>(r) == best_size && eps < best_eps)) {
      best_size = static_cast<int>(r);
      best_eps = eps;
      best_pairs = current;
    }
  }

  void search(int next_a) {
    if (next_a == a.size()) {
      consider_leaf();
      return;
    }
    // Even mapping every remaining node of A cannot beat the best found.
    if (static_cast<int>(current.size()) + (a.size() - next_a) < best_size) return;

    for (int v = 0; v < b.size(); ++v) {
      if (used_b[v]) continue;
      double add = 0;
      bool ok = true;
      for (const auto& [p, q] : current) {
        const double d = pair_discrepancy(a, b, p, next_a, q, v);
        if (d >= cfg.edge_threshold) {
          ok = false;
          break;
        }
        add += floored(d, cfg);
      }
      if (!ok) continue;
      current.emplace_back(next_a, v);
      used_b[v] = true;
      sum += add;
      search(next_a + 1);
      sum -= add;
      used_b[v] = false;
      current.pop_back();
    }
    search(next_a + 1);  // leave next_a unmatched
  }
};

}  // namespace

CommonSubgraph oracle_max_common_subgraph(const SalientObjectGraph& a,
                                          const SalientObjectGraph& b,
                                          const MatchConfig& cfg) {
  constexpr int kMaxNodes = 9;
  if (a.size() > kMaxNodes || b.size() > kMaxNodes)
    throw TooLarge("oracle_max_common_subgraph: exhaustive search capped at 9 nodes per side");

  OracleState state{a, b, cfg, {}, std::vector<bool>(b.size(), false), 0.0, 0,
                    std::numeric_limits<double>::infinity(), {}};
  state.search(0);

  CommonSubgraph sub;
  sub.pairs = state.best_pairs;
  auto [eps, per_edge] = score_correspondences(a, b, sub.pairs, cfg);
  sub.epsilon = eps;
  sub.edge_discrepancies = std::move(per_edge);
  return sub;
}

}  // namespace stalign
