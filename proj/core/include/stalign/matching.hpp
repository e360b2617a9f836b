#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "stalign/graph.hpp"

namespace stalign {

struct MatchConfig {
  /// Max feature-space distance for two edges to count as the same edge
  /// (meters in handcrafted mode).
  double edge_threshold = 0.5;
  /// Anchor list capacity.
  int gamma_anchors = 4;
  /// Exponent of the subgraph-size normalization in the score. The sum runs
  /// over all size*(size-1)/2 internal edges, so the exponent must exceed 2
  /// for larger subgraphs to score better at equal mean discrepancy; 4 keeps
  /// that preference decisive once the noise floor flattens clean matches.
  double p_exp = 4.0;
  /// Subgraphs smaller than this are never reported as matches.
  int min_subgraph_size = 4;
  /// Optional cap on seeds explored (profile-ranked prefix); unset = all n*m.
  std::optional<int> max_seeds;
  /// false = the ablation that keeps the anchor list at just the seed pair.
  bool multi_anchor = true;
};

/// Throws InvalidConfig when a field violates its documented range.
void validate(const MatchConfig& cfg);

/// Mutually consistent candidate node pairings used as the consistency
/// reference during subgraph growth. No node repeats on either side.
struct AnchorList {
  std::vector<std::pair<int, int>> pairs;
};

/// A partial injective correspondence between two graphs plus its
/// discrepancy score: epsilon = sum(edge discrepancies) / size^p over every
/// unordered pair of correspondences. Inside the sum each discrepancy is
/// clamped from below at 0.3 * edge_threshold: agreement tighter than the
/// noise level carries no extra evidence, so a tiny coincidental subgraph
/// cannot out-score a large genuine match.
struct CommonSubgraph {
  std::vector<std::pair<int, int>> pairs;
  double epsilon = 0.0;
  /// Raw per-edge discrepancies in (i, j) combination order, i < j; epsilon
  /// is recomputable from these under the scoring rule above.
  std::vector<double> edge_discrepancies;

  int size() const { return static_cast<int>(pairs.size()); }
};

/// L2 distance between two edge-feature vectors (absolute difference for
/// k=1). Throws DimensionMismatch on unequal lengths.
double edge_discrepancy(Eigen::Ref<const Eigen::VectorXd> wa,
                        Eigen::Ref<const Eigen::VectorXd> wb);

/// All n*m candidate seed pairs in row-major order. With cfg.max_seeds set,
/// the prefix of seeds ranked by sorted-distance-profile mismatch instead.
std::vector<std::pair<int, int>> init_seeds(const SalientObjectGraph& a,
                                            const SalientObjectGraph& b,
                                            const MatchConfig& cfg);

/// Grows an anchor list from one seed pair. A candidate pair joins only if
/// its edges to every anchor already in the list agree within
/// edge_threshold; candidates are taken smallest-mean-discrepancy first
/// (ties: lowest index pair) until gamma_anchors is reached or no candidate
/// qualifies.
AnchorList expand_anchors(const SalientObjectGraph& a, const SalientObjectGraph& b,
                          std::pair<int, int> seed, const MatchConfig& cfg);

/// Greedy subgraph growth around a fixed anchor list: candidates whose edges
/// to all anchors agree within edge_threshold are admitted
/// smallest-mean-discrepancy first, subject to injectivity. The result
/// always contains the anchors.
CommonSubgraph grow_subgraph(const SalientObjectGraph& a, const SalientObjectGraph& b,
                             const AnchorList& anchors, const MatchConfig& cfg);

/// The full search: seed, expand, grow for every seed, then pick the
/// subgraph with minimal epsilon. Returns nullopt (no match, not an error)
/// when the best subgraph is smaller than cfg.min_subgraph_size.
std::optional<CommonSubgraph> find_common_subgraph(const SalientObjectGraph& a,
                                                   const SalientObjectGraph& b,
                                                   const MatchConfig& cfg);

/// Exhaustive reference: the maximum-cardinality correspondence in which
/// every internal corresponding edge pair agrees within edge_threshold,
/// ties broken by minimal epsilon. Throws TooLarge above 9 nodes per side.
CommonSubgraph oracle_max_common_subgraph(const SalientObjectGraph& a,
                                          const SalientObjectGraph& b,
                                          const MatchConfig& cfg);

/// Recompute (epsilon, per-edge discrepancies) for an explicit
/// correspondence set under the same scoring rule the search uses.
std::pair<double, std::vector<double>> score_correspondences(
    const SalientObjectGraph& a, const SalientObjectGraph& b,
    const std::vector<std::pair<int, int>>& pairs, const MatchConfig& cfg);

}  // namespace stalign
