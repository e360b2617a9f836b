#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stalign/graph.hpp"

namespace stalign {

/// One round of edge-aware attention message passing (single head).
struct RoundParams {
  Eigen::VectorXd attn;     // 3h: scores [node_p; node_q; edge_pq]
  Eigen::MatrixXd value_w;  // h x 2h: value of [node_q; edge_pq]
  Eigen::VectorXd value_b;  // h
  Eigen::MatrixXd node_w;   // h x 2h: update of [node_p; message_p]
  Eigen::VectorXd node_b;   // h
  Eigen::MatrixXd edge_w;   // h x 3h: update of [edge_pq; node_p; node_q]
  Eigen::VectorXd edge_b;   // h
};

/// Weights and hyperparameters of the edge-feature network. Node inputs are
/// each node's sorted distance profile resampled to profile_len entries;
/// edge inputs are the pairwise distances; both are divided by input_scale
/// before entering the encoders. The output head L2-normalizes each edge
/// feature so distances live on a fixed scale and the loss margin is
/// meaningful.
struct EmbeddingParams {
  int hidden = 32;        // h
  int rounds = 2;         // L
  int feature_dim = 8;    // k
  int profile_len = 16;
  double margin = 1.0;    // contrastive margin
  double input_scale = 30.0;  // keeps scene-scale distances in tanh's active range

  Eigen::MatrixXd node_enc_w;  // h x profile_len
  Eigen::VectorXd node_enc_b;  // h
  Eigen::MatrixXd edge_enc_w;  // h x 1
  Eigen::VectorXd edge_enc_b;  // h
  std::vector<RoundParams> round;  // size L
  Eigen::MatrixXd out_w;  // k x h
  Eigen::VectorXd out_b;  // k

  /// Seeded Xavier-uniform initialization.
  static EmbeddingParams init(int hidden, int rounds, int feature_dim,
                              int profile_len, double margin, uint64_t seed);
};

/// Throws ShapeMismatch when any stored matrix disagrees with the declared
/// hyperparameters.
void check_shapes(const EmbeddingParams& p);

/// Gradients share the parameter layout.
using EmbeddingGradient = EmbeddingParams;

/// Zero-filled gradient matching p's shapes.
EmbeddingGradient zeros_like(const EmbeddingParams& p);

/// Visits every parameter block as a flat (data, size) span in a fixed
/// order; optimizers and finite-difference checks iterate through this.
void for_each_param_block(EmbeddingParams& p, const std::function<void(double*, size_t)>& f);
void for_each_param_block(const EmbeddingParams& p,
                          const std::function<void(const double*, size_t)>& f);
size_t param_count(const EmbeddingParams& p);

/// An edge (pa,qa) of graph `a` paired with an edge (pb,qb) of graph `b`.
struct EdgePairing {
  int pa, qa, pb, qb;
};

/// One supervised example: two graphs, truth-matched edge pairs M and
/// sampled non-matching edge pairs U (disjoint from M by construction).
struct TrainingPair {
  SalientObjectGraph a;
  SalientObjectGraph b;
  std::vector<EdgePairing> matched;
  std::vector<EdgePairing> unmatched;
};

/// Runs the network over one graph: n x n x k edge features, deterministic,
/// permutation-equivariant, and a function of the distance matrix only
/// (hence invariant to rigid motion of the frame). Requires n >= 2.
EdgeFeatures embed_edges(const EmbeddingParams& params, const SalientObjectGraph& g);

/// mean_M ||Wa(p,q) - Wb(e,f)|| + mean_U max(margin - ||Wa(p,q) - Wb(u,v)||, 0).
/// Throws EmptySets when the pair carries neither matched nor unmatched edges.
double contrastive_loss(const EdgeFeatures& wa, const EdgeFeatures& wb,
                        const TrainingPair& pair, double margin);

/// Mean loss over the batch and its analytic gradient (hinge subgradient at
/// the kink taken as zero).
std::pair<double, EmbeddingGradient> loss_gradient(const EmbeddingParams& params,
                                                   const std::vector<TrainingPair>& batch,
                                                   int threads = 0);

struct TrainOptions {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  /// Stop once the epoch mean loss reaches this value, when set.
  std::optional<double> stop_at_mean_loss;
};

struct TrainResult {
  EmbeddingParams params;
  std::vector<double> epoch_loss;
};

/// Minibatch gradient descent with momentum; deterministic given the seed.
/// Throws DivergenceDetected if the loss becomes non-finite.
TrainResult train(const std::vector<TrainingPair>& corpus, EmbeddingParams initial,
                  const TrainOptions& opt);

/// Edge-match decision threshold maximizing F1 on held-out pairs.
double calibrate_edge_threshold(const EmbeddingParams& params,
                                const std::vector<TrainingPair>& held_out);

struct Checkpoint {
  EmbeddingParams params;
  std::optional<double> calibrated_threshold;
};

/// Versioned JSON checkpoint; loading re-validates all shapes.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stalign
