#include "stalign/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <thread>

#include <json.hpp>

#include "stalign/errors.hpp"
#include "stalign/rng.hpp"

namespace stalign {

namespace {

constexpr double kLeakySlope = 0.2;
constexpr double kNormEps = 1e-12;

Eigen::MatrixXd xavier(int rows, int cols, Rng& rng) {
  const double lim = std::sqrt(6.0 / (rows + cols));
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(-lim, lim);
  return m;
}

}  // namespace

EmbeddingParams EmbeddingParams::init(int hidden, int rounds, int feature_dim,
                                      int profile_len, double margin, uint64_t seed) {
  Rng rng = Rng(seed).fork(11);
  EmbeddingParams p;
  p.hidden = hidden;
  p.rounds = rounds;
  p.feature_dim = feature_dim;
  p.profile_len = profile_len;
  p.margin = margin;
  p.node_enc_w = xavier(hidden, profile_len, rng);
  p.node_enc_b = Eigen::VectorXd::Zero(hidden);
  p.edge_enc_w = xavier(hidden, 1, rng);
  p.edge_enc_b = Eigen::VectorXd::Zero(hidden);
  p.round.resize(rounds);
  for (auto& r : p.round) {
    r.attn = xavier(3 * hidden, 1, rng).col(0);
    r.value_w = xavier(hidden, 2 * hidden, rng);
    r.value_b = Eigen::VectorXd::Zero(hidden);
    r.node_w = xavier(hidden, 2 * hidden, rng);
    r.node_b = Eigen::VectorXd::Zero(hidden);
    r.edge_w = xavier(hidden, 3 * hidden, rng);
    r.edge_b = Eigen::VectorXd::Zero(hidden);
  }
  p.out_w = xavier(feature_dim, hidden, rng);
  p.out_b = Eigen::VectorXd::Zero(feature_dim);
  check_shapes(p);
  return p;
}

void check_shapes(const EmbeddingParams& p) {
  const int h = p.hidden;
  auto fail = [](const char* what) { throw ShapeMismatch(what); };
  if (h < 1 || p.rounds < 1 || p.feature_dim < 1 || p.profile_len < 1)
    fail("embedding: hyperparameters must be positive");
  if (p.margin <= 0 || p.input_scale <= 0)
    fail("embedding: margin and input_scale must be positive");
  if (p.node_enc_w.rows() != h || p.node_enc_w.cols() != p.profile_len)
    fail("embedding: node encoder weight shape");
  if (p.node_enc_b.size() != h) fail("embedding: node encoder bias shape");
  if (p.edge_enc_w.rows() != h || p.edge_enc_w.cols() != 1)
    fail("embedding: edge encoder weight shape");
  if (p.edge_enc_b.size() != h) fail("embedding: edge encoder bias shape");
  if (static_cast<int>(p.round.size()) != p.rounds) fail("embedding: round count");
  for (const auto& r : p.round) {
    if (r.attn.size() != 3 * h) fail("embedding: attention vector shape");
    if (r.value_w.rows() != h || r.value_w.cols() != 2 * h) fail("embedding: value shape");
    if (r.value_b.size() != h) fail("embedding: value bias shape");
    if (r.node_w.rows() != h || r.node_w.cols() != 2 * h) fail("embedding: node update shape");
    if (r.node_b.size() != h) fail("embedding: node bias shape");
    if (r.edge_w.rows() != h || r.edge_w.cols() != 3 * h) fail("embedding: edge update shape");
    if (r.edge_b.size() != h) fail("embedding: edge bias shape");
  }
  if (p.out_w.rows() != p.feature_dim || p.out_w.cols() != h)
    fail("embedding: output head shape");
  if (p.out_b.size() != p.feature_dim) fail("embedding: output bias shape");
}

EmbeddingGradient zeros_like(const EmbeddingParams& p) {
  EmbeddingGradient g = p;
  for_each_param_block(g, [](double* data, size_t size) {
    std::fill(data, data + size, 0.0);
  });
  return g;
}

void for_each_param_block(EmbeddingParams& p, const std::function<void(double*, size_t)>& f) {
  f(p.node_enc_w.data(), p.node_enc_w.size());
  f(p.node_enc_b.data(), p.node_enc_b.size());
  f(p.edge_enc_w.data(), p.edge_enc_w.size());
  f(p.edge_enc_b.data(), p.edge_enc_b.size());
  for (auto& r : p.round) {
    f(r.attn.data(), r.attn.size());
    f(r.value_w.data(), r.value_w.size());
    f(r.value_b.data(), r.value_b.size());
    f(r.node_w.data(), r.node_w.size());
    f(r.node_b.data(), r.node_b.size());
    f(r.edge_w.data(), r.edge_w.size());
    f(r.edge_b.data(), r.edge_b.size());
  }
  f(p.out_w.data(), p.out_w.size());
  f(p.out_b.data(), p.out_b.size());
}

void for_each_param_block(const EmbeddingParams& p,
                          const std::function<void(const double*, size_t)>& f) {
  for_each_param_block(const_cast<EmbeddingParams&>(p),
                       [&](double* data, size_t size) { f(data, size); });
}

size_t param_count(const EmbeddingParams& p) {
  size_t total = 0;
  for_each_param_block(p, [&](const double*, size_t size) { total += size; });
  return total;
}

namespace {

// Column i holds node i's sorted off-diagonal distances, linearly resampled
// to profile_len entries and divided by input_scale.
Eigen::MatrixXd node_profiles(const SalientObjectGraph& g, int profile_len, double scale) {
  const int n = g.size();
  Eigen::MatrixXd out(profile_len, n);
  std::vector<double> row;
  for (int i = 0; i < n; ++i) {
    row.clear();
    for (int q = 0; q < n; ++q)
      if (q != i) row.push_back(g.distances(i, q));
    std::sort(row.begin(), row.end());
    const int len = static_cast<int>(row.size());
    for (int j = 0; j < profile_len; ++j) {
      double v;
      if (len == 1 || profile_len == 1) {
        v = row[std::min(len - 1, j)];
      } else {
        const double pos = static_cast<double>(j) * (len - 1) / (profile_len - 1);
        const int i0 = std::min(static_cast<int>(pos), len - 2);
        const double frac = pos - i0;
        v = (1.0 - frac) * row[i0] + frac * row[i0 + 1];
      }
      out(j, i) = v / scale;
    }
  }
  return out;
}

struct RoundCache {
  Eigen::MatrixXd logits;  // n x n, diagonal unused
  Eigen::MatrixXd alpha;   // n x n softmax over q != p per row
  Eigen::MatrixXd value;   // h x n*n, column p*n+q
  Eigen::MatrixXd msg;     // h x n
  Eigen::MatrixXd x;       // h x n, post-update node states
  Eigen::MatrixXd e;       // h x n*n, post-update edge states
};

struct ForwardCache {
  Eigen::MatrixXd profiles;  // profile_len x n
  Eigen::MatrixXd x0;        // h x n
  Eigen::MatrixXd e0;        // h x n*n
  std::vector<RoundCache> rounds;
  Eigen::MatrixXd y;         // k x n*n, pre-normalization
  Eigen::VectorXd ynorm;     // n*n
};

ForwardCache run_forward(const EmbeddingParams& p, const SalientObjectGraph& g) {
  const int n = g.size();
  const int h = p.hidden;
  const int nn = n * n;

  ForwardCache fc;
  fc.profiles = node_profiles(g, p.profile_len, p.input_scale);
  fc.x0 = ((p.node_enc_w * fc.profiles).colwise() + p.node_enc_b).array().tanh();

  fc.e0 = Eigen::MatrixXd::Zero(h, nn);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b)
        fc.e0.col(a * n + b) =
            (p.edge_enc_w.col(0) * (g.distances(a, b) / p.input_scale) + p.edge_enc_b)
                .array()
                .tanh();

  const Eigen::MatrixXd* x = &fc.x0;
  const Eigen::MatrixXd* e = &fc.e0;
  fc.rounds.resize(p.rounds);
  for (int l = 0; l < p.rounds; ++l) {
    const RoundParams& rp = p.round[l];
    RoundCache& rc = fc.rounds[l];
    rc.logits = Eigen::MatrixXd::Zero(n, n);
    rc.alpha = Eigen::MatrixXd::Zero(n, n);
    rc.value = Eigen::MatrixXd::Zero(h, nn);
    rc.msg = Eigen::MatrixXd::Zero(h, n);

    const auto a_p = rp.attn.segment(0, h);
    const auto a_q = rp.attn.segment(h, h);
    const auto a_e = rp.attn.segment(2 * h, h);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (a == b) continue;
        const double z =
            a_p.dot(x->col(a)) + a_q.dot(x->col(b)) + a_e.dot(e->col(a * n + b));
        rc.logits(a, b) = z >= 0 ? z : kLeakySlope * z;  // leaky relu
        rc.value.col(a * n + b) =
            rp.value_w.leftCols(h) * x->col(b) +
            rp.value_w.rightCols(h) * e->col(a * n + b) + rp.value_b;
      }
    }
    for (int a = 0; a < n; ++a) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int b = 0; b < n; ++b)
        if (b != a) mx = std::max(mx, rc.logits(a, b));
      double denom = 0;
      for (int b = 0; b < n; ++b)
        if (b != a) denom += std::exp(rc.logits(a, b) - mx);
      for (int b = 0; b < n; ++b) {
        if (b == a) continue;
        rc.alpha(a, b) = std::exp(rc.logits(a, b) - mx) / denom;
        rc.msg.col(a) += rc.alpha(a, b) * rc.value.col(a * n + b);
      }
    }

    rc.x = Eigen::MatrixXd(h, n);
    for (int a = 0; a < n; ++a)
      rc.x.col(a) = (rp.node_w.leftCols(h) * x->col(a) +
                     rp.node_w.rightCols(h) * rc.msg.col(a) + rp.node_b)
                        .array()
                        .tanh();

    rc.e = Eigen::MatrixXd::Zero(h, nn);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b)
          rc.e.col(a * n + b) = (rp.edge_w.leftCols(h) * e->col(a * n + b) +
                                 rp.edge_w.middleCols(h, h) * rc.x.col(a) +
                                 rp.edge_w.rightCols(h) * rc.x.col(b) + rp.edge_b)
                                    .array()
                                    .tanh();
    x = &rc.x;
    e = &rc.e;
  }

  fc.y = Eigen::MatrixXd::Zero(p.feature_dim, nn);
  fc.ynorm = Eigen::VectorXd::Ones(nn);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      const int c = a * n + b;
      fc.y.col(c) = p.out_w * e->col(c) + p.out_b;
      fc.ynorm(c) = std::sqrt(fc.y.col(c).squaredNorm() + kNormEps);
    }
  }
  return fc;
}

EdgeFeatures features_from_cache(const EmbeddingParams& p, int n, const ForwardCache& fc) {
  EdgeFeatures out = EdgeFeatures::zeros(n, p.feature_dim);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      const int c = a * n + b;
      Eigen::Map<Eigen::VectorXd>(out.mut(a, b), p.feature_dim) = fc.y.col(c) / fc.ynorm(c);
    }
  }
  return out;
}

// Reverse pass: dW is k x n*n in normalized-feature space; accumulates into
// grad (same layout as the parameters).
void run_backward(const EmbeddingParams& p, const SalientObjectGraph& g,
                  const ForwardCache& fc, const Eigen::MatrixXd& dW,
                  EmbeddingGradient& grad) {
  const int n = g.size();
  const int h = p.hidden;
  const int nn = n * n;

  const Eigen::MatrixXd& e_last = p.rounds > 0 ? fc.rounds.back().e : fc.e0;

  // Through the normalization and output head.
  Eigen::MatrixXd de = Eigen::MatrixXd::Zero(h, nn);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      const int c = a * n + b;
      const double s = fc.ynorm(c);
      const Eigen::VectorXd y = fc.y.col(c);
      const Eigen::VectorXd dcol = dW.col(c);
      const Eigen::VectorXd dy = dcol / s - y * (y.dot(dcol)) / (s * s * s);
      grad.out_w += dy * e_last.col(c).transpose();
      grad.out_b += dy;
      de.col(c) += p.out_w.transpose() * dy;
    }
  }

  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(h, n);
  for (int l = p.rounds - 1; l >= 0; --l) {
    const RoundParams& rp = p.round[l];
    const RoundCache& rc = fc.rounds[l];
    const Eigen::MatrixXd& x_prev = l > 0 ? fc.rounds[l - 1].x : fc.x0;
    const Eigen::MatrixXd& e_prev = l > 0 ? fc.rounds[l - 1].e : fc.e0;
    RoundParams& gr = grad.round[l];

    // Edge update: e_new = tanh(edge_w [e_prev; x_new_p; x_new_q] + b).
    Eigen::MatrixXd de_prev = Eigen::MatrixXd::Zero(h, nn);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (a == b) continue;
        const int c = a * n + b;
        const Eigen::VectorXd df =
            (de.col(c).array() * (1.0 - rc.e.col(c).array().square())).matrix();
        gr.edge_w.leftCols(h) += df * e_prev.col(c).transpose();
        gr.edge_w.middleCols(h, h) += df * rc.x.col(a).transpose();
        gr.edge_w.rightCols(h) += df * rc.x.col(b).transpose();
        gr.edge_b += df;
        de_prev.col(c) += rp.edge_w.leftCols(h).transpose() * df;
        dx.col(a) += rp.edge_w.middleCols(h, h).transpose() * df;
        dx.col(b) += rp.edge_w.rightCols(h).transpose() * df;
      }
    }

    // Node update: x_new = tanh(node_w [x_prev; msg] + b).
    Eigen::MatrixXd dx_prev = Eigen::MatrixXd::Zero(h, n);
    Eigen::MatrixXd dmsg = Eigen::MatrixXd::Zero(h, n);
    for (int a = 0; a < n; ++a) {
      const Eigen::VectorXd dg =
          (dx.col(a).array() * (1.0 - rc.x.col(a).array().square())).matrix();
      gr.node_w.leftCols(h) += dg * x_prev.col(a).transpose();
      gr.node_w.rightCols(h) += dg * rc.msg.col(a).transpose();
      gr.node_b += dg;
      dx_prev.col(a) += rp.node_w.leftCols(h).transpose() * dg;
      dmsg.col(a) = rp.node_w.rightCols(h).transpose() * dg;
    }

    // Messages: msg_p = sum_q alpha(p,q) value(p,q), then softmax and the
    // leaky-relu'd attention logits.
    const auto a_p = rp.attn.segment(0, h);
    const auto a_q = rp.attn.segment(h, h);
    const auto a_e = rp.attn.segment(2 * h, h);
    for (int a = 0; a < n; ++a) {
      Eigen::VectorXd dalpha = Eigen::VectorXd::Zero(n);
      for (int b = 0; b < n; ++b) {
        if (b == a) continue;
        const int c = a * n + b;
        dalpha(b) = dmsg.col(a).dot(rc.value.col(c));
        const Eigen::VectorXd dval = rc.alpha(a, b) * dmsg.col(a);
        gr.value_w.leftCols(h) += dval * x_prev.col(b).transpose();
        gr.value_w.rightCols(h) += dval * e_prev.col(c).transpose();
        gr.value_b += dval;
        dx_prev.col(b) += rp.value_w.leftCols(h).transpose() * dval;
        de_prev.col(c) += rp.value_w.rightCols(h).transpose() * dval;
      }
      double inner = 0;
      for (int b = 0; b < n; ++b)
        if (b != a) inner += rc.alpha(a, b) * dalpha(b);
      for (int b = 0; b < n; ++b) {
        if (b == a) continue;
        const int c = a * n + b;
        const double ds = rc.alpha(a, b) * (dalpha(b) - inner);
        const double dz = rc.logits(a, b) >= 0 ? ds : kLeakySlope * ds;
        gr.attn.segment(0, h) += dz * x_prev.col(a);
        gr.attn.segment(h, h) += dz * x_prev.col(b);
        gr.attn.segment(2 * h, h) += dz * e_prev.col(c);
        dx_prev.col(a) += dz * a_p;
        dx_prev.col(b) += dz * a_q;
        de_prev.col(c) += dz * a_e;
      }
    }

    dx = std::move(dx_prev);
    de = std::move(de_prev);
  }

  // Encoders.
  for (int a = 0; a < n; ++a) {
    const Eigen::VectorXd d0 =
        (dx.col(a).array() * (1.0 - fc.x0.col(a).array().square())).matrix();
    grad.node_enc_w += d0 * fc.profiles.col(a).transpose();
    grad.node_enc_b += d0;
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      const int c = a * n + b;
      const Eigen::VectorXd d0 =
          (de.col(c).array() * (1.0 - fc.e0.col(c).array().square())).matrix();
      grad.edge_enc_w.col(0) += d0 * (g.distances(a, b) / p.input_scale);
      grad.edge_enc_b += d0;
    }
  }
}

void validate_pairing(const TrainingPair& pair) {
  const int na = pair.a.size(), nb = pair.b.size();
  auto check = [&](const EdgePairing& e) {
    if (e.pa < 0 || e.pa >= na || e.qa < 0 || e.qa >= na || e.pa == e.qa ||
        e.pb < 0 || e.pb >= nb || e.qb < 0 || e.qb >= nb || e.pb == e.qb)
      throw BadCorrespondence("training pair: edge index out of range");
  };
  for (const auto& e : pair.matched) check(e);
  for (const auto& e : pair.unmatched) check(e);
}

}  // namespace

EdgeFeatures embed_edges(const EmbeddingParams& params, const SalientObjectGraph& g) {
  check_shapes(params);
  if (g.size() < 2) throw ShapeMismatch("embed_edges: graph needs at least 2 nodes");
  ForwardCache fc = run_forward(params, g);
  return features_from_cache(params, g.size(), fc);
}

double contrastive_loss(const EdgeFeatures& wa, const EdgeFeatures& wb,
                        const TrainingPair& pair, double margin) {
  if (pair.matched.empty() && pair.unmatched.empty())
    throw EmptySets("contrastive_loss: both matched and unmatched sets empty");
  validate_pairing(pair);
  double loss = 0;
  if (!pair.matched.empty()) {
    double sum = 0;
    for (const auto& e : pair.matched)
      sum += (wa.at(e.pa, e.qa) - wb.at(e.pb, e.qb)).norm();
    loss += sum / static_cast<double>(pair.matched.size());
  }
  if (!pair.unmatched.empty()) {
    double sum = 0;
    for (const auto& e : pair.unmatched)
      sum += std::max(margin - (wa.at(e.pa, e.qa) - wb.at(e.pb, e.qb)).norm(), 0.0);
    loss += sum / static_cast<double>(pair.unmatched.size());
  }
  return loss;
}

namespace {

// Loss for one training pair plus its parameter gradient.
double pair_loss_gradient(const EmbeddingParams& params, const TrainingPair& pair,
                          EmbeddingGradient& grad) {
  validate_pairing(pair);
  const int na = pair.a.size(), nb = pair.b.size();
  ForwardCache fa = run_forward(params, pair.a);
  ForwardCache fb = run_forward(params, pair.b);
  EdgeFeatures wa = features_from_cache(params, na, fa);
  EdgeFeatures wb = features_from_cache(params, nb, fb);

  Eigen::MatrixXd dwa = Eigen::MatrixXd::Zero(params.feature_dim, na * na);
  Eigen::MatrixXd dwb = Eigen::MatrixXd::Zero(params.feature_dim, nb * nb);
  double loss = 0;

  const double wm = pair.matched.empty() ? 0.0 : 1.0 / pair.matched.size();
  for (const auto& e : pair.matched) {
    const Eigen::VectorXd diff = wa.at(e.pa, e.qa) - wb.at(e.pb, e.qb);
    const double d = diff.norm();
    loss += wm * d;
    if (d > 0) {
      const Eigen::VectorXd dir = diff / d * wm;
      dwa.col(e.pa * na + e.qa) += dir;
      dwb.col(e.pb * nb + e.qb) -= dir;
    }
  }
  const double wu = pair.unmatched.empty() ? 0.0 : 1.0 / pair.unmatched.size();
  for (const auto& e : pair.unmatched) {
    const Eigen::VectorXd diff = wa.at(e.pa, e.qa) - wb.at(e.pb, e.qb);
    const double d = diff.norm();
    const double hinge = params.margin - d;
    if (hinge <= 0) continue;  // subgradient at the kink: zero
    loss += wu * hinge;
    if (d > 0) {
      const Eigen::VectorXd dir = diff / d * wu;
      dwa.col(e.pa * na + e.qa) -= dir;
      dwb.col(e.pb * nb + e.qb) += dir;
    }
  }

  run_backward(params, pair.a, fa, dwa, grad);
  run_backward(params, pair.b, fb, dwb, grad);
  return loss;
}

void axpy_params(EmbeddingGradient& acc, const EmbeddingGradient& other) {
  auto it = [&](EmbeddingGradient& dst, const EmbeddingGradient& src) {
    std::vector<std::pair<double*, size_t>> dblocks;
    for_each_param_block(dst, [&](double* d, size_t s) { dblocks.emplace_back(d, s); });
    size_t i = 0;
    for_each_param_block(src, [&](const double* s, size_t sz) {
      for (size_t j = 0; j < sz; ++j) dblocks[i].first[j] += s[j];
      ++i;
    });
  };
  it(acc, other);
}

}  // namespace

std::pair<double, EmbeddingGradient> loss_gradient(const EmbeddingParams& params,
                                                   const std::vector<TrainingPair>& batch,
                                                   int threads) {
  check_shapes(params);
  if (batch.empty()) throw EmptySets("loss_gradient: empty batch");

  const int want = threads > 0 ? threads
                               : static_cast<int>(std::thread::hardware_concurrency());
  const int workers = std::max(1, std::min<int>(want, static_cast<int>(batch.size())));

  std::vector<double> losses(batch.size(), 0.0);
  std::vector<EmbeddingGradient> grads;
  grads.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) grads.push_back(zeros_like(params));

  if (workers == 1) {
    for (size_t i = 0; i < batch.size(); ++i)
      losses[i] = pair_loss_gradient(params, batch[i], grads[i]);
  } else {
    std::vector<std::future<void>> futs;
    std::atomic<size_t> cursor{0};
    for (int w = 0; w < workers; ++w) {
      futs.push_back(std::async(std::launch::async, [&]() {
        for (;;) {
          const size_t i = cursor.fetch_add(1);
          if (i >= batch.size()) return;
          losses[i] = pair_loss_gradient(params, batch[i], grads[i]);
        }
      }));
    }
    for (auto& f : futs) f.get();
  }

  // Reduce in batch order so the result is independent of thread count.
  EmbeddingGradient total = zeros_like(params);
  double loss = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    axpy_params(total, grads[i]);
    loss += losses[i];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for_each_param_block(total, [&](double* d, size_t s) {
    for (size_t j = 0; j < s; ++j) d[j] *= inv;
  });
  return {loss * inv, std::move(total)};
}

TrainResult train(const std::vector<TrainingPair>& corpus, EmbeddingParams initial,
                  const TrainOptions& opt) {
  if (corpus.empty()) throw EmptySets("train: empty corpus");
  check_shapes(initial);

  TrainResult result{std::move(initial), {}};
  EmbeddingGradient velocity = zeros_like(result.params);
  Rng shuffle_rng = Rng(opt.seed).fork(21);

  std::vector<size_t> order(corpus.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1)]);

    double epoch_loss = 0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += opt.batch_size) {
      const size_t end = std::min(order.size(), start + opt.batch_size);
      std::vector<TrainingPair> batch;
      batch.reserve(end - start);
      for (size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);

      auto [loss, grad] = loss_gradient(result.params, batch, opt.threads);
      if (!std::isfinite(loss)) throw DivergenceDetected("train: loss became non-finite");
      epoch_loss += loss * static_cast<double>(batch.size());
      seen += batch.size();

      std::vector<std::pair<double*, size_t>> vblocks, pblocks;
      for_each_param_block(velocity, [&](double* d, size_t s) { vblocks.emplace_back(d, s); });
      for_each_param_block(result.params,
                           [&](double* d, size_t s) { pblocks.emplace_back(d, s); });
      size_t bi = 0;
      for_each_param_block(grad, [&](const double* gd, size_t s) {
        double* v = vblocks[bi].first;
        double* pm = pblocks[bi].first;
        for (size_t j = 0; j < s; ++j) {
          v[j] = opt.momentum * v[j] - opt.learning_rate * gd[j];
          pm[j] += v[j];
        }
        ++bi;
      });
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
    if (opt.stop_at_mean_loss && result.epoch_loss.back() <= *opt.stop_at_mean_loss) break;
  }
  return result;
}

double calibrate_edge_threshold(const EmbeddingParams& params,
                                const std::vector<TrainingPair>& held_out) {
  std::vector<double> pos, neg;
  for (const auto& pair : held_out) {
    EdgeFeatures wa = embed_edges(params, pair.a);
    EdgeFeatures wb = embed_edges(params, pair.b);
    for (const auto& e : pair.matched)
      pos.push_back((wa.at(e.pa, e.qa) - wb.at(e.pb, e.qb)).norm());
    for (const auto& e : pair.unmatched)
      neg.push_back((wa.at(e.pa, e.qa) - wb.at(e.pb, e.qb)).norm());
  }
  if (pos.empty() || neg.empty())
    throw EmptySets("calibrate_edge_threshold: need matched and unmatched samples");

  std::vector<double> all = pos;
  all.insert(all.end(), neg.begin(), neg.end());
  std::sort(all.begin(), all.end());
  std::vector<double> candidates;
  candidates.push_back(all.front() * 0.5);
  for (size_t i = 0; i + 1 < all.size(); ++i)
    candidates.push_back(0.5 * (all[i] + all[i + 1]));
  candidates.push_back(all.back() + 1e-6);

  double best_t = candidates.front(), best_f1 = -1;
  for (const double t : candidates) {
    const auto tp = static_cast<double>(std::count_if(pos.begin(), pos.end(),
                                                      [&](double d) { return d < t; }));
    const auto fp = static_cast<double>(std::count_if(neg.begin(), neg.end(),
                                                      [&](double d) { return d < t; }));
    const double fn = static_cast<double>(pos.size()) - tp;
    const double f1 = (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
    if (f1 > best_f1) {
      best_f1 = f1;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  if (rows == 0) return {};
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw ShapeMismatch("checkpoint: ragged matrix");
    for (size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  check_shapes(ckpt.params);
  const EmbeddingParams& p = ckpt.params;
  nlohmann::json j;
  j["format"] = "stalign-embedding";
  j["version"] = 1;
  j["hidden"] = p.hidden;
  j["rounds"] = p.rounds;
  j["feature_dim"] = p.feature_dim;
  j["profile_len"] = p.profile_len;
  j["margin"] = p.margin;
  j["input_scale"] = p.input_scale;
  if (ckpt.calibrated_threshold)
    j["calibrated_threshold"] = *ckpt.calibrated_threshold;
  nlohmann::json w;
  w["node_enc_w"] = matrix_to_json(p.node_enc_w);
  w["node_enc_b"] = vector_to_json(p.node_enc_b);
  w["edge_enc_w"] = matrix_to_json(p.edge_enc_w);
  w["edge_enc_b"] = vector_to_json(p.edge_enc_b);
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : p.round) {
    nlohmann::json rj;
    rj["attn"] = vector_to_json(r.attn);
    rj["value_w"] = matrix_to_json(r.value_w);
    rj["value_b"] = vector_to_json(r.value_b);
    rj["node_w"] = matrix_to_json(r.node_w);
    rj["node_b"] = vector_to_json(r.node_b);
    rj["edge_w"] = matrix_to_json(r.edge_w);
    rj["edge_b"] = vector_to_json(r.edge_b);
    rounds.push_back(std::move(rj));
  }
  w["round"] = std::move(rounds);
  w["out_w"] = matrix_to_json(p.out_w);
  w["out_b"] = vector_to_json(p.out_b);
  j["weights"] = std::move(w);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint parse error in " + path + ": " + e.what());
  }
  try {
    if (j.at("format") != "stalign-embedding" || j.at("version") != 1)
      throw IoError("checkpoint: unknown format/version in " + path);
    Checkpoint ckpt;
    EmbeddingParams& p = ckpt.params;
    p.hidden = j.at("hidden").get<int>();
    p.rounds = j.at("rounds").get<int>();
    p.feature_dim = j.at("feature_dim").get<int>();
    p.profile_len = j.at("profile_len").get<int>();
    p.margin = j.at("margin").get<double>();
    p.input_scale = j.at("input_scale").get<double>();
    if (j.contains("calibrated_threshold"))
      ckpt.calibrated_threshold = j.at("calibrated_threshold").get<double>();
    const auto& w = j.at("weights");
    p.node_enc_w = matrix_from_json(w.at("node_enc_w"));
    p.node_enc_b = vector_from_json(w.at("node_enc_b"));
    p.edge_enc_w = matrix_from_json(w.at("edge_enc_w"));
    p.edge_enc_b = vector_from_json(w.at("edge_enc_b"));
    for (const auto& rj : w.at("round")) {
      RoundParams r;
      r.attn = vector_from_json(rj.at("attn"));
      r.value_w = matrix_from_json(rj.at("value_w"));
      r.value_b = vector_from_json(rj.at("value_b"));
      r.node_w = matrix_from_json(rj.at("node_w"));
      r.node_b = vector_from_json(rj.at("node_b"));
      r.edge_w = matrix_from_json(rj.at("edge_w"));
      r.edge_b = vector_from_json(rj.at("edge_b"));
      p.round.push_back(std::move(r));
    }
    p.out_w = matrix_from_json(w.at("out_w"));
    p.out_b = vector_from_json(w.at("out_b"));
    check_shapes(p);
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint field error in " + path + ": " + e.what());
  }
}

}  // namespace stalign
