#include "stalign/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <thread>
#include <unordered_map>

#include "stalign/errors.hpp"
#include "stalign/io.hpp"
#include "stalign/rng.hpp"

namespace stalign {

uint64_t hash_mix(uint64_t a, uint64_t b, uint64_t c) {
  uint64_t x = a ^ (b * 0x9e3779b97f4a7c15ULL) ^ (c * 0xbf58476d1ce4e5b9ULL);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x == 0 ? 1 : x;
}

SalientObjectGraph featured_graph(const DetectionFrame& frame, const PipelineConfig& cfg,
                                  const EmbeddingParams* model) {
  if (frame.boxes.empty()) {
    SalientObjectGraph g;
    g.source_agent = frame.agent_id;
    g.source_time_ms = frame.local_time_ms;
    g.distances = Eigen::MatrixXd::Zero(0, 0);
    g.features = EdgeFeatures::zeros(0, 1);
    return g;
  }
  SalientObjectGraph g = build_graph(frame);
  if (cfg.feature_mode == FeatureMode::Learned && model && g.size() >= 2)
    g.features = embed_edges(*model, g);
  return g;
}

namespace {

TrialRecord run_trial(const BenchmarkConfig& cfg, int trial, const EmbeddingParams* model) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    ScenarioConfig scfg = cfg.scenario;
    scfg.seed = hash_mix(cfg.bench_seed, static_cast<uint64_t>(trial),
                         static_cast<uint64_t>(attempt));
    Scenario sc = generate_scenario(scfg);
    const int rf = scfg.duration - 1;

    const MessageTruth* msg = nullptr;
    for (const auto& m : sc.truth.messages) {
      if (m.receiver == 0 && m.sender == 1 && m.receiver_frame == rf) {
        msg = &m;
        break;
      }
    }
    if (!msg) continue;

    const DetectionFrame& collab = sc.frames[1][msg->sender_frame];
    const DetectionFrame& ego_then = sc.frames[0][msg->sender_frame];
    const int shared = shared_detection_count(ego_then, collab);
    if (shared < cfg.min_shared || shared > cfg.max_shared) continue;
    if (cfg.min_distractors > 0 &&
        (distractor_count(ego_then, collab) < cfg.min_distractors ||
         distractor_count(collab, ego_then) < cfg.min_distractors))
      continue;

    if (scfg.pose_attack && cfg.attack_magnitude > 0)
      inject_pose_attack(sc.truth, cfg.attack_magnitude, scfg.seed);

    const double tau = scfg.sample_interval_tau;
    GraphBuffer buffer(cfg.pipeline.buffer_length + 1, tau);
    const int start = std::max(0, rf - cfg.pipeline.buffer_length);
    for (int k = start; k <= rf; ++k) {
      buffer.push(sc.frames[0][k].local_time_ms,
                  featured_graph(sc.frames[0][k], cfg.pipeline, model),
                  k == start ? RigidTransform2D::identity()
                             : sc.odometry[0].increments[k - 1]);
    }

    const AlignmentResult result =
        align_frame(buffer, collab, msg->advertised_latency_ms, cfg.pipeline, model);

    TrialRecord rec;
    rec.trial = trial;
    rec.scenario_seed = scfg.seed;
    rec.receiver_frame = rf;
    rec.sender_frame = msg->sender_frame;
    rec.shared_objects = shared;
    rec.true_latency_ms = msg->true_latency_ms;
    rec.advertised_latency_ms = msg->advertised_latency_ms;
    rec.true_clock_deviation_ms = msg->clock_deviation_ms;
    rec.true_slot = rf - msg->sender_frame;

    const RigidTransform2D truth =
        true_relative_transform(sc.truth, 0, rf, 1, msg->sender_frame);
    rec.true_dx = truth.tx;
    rec.true_dy = truth.ty;
    rec.true_dtheta = truth.rotation;

    rec.aligned = result.status == AlignmentStatus::Aligned;
    rec.ambiguous_time = result.ambiguous_time;
    rec.reject_reason = result.reject_reason;
    rec.result_fingerprint = to_json_string(result);
    if (rec.aligned) {
      rec.matched_slot = static_cast<int>(std::llround(*result.latency_estimate_ms / tau));
      rec.est_latency_ms = *result.latency_estimate_ms;
      rec.est_clock_deviation_ms = result.clock_deviation_estimate_ms.value_or(0.0);
      rec.est_dx = result.relative_pose->tx;
      rec.est_dy = result.relative_pose->ty;
      rec.est_dtheta = result.relative_pose->rotation;
      rec.translation_error_m = std::hypot(rec.est_dx - truth.tx, rec.est_dy - truth.ty);
      rec.rotation_error_rad = std::abs(wrap_angle(rec.est_dtheta - truth.rotation));
      rec.psi = result.subgraph->size();
      rec.epsilon = result.subgraph->epsilon;
    }

    // Trusted-pose baseline: believe the advertised poses and clock.
    const int claimed_slot =
        static_cast<int>(std::llround(msg->advertised_latency_ms / tau));
    const int claimed_frame = std::clamp(rf - claimed_slot, 0, rf);
    const RigidTransform2D base =
        relative_pose(sc.truth.agents[0].advertised_poses[rf],
                      sc.truth.agents[1].advertised_poses[claimed_frame]);
    rec.baseline_dx = base.tx;
    rec.baseline_dy = base.ty;
    rec.baseline_dtheta = base.rotation;
    rec.baseline_translation_error_m = std::hypot(base.tx - truth.tx, base.ty - truth.ty);
    rec.baseline_rotation_error_rad = std::abs(wrap_angle(base.rotation - truth.rotation));
    rec.baseline_slot = rf - claimed_frame;
    return rec;
  }
  throw Error("run_benchmark: no admissible scenario found for trial " +
              std::to_string(trial));
}

}  // namespace

MetricsReport summarize(std::vector<TrialRecord> records, bool count_rejected_as_errors) {
  MetricsReport r;
  r.trials = static_cast<int>(records.size());
  double rot_sum = 0, trans_sum = 0, dt_sum = 0;
  int errors = 0, correct_all = 0;
  for (const TrialRecord& t : records) {
    if (!t.aligned) {
      ++r.rejected;
      continue;
    }
    ++r.aligned;
    rot_sum += t.rotation_error_rad * 180.0 / kPi;
    trans_sum += t.translation_error_m;
    dt_sum += std::abs(t.est_latency_ms - t.true_latency_ms);
    if (t.translation_error_m > kErrorRadiusMeters) ++errors;
    if (t.matched_slot == t.true_slot) ++correct_all;
  }
  if (r.aligned > 0) {
    r.mean_abs_rotation_error_deg = rot_sum / r.aligned;
    r.mean_planar_error_m = trans_sum / r.aligned;
    r.mean_abs_clock_deviation_error_ms = dt_sum / r.aligned;
    r.sync_accuracy_aligned = static_cast<double>(correct_all) / r.aligned;
  }
  if (r.trials > 0) {
    r.sync_accuracy_all = static_cast<double>(correct_all) / r.trials;
    r.rejection_rate = static_cast<double>(r.rejected) / r.trials;
  }
  if (count_rejected_as_errors) {
    r.error_rate = r.trials > 0
                       ? static_cast<double>(errors + r.rejected) / r.trials
                       : 0.0;
  } else {
    r.error_rate = r.aligned > 0 ? static_cast<double>(errors) / r.aligned : 0.0;
  }
  r.records = std::move(records);
  return r;
}

MetricsReport summarize_baseline(const std::vector<TrialRecord>& records,
                                 bool count_rejected_as_errors) {
  std::vector<TrialRecord> as_est = records;
  for (TrialRecord& t : as_est) {
    t.aligned = true;  // the baseline always produces a pose
    t.est_dx = t.baseline_dx;
    t.est_dy = t.baseline_dy;
    t.est_dtheta = t.baseline_dtheta;
    t.translation_error_m = t.baseline_translation_error_m;
    t.rotation_error_rad = t.baseline_rotation_error_rad;
    t.matched_slot = t.baseline_slot;
    t.est_latency_ms = t.advertised_latency_ms;
  }
  return summarize(std::move(as_est), count_rejected_as_errors);
}

MetricsReport run_benchmark(const BenchmarkConfig& cfg, const EmbeddingParams* model) {
  validate(cfg.scenario);
  validate(cfg.pipeline.match);
  if (cfg.trials < 1) throw InvalidConfig("trials must be >= 1");

  std::vector<TrialRecord> records(cfg.trials);
  const int want = cfg.threads > 0 ? cfg.threads
                                   : static_cast<int>(std::thread::hardware_concurrency());
  const int workers = std::max(1, std::min(want, cfg.trials));

  if (workers == 1) {
    for (int t = 0; t < cfg.trials; ++t) records[t] = run_trial(cfg, t, model);
  } else {
    std::atomic<int> cursor{0};
    std::vector<std::future<void>> futs;
    futs.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      futs.push_back(std::async(std::launch::async, [&]() {
        for (;;) {
          const int t = cursor.fetch_add(1);
          if (t >= cfg.trials) return;
          records[t] = run_trial(cfg, t, model);
        }
      }));
    }
    for (auto& f : futs) f.get();
  }
  return summarize(std::move(records), cfg.count_rejected_as_errors);
}

AttackComparison compare_baseline_trusted_pose(const BenchmarkConfig& cfg, double magnitude,
                                               const EmbeddingParams* model) {
  BenchmarkConfig attacked = cfg;
  attacked.scenario.pose_attack = magnitude > 0;
  attacked.attack_magnitude = magnitude;
  BenchmarkConfig clean = cfg;
  clean.scenario.pose_attack = false;

  AttackComparison cmp;
  cmp.aligned_under_attack = run_benchmark(attacked, model);
  cmp.aligned_clean = run_benchmark(clean, model);
  cmp.baseline_under_attack =
      summarize_baseline(cmp.aligned_under_attack.records, cfg.count_rejected_as_errors);

  cmp.results_identical =
      cmp.aligned_under_attack.records.size() == cmp.aligned_clean.records.size();
  if (cmp.results_identical) {
    for (size_t i = 0; i < cmp.aligned_clean.records.size(); ++i) {
      if (cmp.aligned_under_attack.records[i].result_fingerprint !=
          cmp.aligned_clean.records[i].result_fingerprint) {
        cmp.results_identical = false;
        break;
      }
    }
  }
  return cmp;
}

OracleCheckSummary oracle_check(int instances, uint64_t seed, int max_nodes,
                                int min_shared, const MatchConfig& cfg) {
  OracleCheckSummary summary;
  summary.instances = instances;
  double oracle_sz = 0, search_sz = 0;
  for (int i = 0; i < instances; ++i) {
    Rng rng = Rng(hash_mix(seed, 0x0c1e, static_cast<uint64_t>(i))).fork(71);
    const int shared = static_cast<int>(rng.uniform_int(min_shared, max_nodes));
    const int extra_a = static_cast<int>(rng.uniform_int(0, max_nodes - shared));
    const int extra_b = static_cast<int>(rng.uniform_int(0, max_nodes - shared));

    std::vector<Point2D> common(shared);
    for (auto& p : common) p = {rng.uniform(-20, 20), rng.uniform(-20, 20)};
    const RigidTransform2D t{wrap_angle(rng.uniform(-kPi, kPi)), rng.uniform(-15, 15),
                             rng.uniform(-15, 15)};

    DetectionFrame fa, fb;
    fa.agent_id = "a";
    fb.agent_id = "b";
    for (int s = 0; s < shared; ++s) {
      fa.boxes.push_back({common[s].x, common[s].y, 0.0, s});
      const Point2D moved = apply(t, common[s]);
      fb.boxes.push_back({moved.x + rng.normal(0.02), moved.y + rng.normal(0.02), 0.0, s});
    }
    for (int e = 0; e < extra_a; ++e)
      fa.boxes.push_back({rng.uniform(-20, 20), rng.uniform(-20, 20), 0.0, std::nullopt});
    for (int e = 0; e < extra_b; ++e)
      fb.boxes.push_back({rng.uniform(-20, 20), rng.uniform(-20, 20), 0.0, std::nullopt});

    const SalientObjectGraph ga = build_graph(fa);
    const SalientObjectGraph gb = build_graph(fb);
    const CommonSubgraph oracle = oracle_max_common_subgraph(ga, gb, cfg);
    const auto found = find_common_subgraph(ga, gb, cfg);

    oracle_sz += oracle.size();
    search_sz += found ? found->size() : 0;
    if (found && found->size() >= oracle.size() - 1) ++summary.size_within_one;
    if (found) {
      auto a_pairs = oracle.pairs;
      auto b_pairs = found->pairs;
      std::sort(a_pairs.begin(), a_pairs.end());
      std::sort(b_pairs.begin(), b_pairs.end());
      if (a_pairs == b_pairs) ++summary.exact_matches;
    }
  }
  summary.mean_oracle_size = oracle_sz / instances;
  summary.mean_search_size = search_sz / instances;
  return summary;
}

namespace {

std::vector<std::pair<int, int>> truth_correspondences(const TrainingPair& pair,
                                                       const DetectionFrame& fa,
                                                       const DetectionFrame& fb) {
  std::unordered_map<int, int> id_to_b;
  for (int i = 0; i < pair.b.size(); ++i) {
    const auto& tid = fb.boxes[pair.b.nodes[i].source_index].truth_id;
    if (tid) id_to_b[*tid] = i;
  }
  std::vector<std::pair<int, int>> corr;
  for (int i = 0; i < pair.a.size(); ++i) {
    const auto& tid = fa.boxes[pair.a.nodes[i].source_index].truth_id;
    if (tid && id_to_b.count(*tid)) corr.emplace_back(i, id_to_b[*tid]);
  }
  return corr;
}

void sample_random_negatives(TrainingPair& pair,
                             const std::vector<std::pair<int, int>>& corr, size_t want,
                             Rng& rng) {
  std::unordered_map<int, int> a_to_b;
  for (const auto& [ia, ib] : corr) a_to_b[ia] = ib;
  const int na = pair.a.size(), nb = pair.b.size();
  int guard = 0;
  while (pair.unmatched.size() < want && guard++ < 10000) {
    const int pa = static_cast<int>(rng.uniform_int(0, na - 1));
    int qa = static_cast<int>(rng.uniform_int(0, na - 2));
    if (qa >= pa) ++qa;
    const int pb = static_cast<int>(rng.uniform_int(0, nb - 1));
    int qb = static_cast<int>(rng.uniform_int(0, nb - 2));
    if (qb >= pb) ++qb;
    const auto ma = a_to_b.find(pa);
    const auto mq = a_to_b.find(qa);
    if (ma != a_to_b.end() && mq != a_to_b.end() && ma->second == pb && mq->second == qb)
      continue;  // would be a true match
    pair.unmatched.push_back({pa, qa, pb, qb});
  }
}

}  // namespace

std::vector<TrainingPair> make_training_pairs(const ScenarioConfig& base, int count,
                                              uint64_t seed) {
  std::vector<TrainingPair> out;
  out.reserve(count);
  int attempt = 0;
  while (static_cast<int>(out.size()) < count && attempt < count * 200 + 1000) {
    ScenarioConfig scfg = base;
    scfg.seed = hash_mix(seed, 0xc0de, static_cast<uint64_t>(attempt++));
    Scenario sc = generate_scenario(scfg);
    Rng rng = Rng(scfg.seed).fork(61);

    // Every third pair is a time-shifted one: the same scene one to three
    // sample intervals apart, whose truth-id edges are negatives. Temporal
    // selection hinges on exactly this contrast.
    const bool temporal = out.size() % 3 == 2;
    const int frame_a = static_cast<int>(rng.uniform_int(0, scfg.duration - 1));
    int frame_b = frame_a;
    if (temporal) {
      const int shift = static_cast<int>(rng.uniform_int(1, 3));
      frame_b = frame_a + shift < scfg.duration ? frame_a + shift : frame_a - shift;
      if (frame_b < 0) continue;
    }
    const DetectionFrame& fa = sc.frames[0][frame_a];
    const DetectionFrame& fb = sc.frames[1][frame_b];
    if (fa.boxes.size() < 2 || fb.boxes.size() < 2) continue;

    TrainingPair pair;
    pair.a = build_graph(fa);
    pair.b = build_graph(fb);
    const auto corr = truth_correspondences(pair, fa, fb);
    if (corr.size() < 2) continue;

    std::vector<EdgePairing> id_edges;
    for (size_t s = 0; s < corr.size(); ++s) {
      for (size_t t = 0; t < corr.size(); ++t) {
        if (s == t) continue;
        id_edges.push_back({corr[s].first, corr[t].first, corr[s].second, corr[t].second});
      }
    }
    constexpr size_t kMaxEdges = 72;
    if (id_edges.size() > kMaxEdges) {
      for (size_t i = id_edges.size() - 1; i > 0; --i)
        std::swap(id_edges[i], id_edges[rng.uniform_int(0, static_cast<int64_t>(i))]);
      id_edges.resize(kMaxEdges);
    }

    if (temporal) {
      // Same objects, different timestamps: negatives, but only edges whose
      // observed length moved beyond the jitter bound are unambiguous.
      for (const EdgePairing& e : id_edges) {
        const double da = pair.a.distances(e.pa, e.qa);
        const double db = pair.b.distances(e.pb, e.qb);
        if (std::abs(da - db) >= 0.4) pair.unmatched.push_back(e);
      }
      if (pair.unmatched.empty()) continue;
      sample_random_negatives(pair, {}, pair.unmatched.size() * 2, rng);
    } else {
      pair.matched = std::move(id_edges);
      sample_random_negatives(pair, corr, pair.matched.size(), rng);
    }
    if (pair.matched.empty() && pair.unmatched.empty()) continue;
    out.push_back(std::move(pair));
  }
  if (static_cast<int>(out.size()) < count)
    throw Error("make_training_pairs: could not assemble enough pairs");
  return out;
}

}  // namespace stalign
