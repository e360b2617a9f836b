// Command-line front end: scenario synthesis, embedding training, one-shot
// alignment, benchmark sweeps, and the search-vs-oracle consistency check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stalign/errors.hpp"
#include "stalign/io.hpp"

namespace {

using namespace stalign;

struct CommonOpts {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<int> trials;
  std::optional<int> threads;
  std::optional<std::string> feature_mode;
  std::optional<std::string> anchor_mode;
  std::optional<std::string> estimator;
  std::optional<std::string> checkpoint;
};

HarnessConfig load_with_overrides(const CommonOpts& opts) {
  HarnessConfig cfg = load_config(opts.config);
  if (opts.seed) {
    cfg.bench.scenario.seed = *opts.seed;
    cfg.bench.bench_seed = *opts.seed;
    cfg.train.train_seed = *opts.seed;
  }
  if (opts.trials) cfg.bench.trials = *opts.trials;
  if (opts.threads) {
    cfg.bench.threads = *opts.threads;
    cfg.train.threads = *opts.threads;
  }
  if (opts.feature_mode) {
    if (*opts.feature_mode == "handcrafted")
      cfg.bench.pipeline.feature_mode = FeatureMode::Handcrafted;
    else if (*opts.feature_mode == "learned")
      cfg.bench.pipeline.feature_mode = FeatureMode::Learned;
    else
      throw InvalidConfig("--features must be handcrafted|learned");
  }
  if (opts.anchor_mode) {
    if (*opts.anchor_mode == "multi")
      cfg.bench.pipeline.match.multi_anchor = true;
    else if (*opts.anchor_mode == "single")
      cfg.bench.pipeline.match.multi_anchor = false;
    else
      throw InvalidConfig("--anchors must be multi|single");
  }
  if (opts.estimator) {
    if (*opts.estimator == "ransac")
      cfg.bench.pipeline.estimator = PoseEstimator::Ransac;
    else if (*opts.estimator == "lmeds")
      cfg.bench.pipeline.estimator = PoseEstimator::LMedS;
    else
      throw InvalidConfig("--estimator must be ransac|lmeds");
  }
  if (opts.checkpoint) cfg.checkpoint = *opts.checkpoint;
  return cfg;
}

// The learned mode needs a checkpoint; handcrafted mode ignores it.
std::optional<Checkpoint> load_model_if_needed(HarnessConfig& cfg) {
  if (cfg.bench.pipeline.feature_mode != FeatureMode::Learned) return std::nullopt;
  if (cfg.checkpoint.empty())
    throw InvalidConfig("learned feature mode requires a checkpoint (config key or --checkpoint)");
  Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
  if (ckpt.calibrated_threshold)
    cfg.bench.pipeline.match.edge_threshold = *ckpt.calibrated_threshold;
  return ckpt;
}

int cmd_simulate(const CommonOpts& opts, const std::string& out_frames,
                 const std::string& out_truth, bool with_truth_ids,
                 double attack_magnitude) {
  HarnessConfig cfg = load_with_overrides(opts);
  Scenario sc = generate_scenario(cfg.bench.scenario);
  if (cfg.bench.scenario.pose_attack && attack_magnitude > 0)
    inject_pose_attack(sc.truth, attack_magnitude, cfg.bench.scenario.seed);
  export_frames(sc.frames, out_frames, with_truth_ids);
  export_truth(sc, out_truth);
  std::printf("simulate: %d agents, %d frames, %zu messages -> %s, %s\n",
              cfg.bench.scenario.num_agents, cfg.bench.scenario.duration,
              sc.truth.messages.size(), out_frames.c_str(), out_truth.c_str());
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& out_model,
              const std::string& out_loss, std::optional<int> epochs,
              std::optional<int> pairs) {
  HarnessConfig cfg = load_with_overrides(opts);
  TrainConfig& tc = cfg.train;
  if (epochs) tc.epochs = *epochs;
  if (pairs) tc.corpus_pairs = *pairs;

  const auto corpus = make_training_pairs(cfg.bench.scenario, tc.corpus_pairs, tc.train_seed);
  const auto holdout =
      make_training_pairs(cfg.bench.scenario, tc.holdout_pairs, hash_mix(tc.train_seed, 0x9d));

  EmbeddingParams init = EmbeddingParams::init(tc.hidden, tc.rounds, tc.feature_dim,
                                               tc.profile_len, tc.margin, tc.train_seed);
  TrainOptions topt;
  topt.epochs = tc.epochs;
  topt.batch_size = tc.batch_size;
  topt.learning_rate = tc.learning_rate;
  topt.momentum = tc.momentum;
  topt.seed = tc.train_seed;
  topt.threads = tc.threads;
  topt.stop_at_mean_loss = tc.stop_at_mean_loss;

  TrainResult result = train(corpus, std::move(init), topt);
  const double threshold = calibrate_edge_threshold(result.params, holdout);
  save_checkpoint({result.params, threshold}, out_model);
  write_loss_csv(result.epoch_loss, out_loss);
  std::printf("train-embedding: %zu pairs, %zu epochs, final loss %.6f, threshold %.6f -> %s\n",
              corpus.size(), result.epoch_loss.size(),
              result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back(), threshold,
              out_model.c_str());
  return 0;
}

int cmd_align(const CommonOpts& opts, const std::string& frames_path,
              const std::string& truth_path, const std::string& ego_id,
              const std::string& collab_id, std::optional<int> message_index,
              const std::string& out_path) {
  HarnessConfig cfg = load_with_overrides(opts);
  const auto ckpt = load_model_if_needed(cfg);
  const EmbeddingParams* model = ckpt ? &ckpt->params : nullptr;

  const auto streams = import_frames(frames_path);
  const TruthFile tf = import_truth(truth_path);

  int ego = -1, collab = -1;
  for (size_t i = 0; i < tf.truth.agents.size(); ++i) {
    if (tf.truth.agents[i].id == ego_id) ego = static_cast<int>(i);
    if (tf.truth.agents[i].id == collab_id) collab = static_cast<int>(i);
  }
  const std::vector<DetectionFrame>* ego_frames = nullptr;
  const std::vector<DetectionFrame>* collab_frames = nullptr;
  for (const auto& s : streams) {
    if (!s.empty() && s.front().agent_id == ego_id) ego_frames = &s;
    if (!s.empty() && s.front().agent_id == collab_id) collab_frames = &s;
  }
  if (ego < 0 || !ego_frames) throw InvalidConfig("unknown ego agent: " + ego_id);
  if (collab < 0 || !collab_frames) throw InvalidConfig("unknown collaborator agent: " + collab_id);

  std::ofstream out(out_path);
  if (!out) throw IoError("cannot open for writing: " + out_path);

  const double tau = tf.truth.tau_ms;
  int processed = 0, idx = -1;
  for (const MessageTruth& m : tf.truth.messages) {
    if (m.receiver != ego || m.sender != collab) continue;
    ++idx;
    if (message_index && idx != *message_index) continue;
    if (m.receiver_frame >= static_cast<int>(ego_frames->size()) ||
        m.sender_frame >= static_cast<int>(collab_frames->size()))
      continue;

    GraphBuffer buffer(cfg.bench.pipeline.buffer_length + 1, tau);
    const int start = std::max(0, m.receiver_frame - cfg.bench.pipeline.buffer_length);
    for (int k = start; k <= m.receiver_frame; ++k) {
      buffer.push((*ego_frames)[k].local_time_ms,
                  featured_graph((*ego_frames)[k], cfg.bench.pipeline, model),
                  k == start ? RigidTransform2D::identity()
                             : tf.odometry[ego].increments[k - 1]);
    }
    const AlignmentResult r =
        align_frame(buffer, (*collab_frames)[m.sender_frame], m.advertised_latency_ms,
                    cfg.bench.pipeline, model);
    out << "{\"message\":" << idx << ",\"receiver_frame\":" << m.receiver_frame
        << ",\"sender_frame\":" << m.sender_frame << ",\"result\":" << to_json_string(r)
        << "}\n";
    ++processed;
  }
  if (!out) throw IoError("failed writing: " + out_path);
  std::printf("align: %d message(s) -> %s\n", processed, out_path.c_str());
  return 0;
}

int cmd_bench(const CommonOpts& opts, const std::string& out_dir,
              std::optional<double> attack) {
  HarnessConfig cfg = load_with_overrides(opts);
  const auto ckpt = load_model_if_needed(cfg);
  const EmbeddingParams* model = ckpt ? &ckpt->params : nullptr;

  std::filesystem::create_directories(out_dir);
  const auto path = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  if (attack) {
    const AttackComparison cmp = compare_baseline_trusted_pose(cfg.bench, *attack, model);
    write_report_json(cmp.aligned_under_attack, path("report.json"));
    write_trials_csv(cmp.aligned_under_attack.records, path("trials.csv"));
    write_report_json(cmp.baseline_under_attack, path("report_baseline.json"));
    write_report_json(cmp.aligned_clean, path("report_clean.json"));
    std::printf("bench [attack %.1f m]: aligned error_rate %.4f, baseline error_rate %.4f, "
                "attacked==clean results: %s\n",
                *attack, cmp.aligned_under_attack.error_rate,
                cmp.baseline_under_attack.error_rate,
                cmp.results_identical ? "yes" : "no");
    return 0;
  }

  const MetricsReport report = run_benchmark(cfg.bench, model);
  write_report_json(report, path("report.json"));
  write_trials_csv(report.records, path("trials.csv"));
  std::printf("bench: %d trials, error_rate %.4f, mean planar %.4f m, mean |dtheta| %.4f deg, "
              "sync %.4f, rejection %.4f\n",
              report.trials, report.error_rate, report.mean_planar_error_m,
              report.mean_abs_rotation_error_deg, report.sync_accuracy_all,
              report.rejection_rate);
  return 0;
}

int cmd_oracle_check(std::optional<uint64_t> seed, int instances, int max_nodes,
                     int min_shared, double edge_threshold,
                     const std::string& out_path) {
  MatchConfig cfg;
  cfg.edge_threshold = edge_threshold;
  cfg.min_subgraph_size = 3;
  const OracleCheckSummary s =
      oracle_check(instances, seed.value_or(1), max_nodes, min_shared, cfg);
  const double size_frac = static_cast<double>(s.size_within_one) / s.instances;
  const double exact_frac = static_cast<double>(s.exact_matches) / s.instances;
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open for writing: " + out_path);
    out << "{\"instances\":" << s.instances << ",\"size_within_one\":" << s.size_within_one
        << ",\"exact_matches\":" << s.exact_matches << ",\"mean_oracle_size\":"
        << s.mean_oracle_size << ",\"mean_search_size\":" << s.mean_search_size << "}\n";
  }
  std::printf("oracle-check: %d instances, size within one %.4f, exact %.4f\n", s.instances,
              size_frac, exact_frac);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device-free spatial-temporal alignment for collaborative perception"};
  app.require_subcommand(1);

  CommonOpts opts;
  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    auto* o = cmd->add_option("--config", opts.config, "key = value config file");
    if (needs_config) o->required();
    cmd->add_option("--seed", opts.seed, "override every seed in the config");
    cmd->add_option("--trials", opts.trials, "override the trial count");
    cmd->add_option("--threads", opts.threads, "worker threads (0 = hardware)");
    cmd->add_option("--features", opts.feature_mode, "handcrafted|learned");
    cmd->add_option("--anchors", opts.anchor_mode, "multi|single");
    cmd->add_option("--estimator", opts.estimator, "ransac|lmeds");
    cmd->add_option("--checkpoint", opts.checkpoint, "embedding checkpoint path");
  };

  // simulate
  std::string out_frames = "frames.jsonl", out_truth = "truth.json";
  bool with_truth_ids = false;
  double sim_attack = 10.0;
  auto* sim = app.add_subcommand("simulate", "Generate and export a synthetic scenario");
  add_common(sim);
  sim->add_option("--out-frames", out_frames, "detection stream output (JSON lines)");
  sim->add_option("--out-truth", out_truth, "ground-truth output (JSON)");
  sim->add_flag("--with-truth-ids", with_truth_ids, "include truth ids in the frame export");
  sim->add_option("--attack-magnitude", sim_attack,
                  "advertised-pose displacement when pose_attack is set");

  // train-embedding
  std::string out_model = "model.json", out_loss = "loss.csv";
  std::optional<int> train_epochs, train_pairs;
  auto* tr = app.add_subcommand("train-embedding", "Train the edge-feature network");
  add_common(tr);
  tr->add_option("--out", out_model, "checkpoint output path");
  tr->add_option("--loss-csv", out_loss, "per-epoch loss output");
  tr->add_option("--epochs", train_epochs, "override training epochs");
  tr->add_option("--pairs", train_pairs, "override corpus size");

  // align
  std::string frames_path, truth_path, ego_id = "agent0", collab_id = "agent1";
  std::string align_out = "alignments.jsonl";
  std::optional<int> message_index;
  auto* al = app.add_subcommand("align", "Align exported collaborator frames against an ego buffer");
  add_common(al);
  al->add_option("--frames", frames_path, "detection stream (JSON lines)")->required();
  al->add_option("--truth", truth_path, "ground-truth file (odometry + message schedule)")
      ->required();
  al->add_option("--ego", ego_id, "ego agent id");
  al->add_option("--collab", collab_id, "collaborator agent id");
  al->add_option("--message", message_index, "align only this message index");
  al->add_option("--out", align_out, "results output (JSON lines)");

  // bench
  std::string out_dir = ".";
  std::optional<double> bench_attack;
  auto* be = app.add_subcommand("bench", "Run a scored benchmark sweep");
  add_common(be);
  be->add_option("--out-dir", out_dir, "directory for report.json and trials.csv");
  be->add_option("--attack", bench_attack,
                 "compare against the trusted-pose baseline under this attack magnitude");

  // oracle-check
  std::optional<uint64_t> oc_seed;
  int oc_instances = 200, oc_max_nodes = 8, oc_min_shared = 4;
  double oc_threshold = 0.5;
  std::string oc_out;
  auto* oc = app.add_subcommand("oracle-check",
                                "Compare the anchor search against the exhaustive oracle");
  oc->add_option("--seed", oc_seed, "instance seed");
  oc->add_option("--instances", oc_instances, "instance count");
  oc->add_option("--max-nodes", oc_max_nodes, "nodes per side (<= 9)");
  oc->add_option("--min-shared", oc_min_shared, "minimum shared nodes per instance");
  oc->add_option("--edge-threshold", oc_threshold, "matching threshold");
  oc->add_option("--out", oc_out, "summary output (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(opts, out_frames, out_truth, with_truth_ids, sim_attack);
    if (tr->parsed()) return cmd_train(opts, out_model, out_loss, train_epochs, train_pairs);
    if (al->parsed())
      return cmd_align(opts, frames_path, truth_path, ego_id, collab_id, message_index,
                       align_out);
    if (be->parsed()) return cmd_bench(opts, out_dir, bench_attack);
    if (oc->parsed())
      return cmd_oracle_check(oc_seed, oc_instances, oc_max_nodes, oc_min_shared,
                              oc_threshold, oc_out);
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const MalformedRecord& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
