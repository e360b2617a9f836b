#include "stalign/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "stalign/errors.hpp"

namespace stalign {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& v, long line) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw InvalidConfig("bad numeric value '" + v + "' (line " + std::to_string(line) + ")");
  }
}

int64_t parse_int(const std::string& v, long line) {
  try {
    size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return i;
  } catch (const std::exception&) {
    throw InvalidConfig("bad integer value '" + v + "' (line " + std::to_string(line) + ")");
  }
}

bool parse_bool(const std::string& v, long line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidConfig("bad boolean value '" + v + "' (line " + std::to_string(line) + ")");
}

Range parse_range(const std::string& v, long line) {
  std::istringstream iss(v);
  double lo, hi;
  if (!(iss >> lo >> hi))
    throw InvalidConfig("range needs two numbers, got '" + v + "' (line " +
                        std::to_string(line) + ")");
  std::string rest;
  if (iss >> rest)
    throw InvalidConfig("range has extra tokens '" + v + "' (line " + std::to_string(line) + ")");
  return {lo, hi};
}

}  // namespace

HarnessConfig parse_config_text(const std::string& text) {
  HarnessConfig cfg;
  ScenarioConfig& sc = cfg.bench.scenario;
  MatchConfig& mc = cfg.bench.pipeline.match;
  PipelineConfig& pc = cfg.bench.pipeline;
  BenchmarkConfig& bc = cfg.bench;
  TrainConfig& tc = cfg.train;

  using Handler = std::function<void(const std::string&, long)>;
  const std::map<std::string, Handler> handlers = {
      // scenario
      {"seed", [&](const std::string& v, long l) { sc.seed = static_cast<uint64_t>(parse_int(v, l)); }},
      {"num_agents", [&](const std::string& v, long l) { sc.num_agents = static_cast<int>(parse_int(v, l)); }},
      {"num_objects", [&](const std::string& v, long l) { sc.num_objects = static_cast<int>(parse_int(v, l)); }},
      {"world_extent", [&](const std::string& v, long l) { sc.world_extent = parse_double(v, l); }},
      {"object_speed_range", [&](const std::string& v, long l) { sc.object_speed_range = parse_range(v, l); }},
      {"sample_interval_tau", [&](const std::string& v, long l) { sc.sample_interval_tau = parse_double(v, l); }},
      {"duration", [&](const std::string& v, long l) { sc.duration = static_cast<int>(parse_int(v, l)); }},
      {"fov_radius", [&](const std::string& v, long l) { sc.fov_radius = parse_double(v, l); }},
      {"detection_jitter_sigma", [&](const std::string& v, long l) { sc.detection_jitter_sigma = parse_double(v, l); }},
      {"miss_rate", [&](const std::string& v, long l) { sc.miss_rate = parse_double(v, l); }},
      {"false_positive_rate", [&](const std::string& v, long l) { sc.false_positive_rate = parse_double(v, l); }},
      {"clock_offset_range", [&](const std::string& v, long l) { sc.clock_offset_range = parse_range(v, l); }},
      {"latency_range", [&](const std::string& v, long l) { sc.latency_range = parse_range(v, l); }},
      {"pose_attack", [&](const std::string& v, long l) { sc.pose_attack = parse_bool(v, l); }},
      {"odometry_drift_sigma", [&](const std::string& v, long l) { sc.odometry_drift_sigma = parse_double(v, l); }},
      // matcher
      {"edge_threshold", [&](const std::string& v, long l) { mc.edge_threshold = parse_double(v, l); }},
      {"gamma_anchors", [&](const std::string& v, long l) { mc.gamma_anchors = static_cast<int>(parse_int(v, l)); }},
      {"p_exp", [&](const std::string& v, long l) { mc.p_exp = parse_double(v, l); }},
      {"min_subgraph_size", [&](const std::string& v, long l) { mc.min_subgraph_size = static_cast<int>(parse_int(v, l)); }},
      {"max_seeds",
       [&](const std::string& v, long l) {
         if (v == "none")
           mc.max_seeds.reset();
         else
           mc.max_seeds = static_cast<int>(parse_int(v, l));
       }},
      {"multi_anchor", [&](const std::string& v, long l) { mc.multi_anchor = parse_bool(v, l); }},
      // pipeline
      {"feature_mode",
       [&](const std::string& v, long l) {
         if (v == "handcrafted")
           pc.feature_mode = FeatureMode::Handcrafted;
         else if (v == "learned")
           pc.feature_mode = FeatureMode::Learned;
         else
           throw InvalidConfig("feature_mode must be handcrafted|learned (line " +
                               std::to_string(l) + ")");
       }},
      {"estimator",
       [&](const std::string& v, long l) {
         if (v == "ransac")
           pc.estimator = PoseEstimator::Ransac;
         else if (v == "lmeds")
           pc.estimator = PoseEstimator::LMedS;
         else
           throw InvalidConfig("estimator must be ransac|lmeds (line " + std::to_string(l) + ")");
       }},
      {"ransac_iterations", [&](const std::string& v, long l) { pc.ransac_iterations = static_cast<int>(parse_int(v, l)); }},
      {"inlier_radius", [&](const std::string& v, long l) { pc.inlier_radius = parse_double(v, l); }},
      {"estimator_seed", [&](const std::string& v, long l) { pc.estimator_seed = static_cast<uint64_t>(parse_int(v, l)); }},
      {"buffer_length", [&](const std::string& v, long l) { pc.buffer_length = static_cast<int>(parse_int(v, l)); }},
      {"epsilon_tie_tolerance", [&](const std::string& v, long l) { pc.epsilon_tie_tolerance = parse_double(v, l); }},
      // benchmark
      {"trials", [&](const std::string& v, long l) { bc.trials = static_cast<int>(parse_int(v, l)); }},
      {"bench_seed", [&](const std::string& v, long l) { bc.bench_seed = static_cast<uint64_t>(parse_int(v, l)); }},
      {"min_shared", [&](const std::string& v, long l) { bc.min_shared = static_cast<int>(parse_int(v, l)); }},
      {"max_shared", [&](const std::string& v, long l) { bc.max_shared = static_cast<int>(parse_int(v, l)); }},
      {"min_distractors", [&](const std::string& v, long l) { bc.min_distractors = static_cast<int>(parse_int(v, l)); }},
      {"threads", [&](const std::string& v, long l) { bc.threads = tc.threads = static_cast<int>(parse_int(v, l)); }},
      {"count_rejected_as_errors", [&](const std::string& v, long l) { bc.count_rejected_as_errors = parse_bool(v, l); }},
      {"attack_magnitude", [&](const std::string& v, long l) { bc.attack_magnitude = parse_double(v, l); }},
      // training
      {"epochs", [&](const std::string& v, long l) { tc.epochs = static_cast<int>(parse_int(v, l)); }},
      {"batch_size", [&](const std::string& v, long l) { tc.batch_size = static_cast<int>(parse_int(v, l)); }},
      {"learning_rate", [&](const std::string& v, long l) { tc.learning_rate = parse_double(v, l); }},
      {"momentum", [&](const std::string& v, long l) { tc.momentum = parse_double(v, l); }},
      {"train_seed", [&](const std::string& v, long l) { tc.train_seed = static_cast<uint64_t>(parse_int(v, l)); }},
      {"corpus_pairs", [&](const std::string& v, long l) { tc.corpus_pairs = static_cast<int>(parse_int(v, l)); }},
      {"holdout_pairs", [&](const std::string& v, long l) { tc.holdout_pairs = static_cast<int>(parse_int(v, l)); }},
      {"hidden", [&](const std::string& v, long l) { tc.hidden = static_cast<int>(parse_int(v, l)); }},
      {"rounds", [&](const std::string& v, long l) { tc.rounds = static_cast<int>(parse_int(v, l)); }},
      {"feature_dim", [&](const std::string& v, long l) { tc.feature_dim = static_cast<int>(parse_int(v, l)); }},
      {"profile_len", [&](const std::string& v, long l) { tc.profile_len = static_cast<int>(parse_int(v, l)); }},
      {"margin", [&](const std::string& v, long l) { tc.margin = parse_double(v, l); }},
      {"stop_at_mean_loss",
       [&](const std::string& v, long l) {
         if (v == "none")
           tc.stop_at_mean_loss.reset();
         else
           tc.stop_at_mean_loss = parse_double(v, l);
       }},
      // misc
      {"checkpoint", [&](const std::string& v, long) { cfg.checkpoint = v; }},
  };

  std::istringstream iss(text);
  std::string raw;
  long line = 0;
  while (std::getline(iss, raw)) {
    ++line;
    const auto hash = raw.find('#');
    std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig("expected 'key = value' (line " + std::to_string(line) + ")");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    const auto it = handlers.find(key);
    if (it == handlers.end())
      throw InvalidConfig("unknown config key '" + key + "' (line " + std::to_string(line) + ")");
    it->second(value, line);
  }
  return cfg;
}

HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string config_to_text(const HarnessConfig& cfg) {
  const ScenarioConfig& sc = cfg.bench.scenario;
  const MatchConfig& mc = cfg.bench.pipeline.match;
  const PipelineConfig& pc = cfg.bench.pipeline;
  std::ostringstream out;
  out << "seed = " << sc.seed << "\n"
      << "num_agents = " << sc.num_agents << "\n"
      << "num_objects = " << sc.num_objects << "\n"
      << "world_extent = " << fmt_double(sc.world_extent) << "\n"
      << "object_speed_range = " << fmt_double(sc.object_speed_range.lo) << " "
      << fmt_double(sc.object_speed_range.hi) << "\n"
      << "sample_interval_tau = " << fmt_double(sc.sample_interval_tau) << "\n"
      << "duration = " << sc.duration << "\n"
      << "fov_radius = " << fmt_double(sc.fov_radius) << "\n"
      << "detection_jitter_sigma = " << fmt_double(sc.detection_jitter_sigma) << "\n"
      << "miss_rate = " << fmt_double(sc.miss_rate) << "\n"
      << "false_positive_rate = " << fmt_double(sc.false_positive_rate) << "\n"
      << "clock_offset_range = " << fmt_double(sc.clock_offset_range.lo) << " "
      << fmt_double(sc.clock_offset_range.hi) << "\n"
      << "latency_range = " << fmt_double(sc.latency_range.lo) << " "
      << fmt_double(sc.latency_range.hi) << "\n"
      << "pose_attack = " << (sc.pose_attack ? "true" : "false") << "\n"
      << "odometry_drift_sigma = " << fmt_double(sc.odometry_drift_sigma) << "\n"
      << "edge_threshold = " << fmt_double(mc.edge_threshold) << "\n"
      << "gamma_anchors = " << mc.gamma_anchors << "\n"
      << "p_exp = " << fmt_double(mc.p_exp) << "\n"
      << "min_subgraph_size = " << mc.min_subgraph_size << "\n"
      << "max_seeds = " << (mc.max_seeds ? std::to_string(*mc.max_seeds) : "none") << "\n"
      << "multi_anchor = " << (mc.multi_anchor ? "true" : "false") << "\n"
      << "feature_mode = "
      << (pc.feature_mode == FeatureMode::Handcrafted ? "handcrafted" : "learned") << "\n"
      << "estimator = " << (pc.estimator == PoseEstimator::Ransac ? "ransac" : "lmeds") << "\n"
      << "ransac_iterations = " << pc.ransac_iterations << "\n"
      << "inlier_radius = " << fmt_double(pc.inlier_radius) << "\n"
      << "estimator_seed = " << pc.estimator_seed << "\n"
      << "buffer_length = " << pc.buffer_length << "\n"
      << "trials = " << cfg.bench.trials << "\n"
      << "bench_seed = " << cfg.bench.bench_seed << "\n";
  if (!cfg.checkpoint.empty()) out << "checkpoint = " << cfg.checkpoint << "\n";
  return out.str();
}

void export_frames(const std::vector<std::vector<DetectionFrame>>& streams,
                   const std::string& path, bool with_truth_ids) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& stream : streams) {
    for (const DetectionFrame& f : stream) {
      json j;
      j["agent"] = f.agent_id;
      j["t"] = static_cast<int64_t>(std::llround(f.local_time_ms));
      json boxes = json::array();
      for (const DetectionBox& b : f.boxes) boxes.push_back({b.x, b.y, b.yaw});
      j["boxes"] = std::move(boxes);
      if (with_truth_ids) {
        json ids = json::array();
        for (const DetectionBox& b : f.boxes) {
          if (b.truth_id)
            ids.push_back(*b.truth_id);
          else
            ids.push_back(nullptr);
        }
        j["truth_ids"] = std::move(ids);
      }
      out << j.dump() << "\n";
    }
  }
  if (!out) throw IoError("failed writing: " + path);
}

std::vector<std::vector<DetectionFrame>> import_frames(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::vector<std::vector<DetectionFrame>> streams;
  std::map<std::string, size_t> agent_index;
  std::string lineBuf;
  long line = 0;
  while (std::getline(in, lineBuf)) {
    ++line;
    if (trim(lineBuf).empty()) continue;
    json j;
    try {
      j = json::parse(lineBuf);
    } catch (const json::exception& e) {
      throw MalformedRecord(std::string("invalid JSON record: ") + e.what(), line);
    }
    DetectionFrame f;
    try {
      f.agent_id = j.at("agent").get<std::string>();
      f.local_time_ms = static_cast<double>(j.at("t").get<int64_t>());
      const auto& boxes = j.at("boxes");
      const json* ids = j.contains("truth_ids") ? &j.at("truth_ids") : nullptr;
      if (ids && ids->size() != boxes.size())
        throw MalformedRecord("truth_ids length differs from boxes", line);
      for (size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes.at(i);
        if (b.size() != 3) throw MalformedRecord("box needs [x, y, yaw]", line);
        DetectionBox box;
        box.x = b.at(0).get<double>();
        box.y = b.at(1).get<double>();
        box.yaw = b.at(2).get<double>();
        if (!std::isfinite(box.x) || !std::isfinite(box.y) || !std::isfinite(box.yaw))
          throw MalformedRecord("non-finite box coordinate", line);
        if (ids && !ids->at(i).is_null()) box.truth_id = ids->at(i).get<int>();
        f.boxes.push_back(box);
      }
    } catch (const json::exception& e) {
      throw MalformedRecord(std::string("bad frame record: ") + e.what(), line);
    }
    auto [it, fresh] = agent_index.try_emplace(f.agent_id, streams.size());
    if (fresh) streams.emplace_back();
    streams[it->second].push_back(std::move(f));
  }
  return streams;
}

namespace {

json pose_to_json(const Pose2D& p) { return {p.x, p.y, p.theta}; }

Pose2D pose_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json transform_to_json(const RigidTransform2D& t) { return {t.rotation, t.tx, t.ty}; }

RigidTransform2D transform_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

void export_truth(const Scenario& sc, const std::string& path) {
  json j;
  j["tau_ms"] = sc.truth.tau_ms;
  json agents = json::array();
  for (const AgentTruth& a : sc.truth.agents) {
    json aj;
    aj["id"] = a.id;
    aj["clock_offset_ms"] = a.clock_offset_ms;
    json poses = json::array(), adv = json::array();
    for (const Pose2D& p : a.poses) poses.push_back(pose_to_json(p));
    for (const Pose2D& p : a.advertised_poses) adv.push_back(pose_to_json(p));
    aj["poses"] = std::move(poses);
    aj["advertised_poses"] = std::move(adv);
    agents.push_back(std::move(aj));
  }
  j["agents"] = std::move(agents);

  json objs = json::array();
  for (const auto& frame : sc.truth.object_positions) {
    json fj = json::array();
    for (const Point2D& p : frame) fj.push_back({p.x, p.y});
    objs.push_back(std::move(fj));
  }
  j["object_positions"] = std::move(objs);

  json msgs = json::array();
  for (const MessageTruth& m : sc.truth.messages) {
    json mj;
    mj["receiver"] = m.receiver;
    mj["sender"] = m.sender;
    mj["receiver_frame"] = m.receiver_frame;
    mj["sender_frame"] = m.sender_frame;
    mj["true_latency_ms"] = m.true_latency_ms;
    mj["advertised_latency_ms"] = m.advertised_latency_ms;
    mj["clock_deviation_ms"] = m.clock_deviation_ms;
    msgs.push_back(std::move(mj));
  }
  j["messages"] = std::move(msgs);

  json odom = json::array();
  for (const OdometryTrack& t : sc.odometry) {
    json tj = json::array();
    for (const RigidTransform2D& inc : t.increments) tj.push_back(transform_to_json(inc));
    odom.push_back(std::move(tj));
  }
  j["odometry"] = std::move(odom);

  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("failed writing: " + path);
}

TruthFile import_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("truth parse error in " + path + ": " + e.what());
  }
  try {
    TruthFile tf;
    tf.truth.tau_ms = j.at("tau_ms").get<double>();
    for (const auto& aj : j.at("agents")) {
      AgentTruth a;
      a.id = aj.at("id").get<std::string>();
      a.clock_offset_ms = aj.at("clock_offset_ms").get<double>();
      for (const auto& p : aj.at("poses")) a.poses.push_back(pose_from_json(p));
      for (const auto& p : aj.at("advertised_poses"))
        a.advertised_poses.push_back(pose_from_json(p));
      tf.truth.agents.push_back(std::move(a));
    }
    for (const auto& fj : j.at("object_positions")) {
      std::vector<Point2D> frame;
      for (const auto& p : fj) frame.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      tf.truth.object_positions.push_back(std::move(frame));
    }
    for (const auto& mj : j.at("messages")) {
      MessageTruth m;
      m.receiver = mj.at("receiver").get<int>();
      m.sender = mj.at("sender").get<int>();
      m.receiver_frame = mj.at("receiver_frame").get<int>();
      m.sender_frame = mj.at("sender_frame").get<int>();
      m.true_latency_ms = mj.at("true_latency_ms").get<double>();
      m.advertised_latency_ms = mj.at("advertised_latency_ms").get<double>();
      m.clock_deviation_ms = mj.at("clock_deviation_ms").get<double>();
      tf.truth.messages.push_back(m);
    }
    for (const auto& tj : j.at("odometry")) {
      OdometryTrack t;
      for (const auto& inc : tj) t.increments.push_back(transform_from_json(inc));
      tf.odometry.push_back(std::move(t));
    }
    return tf;
  } catch (const json::exception& e) {
    throw IoError("truth field error in " + path + ": " + e.what());
  }
}

std::string to_json_string(const AlignmentResult& r) {
  json j;
  j["status"] = r.status == AlignmentStatus::Aligned ? "aligned" : "rejected";
  j["ambiguous_time"] = r.ambiguous_time;
  if (!r.reject_reason.empty()) j["reject_reason"] = r.reject_reason;
  if (r.relative_pose) j["relative_pose"] = transform_to_json(*r.relative_pose);
  if (r.matched_ego_time_ms) j["matched_ego_time_ms"] = *r.matched_ego_time_ms;
  if (r.latency_estimate_ms) j["latency_estimate_ms"] = *r.latency_estimate_ms;
  if (r.clock_deviation_estimate_ms)
    j["clock_deviation_estimate_ms"] = *r.clock_deviation_estimate_ms;
  if (r.confidence) j["epsilon"] = *r.confidence;
  if (r.subgraph) {
    json pairs = json::array();
    for (const auto& [a, b] : r.subgraph->pairs) pairs.push_back({a, b});
    j["correspondences"] = std::move(pairs);
  }
  return j.dump();
}

void write_report_json(const MetricsReport& r, const std::string& path) {
  json j;
  j["trials"] = r.trials;
  j["aligned"] = r.aligned;
  j["rejected"] = r.rejected;
  j["mean_abs_rotation_error_deg"] = r.mean_abs_rotation_error_deg;
  j["mean_planar_error_m"] = r.mean_planar_error_m;
  j["error_rate"] = r.error_rate;
  j["sync_accuracy_all"] = r.sync_accuracy_all;
  j["sync_accuracy_aligned"] = r.sync_accuracy_aligned;
  j["mean_abs_clock_deviation_error_ms"] = r.mean_abs_clock_deviation_error_ms;
  j["rejection_rate"] = r.rejection_rate;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("failed writing: " + path);
}

namespace {

constexpr const char* kTrialsHeader =
    "trial,scenario_seed,receiver_frame,sender_frame,shared_objects,true_latency_ms,"
    "advertised_latency_ms,true_clock_deviation_ms,aligned,ambiguous_time,true_slot,"
    "matched_slot,est_latency_ms,est_clock_deviation_ms,true_dx,true_dy,true_dtheta,"
    "est_dx,est_dy,est_dtheta,translation_error_m,rotation_error_rad,baseline_dx,"
    "baseline_dy,baseline_dtheta,baseline_translation_error_m,baseline_rotation_error_rad,"
    "baseline_slot,psi,epsilon,reject_reason";

}  // namespace

void write_trials_csv(const std::vector<TrialRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << kTrialsHeader << "\n";
  for (const TrialRecord& t : records) {
    out << t.trial << ',' << t.scenario_seed << ',' << t.receiver_frame << ','
        << t.sender_frame << ',' << t.shared_objects << ',' << fmt_double(t.true_latency_ms)
        << ',' << fmt_double(t.advertised_latency_ms) << ','
        << fmt_double(t.true_clock_deviation_ms) << ',' << (t.aligned ? 1 : 0) << ','
        << (t.ambiguous_time ? 1 : 0) << ',' << t.true_slot << ',' << t.matched_slot << ','
        << fmt_double(t.est_latency_ms) << ',' << fmt_double(t.est_clock_deviation_ms) << ','
        << fmt_double(t.true_dx) << ',' << fmt_double(t.true_dy) << ','
        << fmt_double(t.true_dtheta) << ',' << fmt_double(t.est_dx) << ','
        << fmt_double(t.est_dy) << ',' << fmt_double(t.est_dtheta) << ','
        << fmt_double(t.translation_error_m) << ',' << fmt_double(t.rotation_error_rad) << ','
        << fmt_double(t.baseline_dx) << ',' << fmt_double(t.baseline_dy) << ','
        << fmt_double(t.baseline_dtheta) << ',' << fmt_double(t.baseline_translation_error_m)
        << ',' << fmt_double(t.baseline_rotation_error_rad) << ',' << t.baseline_slot << ','
        << t.psi << ',' << fmt_double(t.epsilon) << ',' << t.reject_reason << "\n";
  }
  if (!out) throw IoError("failed writing: " + path);
}

std::vector<TrialRecord> read_trials_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string lineBuf;
  long line = 0;
  if (!std::getline(in, lineBuf)) throw MalformedRecord("missing header", 1);
  ++line;
  if (trim(lineBuf) != kTrialsHeader) throw MalformedRecord("unexpected header", 1);

  std::vector<TrialRecord> out;
  while (std::getline(in, lineBuf)) {
    ++line;
    if (trim(lineBuf).empty()) continue;
    std::vector<std::string> cols;
    std::string cell;
    std::istringstream row(lineBuf);
    while (std::getline(row, cell, ',')) cols.push_back(cell);
    if (lineBuf.back() == ',') cols.push_back("");
    if (cols.size() != 31) throw MalformedRecord("expected 31 columns", line);
    try {
      TrialRecord t;
      size_t i = 0;
      t.trial = std::stoi(cols[i++]);
      t.scenario_seed = std::stoull(cols[i++]);
      t.receiver_frame = std::stoi(cols[i++]);
      t.sender_frame = std::stoi(cols[i++]);
      t.shared_objects = std::stoi(cols[i++]);
      t.true_latency_ms = std::stod(cols[i++]);
      t.advertised_latency_ms = std::stod(cols[i++]);
      t.true_clock_deviation_ms = std::stod(cols[i++]);
      t.aligned = cols[i++] == "1";
      t.ambiguous_time = cols[i++] == "1";
      t.true_slot = std::stoi(cols[i++]);
      t.matched_slot = std::stoi(cols[i++]);
      t.est_latency_ms = std::stod(cols[i++]);
      t.est_clock_deviation_ms = std::stod(cols[i++]);
      t.true_dx = std::stod(cols[i++]);
      t.true_dy = std::stod(cols[i++]);
      t.true_dtheta = std::stod(cols[i++]);
      t.est_dx = std::stod(cols[i++]);
      t.est_dy = std::stod(cols[i++]);
      t.est_dtheta = std::stod(cols[i++]);
      t.translation_error_m = std::stod(cols[i++]);
      t.rotation_error_rad = std::stod(cols[i++]);
      t.baseline_dx = std::stod(cols[i++]);
      t.baseline_dy = std::stod(cols[i++]);
      t.baseline_dtheta = std::stod(cols[i++]);
      t.baseline_translation_error_m = std::stod(cols[i++]);
      t.baseline_rotation_error_rad = std::stod(cols[i++]);
      t.baseline_slot = std::stoi(cols[i++]);
      t.psi = std::stoi(cols[i++]);
      t.epsilon = std::stod(cols[i++]);
      t.reject_reason = cols[i++];
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw MalformedRecord(std::string("bad trial row: ") + e.what(), line);
    }
  }
  return out;
}

void write_loss_csv(const std::vector<double>& epoch_loss, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "epoch,mean_loss\n";
  for (size_t i = 0; i < epoch_loss.size(); ++i)
    out << i << ',' << fmt_double(epoch_loss[i]) << "\n";
  if (!out) throw IoError("failed writing: " + path);
}

}  // namespace stalign
