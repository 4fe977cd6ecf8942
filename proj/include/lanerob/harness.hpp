#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "lanerob/attack_line.hpp"
#include "lanerob/attack_patch.hpp"
#include "lanerob/config.hpp"
#include "lanerob/metrics.hpp"
#include "lanerob/protocol.hpp"
#include "lanerob/simulator.hpp"

namespace lanerob {

inline constexpr const char* kVersion = "0.1.0";

enum class AttackKind { wb_drp, bb_drp, bb_line };

inline const char* to_string(AttackKind a) {
  switch (a) {
    case AttackKind::wb_drp: return "wb_drp";
    case AttackKind::bb_drp: return "bb_drp";
    case AttackKind::bb_line: return "bb_line";
  }
  return "?";
}

inline AttackKind parse_attack(const std::string& s) {
  if (s == "wb_drp") return AttackKind::wb_drp;
  if (s == "bb_drp") return AttackKind::bb_drp;
  if (s == "bb_line") return AttackKind::bb_line;
  throw Error("unknown attack '" + s + "'");
}

struct ExperimentSpec {
  Json doc;
  CameraModel camera = CameraModel::pinhole({});
  std::vector<Scenario> scenarios;
  std::vector<std::vector<AttackDirection>> directions;  // per scenario
  std::vector<std::string> detectors;
  std::vector<AttackKind> attacks;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  AccuracyConfig accuracy;
  OutcomeConfig outcome;
  AttackSettings attack;
  int jobs = 1;
};

/// Builds a spec from a merged config document; scenario entries are inline objects or preset
/// paths relative to `base_dir`.
inline ExperimentSpec spec_from_json(const Json& doc, const fs::path& base_dir) {
  ExperimentSpec s;
  s.doc = doc;
  s.camera = camera_from_json(doc.value("camera", Json::object()));
  s.accuracy = accuracy_from_json(doc.value("metrics", Json::object()));
  s.outcome = outcome_from_json(doc.value("metrics", Json::object()));
  s.attack = attack_settings_from_json(doc);
  std::vector<AttackDirection> dirs;
  for (const auto& d : doc.value("directions", Json::array({"left", "right"}))) dirs.push_back(parse_direction(d.get<std::string>()));
  for (const auto& e : doc.value("scenarios", Json::array())) {
    Json preset = e.is_string() ? load_config(base_dir / e.get<std::string>()) : e;
    s.scenarios.push_back(scenario_from_json(preset, doc));
    std::vector<AttackDirection> sd;
    for (const auto& d : preset.value("directions", Json::array())) sd.push_back(parse_direction(d.get<std::string>()));
    s.directions.push_back(sd.empty() ? dirs : sd);
  }
  for (const auto& d : doc.value("detectors", Json::array())) s.detectors.push_back(d.get<std::string>());
  for (const auto& a : doc.value("attacks", Json::array())) s.attacks.push_back(parse_attack(a.get<std::string>()));
  for (const auto& v : doc.value("seeds", Json::array({0}))) s.seeds.push_back(v.get<std::uint64_t>());
  s.output_dir = doc.value("output_dir", s.output_dir);
  s.jobs = std::max(1, doc.value("jobs", 1));
  if (s.scenarios.empty()) throw Error("experiment spec: no scenarios");
  if (s.detectors.empty()) throw Error("experiment spec: no detectors");
  return s;
}

inline ExperimentSpec load_spec(const fs::path& path) { return spec_from_json(load_config(path), path.parent_path()); }

// ---------------------------------------------------------------------------
// Detectors by name

/// Detector behind an in-process loopback adapter; owns the served detector.
class LoopbackDetector : public Detector {
 public:
  LoopbackDetector(std::unique_ptr<Detector> inner, ExternalOptions opts)
      : inner_(std::move(inner)), outer_(loopback_for(*inner_), std::move(opts)) {}
  const DetectorInfo& info() const override { return outer_.info(); }
  LaneRepresentation detect(const ImageFrame& input, const FrameContext* ctx = nullptr) override {
    return outer_.detect(input, ctx);
  }
  GrayImage gradient(const ImageFrame& input, AttackDirection dir, const PixelMask& region,
                     const ErcOptions& erc) override {
    return outer_.gradient(input, dir, region, erc);
  }

 private:
  std::unique_ptr<Detector> inner_;
  ExternalDetector outer_;
};

/// "oracle", "classical", "loopback:<built-in>", "cmd:<shell command>" or "tcp:<host>:<port>".
inline std::unique_ptr<Detector> make_detector(const std::string& name, const ExperimentSpec& spec) {
  const int w = spec.camera.detector_width();
  const int h = spec.camera.detector_height();
  const auto dcfg = spec.doc.value("detector_config", Json::object());
  ExternalOptions ext;
  ext.name = name;
  ext.timeout = std::chrono::milliseconds(dcfg.value("external_timeout_ms", 5000));
  if (name == "oracle") return std::make_unique<OracleDetector>(w, h, oracle_from_json(dcfg.value("oracle", Json::object())));
  if (name == "classical") {
    return std::make_unique<ClassicalDetector>(w, h, classical_from_json(dcfg.value("classical", Json::object())));
  }
  if (name.rfind("loopback:", 0) == 0) return std::make_unique<LoopbackDetector>(make_detector(name.substr(9), spec), ext);
  if (name.rfind("cmd:", 0) == 0) {
    return std::make_unique<ExternalDetector>(std::make_unique<ChildProcessTransport>(name.substr(4)), ext);
  }
  if (name.rfind("tcp:", 0) == 0) {
    const auto rest = name.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw Error("detector '" + name + "': expected tcp:<host>:<port>");
    return std::make_unique<ExternalDetector>(
        std::make_unique<TcpTransport>(rest.substr(0, colon), std::stoi(rest.substr(colon + 1))), ext);
  }
  throw Error("unknown detector '" + name + "'");
}

// ---------------------------------------------------------------------------
// Attack generation

inline std::uint64_t stable_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t attack_seed(std::uint64_t seed, const Scenario& sc, AttackKind a, AttackDirection d) {
  return derive_seed(seed, {stable_hash(sc.name), static_cast<std::uint64_t>(a), static_cast<std::uint64_t>(d)});
}

struct GeneratedAttack {
  AttackArtifact artifact;
  double initial_loss = 0.0;  // iteration-0 / no-line loss
  double best_loss = 0.0;
  std::vector<double> history;
};

inline GeneratedAttack generate_attack(const ExperimentSpec& spec, const Scenario& sc, Detector& det, AttackKind kind,
                                       AttackDirection dir, std::uint64_t seed, const PatchShape& shape) {
  const auto& a = spec.attack;
  RoadPatch patch = make_scenario_patch(sc, shape.width, shape.length, a.cell, a.base_gray);
  patch.overdraw_lanes = a.overdraw_lanes;
  GenerationWindow win(sc, spec.camera, patch.area());
  const auto s = attack_seed(seed, sc, kind, dir);
  GeneratedAttack out;
  if (kind == AttackKind::bb_line) {
    auto r = optimize_line(win, det, dir, a.line, s);
    out.artifact.line = r.line;
    out.initial_loss = r.benign_loss;
    out.best_loss = r.best_loss;
    out.history = std::move(r.best_history);
  } else {
    PatchAttackOptions o;
    o.budget = a.budget;
    o.mode = kind == AttackKind::wb_drp ? AttackMode::white_box : AttackMode::black_box;
    o.sampling = a.sampling;
    auto r = optimize_patch(win, det, dir, patch, o, s);
    out.artifact.patch = std::move(r.patch);
    out.initial_loss = r.initial_loss;
    out.best_loss = r.best_loss;
    out.history = std::move(r.losses);
  }
  return out;
}

inline Json artifact_summary(const AttackArtifact& a) {
  if (a.line) return {{"kind", "line"}, {"line", to_json(*a.line)}};
  if (a.patch) return {{"kind", "patch"}, {"patch", to_json(*a.patch, false)}};
  return {{"kind", "none"}};
}

// ---------------------------------------------------------------------------
// Work pool

/// Runs fn(0..n-1) on up to `jobs` threads; the first exception is rethrown after all workers stop.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next++;
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Reports

inline std::string iso_timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json report_metadata(const ExperimentSpec& spec, const std::string& kind) {
  const auto& sc = spec.scenarios.front();
  return {{"tool", "lanerob"},
          {"version", kVersion},
          {"kind", kind},
          {"controller", "pure_pursuit"},
          {"controller_params",
           {{"lookahead_time", sc.control.lookahead_time},
            {"min_lookahead", sc.control.min_lookahead},
            {"max_steer_step_deg", sc.max_steer_step_deg},
            {"detect_rate", sc.detect_rate},
            {"actuate_rate", sc.actuate_rate}}},
          {"seeds", spec.seeds},
          {"spec", spec.doc},
          {"generated_at", iso_timestamp()}};
}

/// Report with volatile fields removed, for byte comparisons.
inline Json strip_volatile(Json report) {
  if (report.contains("metadata")) report["metadata"].erase("generated_at");
  return report;
}

inline std::string row_id(const Json& r) {
  std::string id = r.at("scenario").get<std::string>() + "__" + r.at("detector").get<std::string>() + "__" +
                   r.at("attack").get<std::string>();
  if (r.contains("direction") && r.at("direction").is_string()) id += "__" + r.at("direction").get<std::string>();
  if (r.contains("seed") && r.at("seed").is_number()) id += "__s" + std::to_string(r.at("seed").get<std::uint64_t>());
  for (auto& c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  }
  return id;
}

/// Success rates per (detector, attack) recomputed from the rows of an end-to-end or conventional report.
inline Json compute_aggregates(const Json& report) {
  const auto kind = report.at("metadata").at("kind").get<std::string>();
  std::map<std::pair<std::string, std::string>, std::vector<const Json*>> groups;
  for (const auto& r : report.at("rows")) {
    groups[{r.at("detector").get<std::string>(), r.at("attack").get<std::string>()}].push_back(&r);
  }
  Json out = Json::array();
  for (const auto& [key, rows] : groups) {
    Json a = {{"detector", key.first}, {"attack", key.second}, {"n", rows.size()}};
    const double n = static_cast<double>(rows.size());
    if (kind == "conventional") {
      for (const char* m : {"accuracy", "f1", "precision", "recall"}) {
        double s = 0.0;
        for (const auto* r : rows) s += r->at(m).get<double>();
        a[m] = s / n;
      }
    } else if (key.second == "benign") {
      double f = 0.0;
      for (const auto* r : rows) f += r->at("benign_fail").get<bool>() ? 1.0 : 0.0;
      a["benign_fail_rate"] = f / n;
    } else {
      double t = 0.0;
      double u = 0.0;
      for (const auto* r : rows) {
        t += r->at("targeted").get<bool>() ? 1.0 : 0.0;
        u += r->at("untargeted").get<bool>() ? 1.0 : 0.0;
      }
      a["targeted_rate"] = t / n;
      a["untargeted_rate"] = u / n;
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline Json deviation_json(const DeviationTrace& d) {
  Json out = Json::array();
  for (const auto& s : d.samples) out.push_back({s.t, s.deviation()});
  return out;
}

inline Json outcome_json(const Outcome& o) {
  return {{"targeted", o.targeted},
          {"untargeted", o.untargeted},
          {"max_deviation", o.max_deviation},
          {"time_to_threshold", o.time_to_threshold ? Json(*o.time_to_threshold) : Json(nullptr)}};
}

/// Side files written next to a report: trajectories and attack artifacts.
struct Sidecars {
  std::map<std::string, std::string> files;  // relative path -> contents

  void add(const std::string& rel, std::string contents) { files[rel] = std::move(contents); }
};

inline void write_outputs(const Json& report, const Sidecars& side, const fs::path& dir) {
  fs::create_directories(dir);
  write_file((dir / "report.json").string(), report.dump(2) + "\n");
  for (const auto& [rel, contents] : side.files) {
    const fs::path p = dir / rel;
    fs::create_directories(p.parent_path());
    write_file(p.string(), contents);
  }
}

inline void add_artifact_files(Sidecars& side, const std::string& id, const AttackArtifact& art) {
  if (art.line) side.add("artifacts/" + id + ".json", to_json(*art.line).dump(2) + "\n");
  if (art.patch) {
    const auto& p = *art.patch;
    std::vector<std::uint8_t> gray(p.cells());
    std::vector<std::uint8_t> mask(p.cells());
    for (std::size_t k = 0; k < p.cells(); ++k) {
      gray[k] = static_cast<std::uint8_t>(std::lround(p.gray(k)));
      mask[k] = p.mask[k] ? 255 : 0;
    }
    side.add("artifacts/" + id + ".pgm", encode_pgm(p.cols, p.rows, gray));
    side.add("artifacts/" + id + "_mask.pgm", encode_pgm(p.cols, p.rows, mask));
    side.add("artifacts/" + id + ".json", to_json(p).dump(2) + "\n");
  }
}

// ---------------------------------------------------------------------------
// End-to-end track

struct Cell {
  std::size_t scenario = 0;
  AttackKind attack = AttackKind::bb_line;
  AttackDirection direction = AttackDirection::right;
  std::uint64_t seed = 0;
};

inline std::vector<Cell> attack_cells(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < spec.scenarios.size(); ++s) {
    for (auto a : spec.attacks) {
      for (auto d : spec.directions[s]) {
        for (auto seed : spec.seeds) cells.push_back({s, a, d, seed});
      }
    }
  }
  return cells;
}

struct BenignRun {
  Trajectory trajectory;
  Outcome outcome;
  DeviationTrace vs_reference;
};

inline BenignRun run_benign(const ExperimentSpec& spec, const Scenario& sc, Detector& det) {
  BenignRun b;
  b.trajectory = run_scenario(sc, det, spec.camera);
  if (b.trajectory.valid) {
    b.vs_reference = lateral_deviation(b.trajectory, reference_trajectory(sc));
    b.outcome = classify_outcome(b.vs_reference, AttackDirection::right, spec.outcome, &b.vs_reference);
  }
  return b;
}

inline Json benign_row(const Scenario& sc, const std::string& det, const BenignRun& b, Sidecars& side) {
  Json r = {{"scenario", sc.name}, {"detector", det}, {"attack", "benign"}, {"direction", nullptr}, {"seed", nullptr}};
  const auto id = row_id(r);
  r["valid"] = b.trajectory.valid;
  r["error"] = b.trajectory.error;
  r["degraded"] = b.trajectory.degraded;
  r["benign_fail"] = !b.trajectory.valid || b.outcome.benign_fail;
  r["max_deviation"] = b.outcome.max_deviation;
  r["max_steer_step_deg"] = rad_to_deg(b.trajectory.max_steer_step);
  r["trajectory"] = "traj/" + id + ".csv";
  r["deviation"] = deviation_json(b.vs_reference);
  side.add("traj/" + id + ".csv", trajectory_csv(b.trajectory));
  return r;
}

/// Attacked closed-loop run scored against the benign run of the same scenario and detector.
inline Json attack_row(const ExperimentSpec& spec, const Cell& c, const std::string& det_name, Detector& det,
                       const GeneratedAttack& g, const BenignRun& benign, Sidecars& side) {
  const auto& sc = spec.scenarios[c.scenario];
  Json r = {{"scenario", sc.name}, {"detector", det_name}, {"attack", to_string(c.attack)},
            {"direction", to_string(c.direction)}, {"seed", c.seed}};
  const auto id = row_id(r);
  const auto tr = run_scenario(sc, det, spec.camera, g.artifact);
  r["valid"] = tr.valid && benign.trajectory.valid;
  r["error"] = !tr.error.empty() ? tr.error : benign.trajectory.error;
  r["degraded"] = tr.degraded;
  r["max_steer_step_deg"] = rad_to_deg(tr.max_steer_step);
  r["attack_loss"] = {{"initial", g.initial_loss}, {"best", g.best_loss}};
  r["artifact"] = artifact_summary(g.artifact);
  r["trajectory"] = "traj/" + id + ".csv";
  side.add("traj/" + id + ".csv", trajectory_csv(tr));
  if (r["valid"].get<bool>()) {
    const auto dev = lateral_deviation(tr, benign.trajectory);
    const auto o = classify_outcome(dev, c.direction, spec.outcome);
    r.update(outcome_json(o));
    r["deviation"] = deviation_json(dev);
  } else {
    r.update(outcome_json(Outcome{}));
    r["deviation"] = Json::array();
  }
  return r;
}

inline Json run_end_to_end(const ExperimentSpec& spec, Sidecars& side) {
  const auto cells = attack_cells(spec);
  const std::size_t nd = spec.detectors.size();
  const std::size_t ns = spec.scenarios.size();
  std::vector<BenignRun> benign(nd * ns);
  std::vector<Json> brows(nd * ns);
  std::vector<Sidecars> bside(nd * ns);
  parallel_for(nd * ns, spec.jobs, [&](std::size_t i) {
    const auto& name = spec.detectors[i / ns];
    const auto& sc = spec.scenarios[i % ns];
    try {
      auto det = make_detector(name, spec);
      benign[i] = run_benign(spec, sc, *det);
    } catch (const Error& e) {
      benign[i].trajectory.valid = false;
      benign[i].trajectory.error = e.what();
    }
    brows[i] = benign_row(sc, name, benign[i], bside[i]);
  });
  std::vector<Json> rows(nd * cells.size());
  std::vector<Sidecars> aside(rows.size());
  parallel_for(rows.size(), spec.jobs, [&](std::size_t i) {
    const auto& name = spec.detectors[i / cells.size()];
    const auto& c = cells[i % cells.size()];
    const auto& sc = spec.scenarios[c.scenario];
    const auto& b = benign[(i / cells.size()) * ns + c.scenario];
    try {
      auto det = make_detector(name, spec);
      const auto g = generate_attack(spec, sc, *det, c.attack, c.direction, c.seed, spec.attack.end_to_end);
      rows[i] = attack_row(spec, c, name, *det, g, b, aside[i]);
      add_artifact_files(aside[i], row_id(rows[i]), g.artifact);
    } catch (const Error& e) {
      Json r = {{"scenario", sc.name}, {"detector", name}, {"attack", to_string(c.attack)},
                {"direction", to_string(c.direction)}, {"seed", c.seed}, {"valid", false}, {"error", e.what()}};
      r.update(outcome_json(Outcome{}));
      r["deviation"] = Json::array();
      rows[i] = std::move(r);
    }
  });
  Json report;
  report["metadata"] = report_metadata(spec, "end_to_end");
  report["rows"] = Json::array();
  for (std::size_t i = 0; i < brows.size(); ++i) {
    report["rows"].push_back(brows[i]);
    for (auto& [k, v] : bside[i].files) side.add(k, v);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    report["rows"].push_back(rows[i]);
    for (auto& [k, v] : aside[i].files) side.add(k, v);
  }
  report["aggregates"] = compute_aggregates(report);
  return report;
}

// ---------------------------------------------------------------------------
// Conventional track

/// Mean lane scores of `det` over the scenario's generation clip, with ground truth from the
/// analytic lane geometry reduced to the ego pair.
inline LaneScores score_clip(const ExperimentSpec& spec, const Scenario& sc, Detector& det, const AttackArtifact& art) {
  const Scene scene = sc.scene(art);
  const auto poses = reference_poses(sc, sc.generation_frames - 1);
  std::vector<double> ys_storage;
  const auto& ys = sample_rows(sc, spec.camera, ys_storage);
  OracleDetector truth(spec.camera.detector_width(), spec.camera.detector_height());
  const double cx = spec.camera.detector_width() / 2.0;
  LaneScores sum;
  for (std::size_t k = 0; k < poses.size(); ++k) {
    const FrameContext ctx{&scene, &spec.camera, poses[k], static_cast<int>(k)};
    const auto input = adapt_crop(spec.camera, render_scene(scene, spec.camera, poses[k], &spec.camera.crop_rect()));
    const auto rep = det.detect(input, &ctx);
    if (rep.family() != det.info().family) throw Error("detector emitted a family other than the declared one");
    validate(rep);
    const auto preds = filter_ego(canonicalize(rep, ys, sc.detection_threshold), cx);
    const auto gts = filter_ego(canonicalize(truth.lines_for(scene, spec.camera, poses[k], static_cast<int>(k)), ys,
                                             sc.detection_threshold),
                                cx);
    const auto s = match_and_score(preds, gts, spec.accuracy);
    sum.accuracy += s.accuracy;
    sum.f1 += s.f1;
    sum.precision += s.precision;
    sum.recall += s.recall;
  }
  const double n = static_cast<double>(poses.size());
  sum.accuracy /= n;
  sum.f1 /= n;
  sum.precision /= n;
  sum.recall /= n;
  return sum;
}

inline void put_scores(Json& r, const LaneScores& s) {
  r["accuracy"] = s.accuracy;
  r["f1"] = s.f1;
  r["precision"] = s.precision;
  r["recall"] = s.recall;
}

inline Json run_conventional(const ExperimentSpec& spec, Sidecars& side) {
  const auto cells = attack_cells(spec);
  const std::size_t nd = spec.detectors.size();
  const std::size_t ns = spec.scenarios.size();
  const std::size_t per_det = ns + cells.size();
  std::vector<Json> rows(nd * per_det);
  std::vector<Sidecars> rside(rows.size());
  parallel_for(rows.size(), spec.jobs, [&](std::size_t i) {
    const auto& name = spec.detectors[i / per_det];
    const std::size_t j = i % per_det;
    Json r;
    try {
      auto det = make_detector(name, spec);
      if (j < ns) {
        const auto& sc = spec.scenarios[j];
        r = {{"scenario", sc.name}, {"detector", name}, {"attack", "benign"}, {"direction", nullptr}, {"seed", nullptr}};
        put_scores(r, score_clip(spec, sc, *det, {}));
      } else {
        const auto& c = cells[j - ns];
        const auto& sc = spec.scenarios[c.scenario];
        r = {{"scenario", sc.name}, {"detector", name}, {"attack", to_string(c.attack)},
             {"direction", to_string(c.direction)}, {"seed", c.seed}};
        const auto g = generate_attack(spec, sc, *det, c.attack, c.direction, c.seed, spec.attack.conventional);
        put_scores(r, score_clip(spec, sc, *det, g.artifact));
        r["attack_loss"] = {{"initial", g.initial_loss}, {"best", g.best_loss}};
        r["artifact"] = artifact_summary(g.artifact);
        add_artifact_files(rside[i], row_id(r), g.artifact);
      }
      r["valid"] = true;
    } catch (const Error& e) {
      const bool benign = j < ns;
      const auto& sc = spec.scenarios[benign ? j : cells[j - ns].scenario];
      r = {{"scenario", sc.name}, {"detector", name}, {"attack", benign ? "benign" : to_string(cells[j - ns].attack)},
           {"direction", benign ? Json(nullptr) : Json(to_string(cells[j - ns].direction))},
           {"seed", benign ? Json(nullptr) : Json(cells[j - ns].seed)}, {"valid", false}, {"error", e.what()}};
      put_scores(r, LaneScores{});
    }
    rows[i] = std::move(r);
  });
  Json report;
  report["metadata"] = report_metadata(spec, "conventional");
  report["rows"] = Json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    report["rows"].push_back(rows[i]);
    for (auto& [k, v] : rside[i].files) side.add(k, v);
  }
  report["aggregates"] = compute_aggregates(report);
  return report;
}

// ---------------------------------------------------------------------------
// Transferability

/// Attacks generated against each source detector, replayed end-to-end against every target.
/// matrix[attack].untargeted[source][target] is the success rate over scenarios, directions and seeds.
inline Json run_transfer(const ExperimentSpec& spec, Sidecars& side) {
  const auto cells = attack_cells(spec);
  const std::size_t nd = spec.detectors.size();
  const std::size_t ns = spec.scenarios.size();
  std::vector<BenignRun> benign(nd * ns);
  parallel_for(nd * ns, spec.jobs, [&](std::size_t i) {
    try {
      auto det = make_detector(spec.detectors[i / ns], spec);
      benign[i] = run_benign(spec, spec.scenarios[i % ns], *det);
    } catch (const Error& e) {
      benign[i].trajectory.valid = false;
      benign[i].trajectory.error = e.what();
    }
  });
  // rows[source][cell][target]
  std::vector<Json> rows(nd * cells.size() * nd);
  std::vector<Sidecars> rside(nd * cells.size());
  parallel_for(nd * cells.size(), spec.jobs, [&](std::size_t i) {
    const std::size_t src = i / cells.size();
    const auto& c = cells[i % cells.size()];
    const auto& sc = spec.scenarios[c.scenario];
    std::optional<GeneratedAttack> g;
    std::string gen_error;
    try {
      auto det = make_detector(spec.detectors[src], spec);
      g = generate_attack(spec, sc, *det, c.attack, c.direction, c.seed, spec.attack.end_to_end);
    } catch (const Error& e) {
      gen_error = e.what();
    }
    for (std::size_t dst = 0; dst < nd; ++dst) {
      Json r;
      const auto& b = benign[dst * ns + c.scenario];
      try {
        if (!g) throw Error("attack generation failed: " + gen_error);
        auto det = make_detector(spec.detectors[dst], spec);
        Sidecars tmp;
        r = attack_row(spec, c, spec.detectors[dst], *det, *g, b, tmp);
        r.erase("trajectory");
      } catch (const Error& e) {
        r = {{"scenario", sc.name}, {"detector", spec.detectors[dst]}, {"attack", to_string(c.attack)},
             {"direction", to_string(c.direction)}, {"seed", c.seed}, {"valid", false}, {"error", e.what()}};
        r.update(outcome_json(Outcome{}));
        r["deviation"] = Json::array();
      }
      r["source"] = spec.detectors[src];
      rows[i * nd + dst] = std::move(r);
    }
    if (g) {
      Json key = {{"scenario", sc.name}, {"detector", spec.detectors[src]}, {"attack", to_string(c.attack)},
                  {"direction", to_string(c.direction)}, {"seed", c.seed}};
      add_artifact_files(rside[i], row_id(key), g->artifact);
    }
  });
  Json report;
  report["metadata"] = report_metadata(spec, "transfer");
  report["detectors"] = spec.detectors;
  report["rows"] = Json::array();
  for (auto& r : rows) report["rows"].push_back(r);
  for (auto& s : rside) {
    for (auto& [k, v] : s.files) side.add(k, v);
  }
  report["matrix"] = Json::object();
  for (auto a : spec.attacks) {
    std::vector<std::vector<double>> t(nd, std::vector<double>(nd, 0.0));
    std::vector<std::vector<double>> u = t;
    std::vector<std::vector<double>> n = t;
    for (const auto& r : report["rows"]) {
      if (r.at("attack") != to_string(a)) continue;
      const auto si = static_cast<std::size_t>(std::find(spec.detectors.begin(), spec.detectors.end(), r.at("source")) - spec.detectors.begin());
      const auto di = static_cast<std::size_t>(std::find(spec.detectors.begin(), spec.detectors.end(), r.at("detector")) - spec.detectors.begin());
      n[si][di] += 1.0;
      t[si][di] += r.at("targeted").get<bool>() ? 1.0 : 0.0;
      u[si][di] += r.at("untargeted").get<bool>() ? 1.0 : 0.0;
    }
    for (std::size_t i = 0; i < nd; ++i) {
      for (std::size_t j = 0; j < nd; ++j) {
        if (n[i][j] > 0) {
          t[i][j] /= n[i][j];
          u[i][j] /= n[i][j];
        }
      }
    }
    report["matrix"][to_string(a)] = {{"targeted", t}, {"untargeted", u}};
  }
  return report;
}

}  // namespace lanerob
