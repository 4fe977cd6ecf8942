#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "lanerob/harness.hpp"
#include "lanerob/plots.hpp"

using namespace lanerob;

namespace {

struct Common {
  std::string spec_path;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::vector<std::string> detectors;
  int jobs = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--spec", c.spec_path, "Experiment spec (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seeds, "Seed(s), replacing the spec's list");
  cmd->add_option("--out", c.out, "Output directory, replacing the spec's output_dir");
  cmd->add_option("--detector", c.detectors, "Detector name, cmd:<command> or tcp:<host>:<port>; repeatable");
  cmd->add_option("--jobs", c.jobs, "Parallel cells")->check(CLI::PositiveNumber);
}

ExperimentSpec resolve(const Common& c) {
  auto spec = load_spec(c.spec_path);
  if (!c.seeds.empty()) spec.seeds = c.seeds;
  if (!c.out.empty()) spec.output_dir = c.out;
  if (!c.detectors.empty()) spec.detectors = c.detectors;
  if (c.jobs > 0) spec.jobs = c.jobs;
  spec.doc["seeds"] = spec.seeds;
  spec.doc["detectors"] = spec.detectors;
  spec.doc["output_dir"] = spec.output_dir;
  spec.doc.erase("jobs");
  return spec;
}

void emit(const Json& report, const Sidecars& side, const fs::path& dir) {
  write_outputs(report, side, dir);
  for (const auto& [name, svg] : report_plots(report)) write_file((dir / name).string(), svg);
  std::cout << "wrote " << (dir / "report.json").string() << "\n";
}

void print_summary(const Json& report) {
  if (report.contains("aggregates")) {
    for (const auto& a : report.at("aggregates")) std::cout << "  " << a.dump() << "\n";
  }
  if (report.contains("matrix")) {
    for (const auto& [atk, m] : report.at("matrix").items()) std::cout << "  " << atk << " " << m.dump() << "\n";
  }
}

int run_attack(const Common& c, const std::string& scenario_filter) {
  const auto spec = resolve(c);
  Sidecars side;
  Json out = Json::array();
  for (const auto& det_name : spec.detectors) {
    for (const auto& cell : attack_cells(spec)) {
      const auto& sc = spec.scenarios[cell.scenario];
      if (!scenario_filter.empty() && sc.name != scenario_filter) continue;
      auto det = make_detector(det_name, spec);
      const auto g = generate_attack(spec, sc, *det, cell.attack, cell.direction, cell.seed, spec.attack.end_to_end);
      Json r = {{"scenario", sc.name}, {"detector", det_name}, {"attack", to_string(cell.attack)},
                {"direction", to_string(cell.direction)}, {"seed", cell.seed}};
      r["attack_loss"] = {{"initial", g.initial_loss}, {"best", g.best_loss}};
      r["artifact"] = artifact_summary(g.artifact);
      add_artifact_files(side, row_id(r), g.artifact);
      std::cout << row_id(r) << " loss " << g.initial_loss << " -> " << g.best_loss << "\n";
      out.push_back(std::move(r));
    }
  }
  const fs::path dir = spec.output_dir;
  fs::create_directories(dir);
  for (const auto& [rel, contents] : side.files) {
    fs::create_directories((dir / rel).parent_path());
    write_file((dir / rel).string(), contents);
  }
  write_file((dir / "attacks.json").string(), out.dump(2) + "\n");
  return 0;
}

int run_render(const Common& c, const std::string& scenario_filter, const std::string& artifact, int frames) {
  const auto spec = resolve(c);
  AttackArtifact art;
  if (!artifact.empty()) {
    const Json j = Json::parse(read_file(artifact));
    if (j.contains("start")) {
      art.line = line_from_json(j);
    } else {
      art.patch = patch_from_json(j);
    }
  }
  const fs::path dir = spec.output_dir;
  fs::create_directories(dir);
  for (const auto& sc : spec.scenarios) {
    if (!scenario_filter.empty() && sc.name != scenario_filter) continue;
    const Scene scene = sc.scene(art);
    const auto poses = reference_poses(sc, std::max(0, frames - 1));
    for (std::size_t k = 0; k < poses.size(); ++k) {
      const auto cam = render_scene(scene, spec.camera, poses[k]);
      char stem[64];
      std::snprintf(stem, sizeof stem, "_%03zu", k);
      write_file((dir / (sc.name + stem + ".ppm")).string(), encode_ppm(cam));
      write_file((dir / (sc.name + stem + "_input.pgm")).string(), encode_pgm(adapt_crop(spec.camera, cam)));
    }
    std::cout << sc.name << ": " << poses.size() << " frames\n";
  }
  return 0;
}

int run_report(const std::string& path, const std::string& out) {
  const Json report = Json::parse(read_file(path));
  const fs::path dir = out.empty() ? fs::path(path).parent_path() : fs::path(out);
  if (report.contains("aggregates") && compute_aggregates(report) != report.at("aggregates")) {
    std::cerr << "warning: stored aggregates differ from recomputation\n";
  }
  fs::create_directories(dir);
  const auto plots = report_plots(report);
  for (const auto& [name, svg] : plots) write_file((dir / name).string(), svg);
  std::cout << plots.size() << " plot(s) written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-detection robustness evaluation"};
  app.require_subcommand(1);

  Common conv, e2e, xfer, atk, rnd;
  auto* c_conv = app.add_subcommand("eval-conv", "Conventional accuracy/F1 evaluation");
  add_common(c_conv, conv);
  auto* c_e2e = app.add_subcommand("eval-e2e", "Closed-loop end-to-end evaluation");
  add_common(c_e2e, e2e);
  auto* c_xfer = app.add_subcommand("transfer", "Attack transferability matrix");
  add_common(c_xfer, xfer);

  std::string atk_scenario;
  auto* c_atk = app.add_subcommand("attack", "Generate attack artifacts only");
  add_common(c_atk, atk);
  c_atk->add_option("--scenario", atk_scenario, "Restrict to one scenario by name");

  std::string rnd_scenario, rnd_artifact;
  int rnd_frames = 1;
  auto* c_rnd = app.add_subcommand("render", "Write camera frames and detector inputs");
  add_common(c_rnd, rnd);
  c_rnd->add_option("--scenario", rnd_scenario, "Restrict to one scenario by name");
  c_rnd->add_option("--artifact", rnd_artifact, "Patch or line JSON to place in the scene")->check(CLI::ExistingFile);
  c_rnd->add_option("--frames", rnd_frames, "Frames along the reference trajectory")->check(CLI::PositiveNumber);

  std::string rep_path, rep_out;
  auto* c_rep = app.add_subcommand("report", "Re-emit plots from a saved report");
  c_rep->add_option("report", rep_path, "report.json")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--out", rep_out, "Output directory (default: next to the report)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_conv->parsed() || c_e2e->parsed() || c_xfer->parsed()) {
      const Common& c = c_conv->parsed() ? conv : c_e2e->parsed() ? e2e : xfer;
      const auto spec = resolve(c);
      Sidecars side;
      const Json report = c_conv->parsed()  ? run_conventional(spec, side)
                          : c_e2e->parsed() ? run_end_to_end(spec, side)
                                            : run_transfer(spec, side);
      emit(report, side, spec.output_dir);
      print_summary(report);
      return 0;
    }
    if (c_atk->parsed()) return run_attack(atk, atk_scenario);
    if (c_rnd->parsed()) return run_render(rnd, rnd_scenario, rnd_artifact, rnd_frames);
    if (c_rep->parsed()) return run_report(rep_path, rep_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
