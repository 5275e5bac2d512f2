/**
 * \file hero_cli.cpp
 * \brief Command-line entry points: simulate, project, train, odometry, evaluate, ablate.
 */
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "hero/checkpoint.hpp"
#include "hero/config.hpp"
#include "hero/error.hpp"
#include "hero/evaluation.hpp"
#include "hero/trainer.hpp"

namespace fs = std::filesystem;
using namespace hero;

namespace {

RunConfig config_or_default(const std::string& path) {
  if (!path.empty()) return load_config(path);
  RunConfig c;
  if (const char* env = std::getenv("HERO_SEED")) c.pipeline.train.seed = std::strtoull(env, nullptr, 10);
  return c;
}

struct Sequence {
  std::vector<CartesianImage> images;
  std::vector<double> times;
};

Sequence load_sequence(const fs::path& dir, const FrontendConfig& fc) {
  fs::path scans = dir / "scans";
  if (!fs::is_directory(scans)) scans = dir;
  Sequence seq;
  for (const auto& f : list_scan_files(scans)) {
    const PolarScan s = read_polar_scan(f);
    seq.images.push_back(project_scan(s, fc));
    seq.times.push_back(s.timestamp);
  }
  if (seq.images.empty()) throw std::runtime_error("no .prsc scans in " + scans.string());
  return seq;
}

void cmd_simulate(const std::string& config, const fs::path& out) {
  const RunConfig cfg = config_or_default(config);
  const SimSequence seq = simulate(cfg.sim);
  fs::create_directories(out / "scans");
  char name[32];
  for (std::size_t k = 0; k < seq.scans.size(); ++k) {
    std::snprintf(name, sizeof name, "%06zu.prsc", k);
    write_polar_scan(out / "scans" / name, seq.scans[k]);
  }
  write_groundtruth_csv((out / "groundtruth.csv").string(), seq.groundtruth);
  std::ofstream lm(out / "landmarks.csv");
  lm << "x,y,reflectivity\n";
  for (const auto& l : seq.world.landmarks) lm << l.position.x() << "," << l.position.y() << "," << l.reflectivity << "\n";
  write_config((out / "config.json").string(), cfg);
  std::cout << "wrote " << seq.scans.size() << " scans to " << out << "\n";
}

void cmd_project(const fs::path& scan, int size, double resolution, double beta, const fs::path& out) {
  const PolarScan s = read_polar_scan(scan);
  const CartesianImage img = polar_to_cartesian(s, size, resolution, beta);
  fs::path mask = out;
  mask.replace_filename(out.stem().string() + "_mask.pgm");
  write_pgm(out, img.pixels);
  write_pgm(mask, img.mask);
  std::cout << "wrote " << out << " and " << mask << "\n";
}

FeatureModel train_model(const RunConfig& cfg, const Sequence& seq, const fs::path& out, bool verbose) {
  FeatureModel model = FeatureModel::random(cfg.model, cfg.pipeline.train.seed);
  TrainOutputs outputs;
  if (!out.empty()) {
    fs::create_directories(out);
    outputs.log_csv = out / "train_log.csv";
    if (cfg.pipeline.train.checkpoint_every > 0) outputs.checkpoint_dir = out / "checkpoints";
  }
  if (verbose)
    outputs.on_step = [](const StepMetrics& m) {
      if (m.step % 50 == 0)
        std::fprintf(stderr, "step %ld loss %.4f inliers %d/%d grad %.3e %.0f ms%s\n", m.step, m.loss, m.inliers,
                     m.factors, m.grad_norm, m.wall_ms, m.skipped ? " (skipped)" : "");
    };
  train(model, seq.images, seq.times, cfg.pipeline, outputs);
  if (!out.empty()) save_checkpoint(out / "model.herm", model);
  return model;
}

void cmd_train(const std::string& config, const fs::path& data, const fs::path& out, int steps) {
  RunConfig cfg = config_or_default(config);
  if (steps >= 0) cfg.pipeline.train.max_iterations = steps;
  const Sequence seq = load_sequence(data, cfg.pipeline.effective_frontend());
  train_model(cfg, seq, out, true);
  write_config((out / "config.json").string(), cfg);
  std::cout << "wrote " << (out / "model.herm") << "\n";
}

void cmd_odometry(const std::string& config, const fs::path& model_path, const fs::path& data, const fs::path& out) {
  RunConfig cfg = config_or_default(config);
  const FeatureModel model = load_checkpoint(model_path);
  const Sequence seq = load_sequence(data, cfg.pipeline.effective_frontend());
  const OdometryResult res = run_odometry(model, seq.images, seq.times, cfg.pipeline);
  write_trajectory(out.string(), res.trajectory);
  int flagged = 0;
  for (bool f : res.dead_reckoned) flagged += f;
  std::cout << "wrote " << res.trajectory.size() << " poses to " << out << " (" << flagged << " dead-reckoned)\n";
}

void cmd_evaluate(const std::string& est, const std::string& gt, const std::string& lengths, const std::string& csv) {
  const std::vector<double> L = lengths.empty() ? kitti_lengths() : parse_lengths(lengths);
  const DriftReport rep = kitti_drift(read_any_trajectory(est), read_any_trajectory(gt), L);
  std::cout << rep.to_json() << "\n";
  if (!csv.empty()) rep.write_csv(csv);
}

void cmd_ablate(const std::string& config, const fs::path& data, const fs::path& out, int steps,
                const std::string& lengths) {
  RunConfig base = config_or_default(config);
  if (steps >= 0) base.pipeline.train.max_iterations = steps;
  const Trajectory gt = read_groundtruth_csv((data / "groundtruth.csv").string());
  const std::vector<double> L = parse_lengths(lengths);
  fs::create_directories(out);
  nlohmann::ordered_json result;
  const std::vector<std::pair<std::string, Ablation>> variants = {
      {"baseline", {}},
      {"scalar_weight", {true, false, false, false}},
      {"no_mah_gate", {false, true, false, false}},
      {"no_masking", {false, false, true, false}},
      {"no_augmentation", {false, false, false, true}},
  };
  for (const auto& [name, ab] : variants) {
    RunConfig cfg = base;
    cfg.pipeline.train.ablation = ab;
    const Sequence seq = load_sequence(data, cfg.pipeline.effective_frontend());
    std::fprintf(stderr, "== %s\n", name.c_str());
    const FeatureModel model = train_model(cfg, seq, out / name, true);
    const OdometryResult res = run_odometry(model, seq.images, seq.times, cfg.pipeline);
    write_trajectory((out / name / "est.txt").string(), res.trajectory);
    const DriftReport rep = kitti_drift(res.trajectory, gt, L);
    result[name] = {{"translational_error_percent", rep.translational_error},
                    {"rotational_error_deg_per_m", rep.rotational_error}};
  }
  std::ofstream(out / "ablation.json") << result.dump(2) << "\n";
  std::cout << result.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised radar odometry"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "JSON run configuration");

  auto* sim = app.add_subcommand("simulate", "Render a simulator sequence");
  std::string sim_out;
  sim->add_option("--out", sim_out)->required();

  auto* proj = app.add_subcommand("project", "Project one polar scan to a Cartesian image and mask");
  std::string proj_scan, proj_out = "projection.pgm";
  int proj_size = 640;
  double proj_res = 0.2592, proj_beta = 3.0;
  proj->add_option("--scan", proj_scan)->required();
  proj->add_option("--size", proj_size);
  proj->add_option("--resolution", proj_res);
  proj->add_option("--beta", proj_beta);
  proj->add_option("--out", proj_out);

  auto* tr = app.add_subcommand("train", "Train the feature model without groundtruth");
  std::string tr_data, tr_out;
  int tr_steps = -1;
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--out", tr_out)->required();
  tr->add_option("--steps", tr_steps, "override train.max_iterations");

  auto* od = app.add_subcommand("odometry", "Run sliding-window odometry with a trained model");
  std::string od_model, od_data, od_out = "est.txt";
  od->add_option("--model", od_model)->required();
  od->add_option("--data", od_data)->required();
  od->add_option("--out", od_out);

  auto* ev = app.add_subcommand("evaluate", "KITTI-style drift of an estimate against groundtruth");
  std::string ev_est, ev_gt, ev_lengths, ev_csv;
  ev->add_option("--est", ev_est)->required();
  ev->add_option("--gt", ev_gt)->required();
  ev->add_option("--lengths", ev_lengths, "start:stop:step in metres (default 100:800:100)");
  ev->add_option("--csv", ev_csv, "per-length errors");

  auto* ab = app.add_subcommand("ablate", "Train and evaluate each ablation switch");
  std::string ab_data, ab_out, ab_lengths = "10:80:10";
  int ab_steps = -1;
  ab->add_option("--data", ab_data)->required();
  ab->add_option("--out", ab_out)->required();
  ab->add_option("--steps", ab_steps);
  ab->add_option("--lengths", ab_lengths);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim) cmd_simulate(config, sim_out);
    if (*proj) cmd_project(proj_scan, proj_size, proj_res, proj_beta, proj_out);
    if (*tr) cmd_train(config, tr_data, tr_out, tr_steps);
    if (*od) cmd_odometry(config, od_model, od_data, od_out);
    if (*ev) cmd_evaluate(ev_est, ev_gt, ev_lengths, ev_csv);
    if (*ab) cmd_ablate(config, ab_data, ab_out, ab_steps, ab_lengths);
  } catch (const ValidationError& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
