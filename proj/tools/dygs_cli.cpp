#include "dygs/checkpoint.hpp"
#include "dygs/config_io.hpp"
#include "dygs/dataset.hpp"
#include "dygs/image_io.hpp"
#include "dygs/metrics.hpp"
#include "dygs/synthetic.hpp"
#include "dygs/trainer.hpp"
#include "dygs/trajectory_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw dygs::IoError("cannot write " + path.string());
}

json pose_json(const dygs::Se3Pose& world_to_camera) {
  const dygs::Se3Pose c2w = world_to_camera.inverse();
  const dygs::Quat q = dygs::matrix_to_quat(c2w.rotation);
  return {{"t", {c2w.translation.x(), c2w.translation.y(), c2w.translation.z()}},
          {"q", {q[1], q[2], q[3], q[0]}}};
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  const dygs::SynthConfig cfg =
      config_path.empty() ? dygs::SynthConfig{} : dygs::synth_config_from_json(dygs::read_text_file(config_path));
  const dygs::SyntheticSequence seq = dygs::generate_sequence(cfg);
  fs::create_directories(out_dir);
  dygs::write_dataset(seq.dataset, out_dir);
  dygs::write_trajectory(seq.gt_trajectory, (fs::path(out_dir) / "gt_trajectory.txt").string());
  write_text(fs::path(out_dir) / "synth_config.json", dygs::synth_config_to_json(cfg));
  std::cout << "wrote " << seq.dataset.size() << " frames to " << out_dir << "\n";
  return 0;
}

struct ReconstructOptions {
  std::string data, config, out;
  std::optional<std::uint64_t> seed;
  bool no_retro = false, no_joint = false, full_activation = false, no_refine = false;
};

int cmd_reconstruct(const ReconstructOptions& o) {
  dygs::TrainConfig cfg =
      o.config.empty() ? dygs::TrainConfig{} : dygs::train_config_from_json(dygs::read_text_file(o.config));
  if (o.seed) cfg.seed = *o.seed;
  if (o.no_retro) cfg.retrospective = false;
  if (o.no_joint) cfg.joint_learning = false;
  if (o.full_activation) cfg.partial_activation = false;
  if (o.no_refine) cfg.refine_iterations = 0;
  cfg.validate();

  const dygs::Dataset dataset = dygs::load_sequence(o.data);
  fs::create_directories(o.out);
  std::ofstream log(fs::path(o.out) / "metrics.jsonl", std::ios::binary);
  if (!log) throw dygs::IoError("cannot write metrics log in " + o.out);

  const dygs::ReconstructionState state = dygs::reconstruct_sequence(dataset, cfg, [&](const dygs::FrameLog& l) {
    json rec = {{"frame", l.frame},
                {"timestamp", l.timestamp},
                {"psnr", l.psnr},
                {"ssim", l.ssim},
                {"loss", l.joint_loss_last},
                {"loss_first", l.joint_loss_first},
                {"retro_loss", l.retro_loss_mean},
                {"gaussians", l.gaussians_total},
                {"added", l.gaussians_added},
                {"pose", pose_json(l.pose)}};
    log << rec.dump() << "\n";
    log.flush();
    std::cerr << "frame " << l.frame << " psnr " << l.psnr << "\n";
  });

  dygs::write_trajectory({state.timestamps, state.trajectory}, (fs::path(o.out) / "trajectory.txt").string());
  dygs::save_checkpoint((fs::path(o.out) / "checkpoint.dygs").string(), cfg, dataset.intrinsics, state);
  std::cout << "reconstructed " << state.trajectory.size() << " frames into " << o.out << "\n";
  return 0;
}

std::optional<long> parse_index(const std::string& s) {
  long v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) return std::nullopt;
  return v;
}

int cmd_render(const std::string& checkpoint, const std::string& pose_arg, std::optional<double> time,
               const std::string& out) {
  const dygs::Checkpoint ck = dygs::load_checkpoint(checkpoint);
  dygs::Se3Pose pose;
  double pose_time = 0.0;
  if (const auto index = parse_index(pose_arg)) {
    if (*index < 0 || *index >= static_cast<long>(ck.state.trajectory.size()))
      throw std::invalid_argument("pose index " + pose_arg + " outside the stored trajectory of " +
                                  std::to_string(ck.state.trajectory.size()) + " poses");
    pose = ck.state.trajectory[*index];
    pose_time = ck.state.timestamps[*index];
  } else {
    const dygs::Trajectory t = dygs::read_trajectory(pose_arg);
    if (t.size() == 0) throw dygs::IoError("no poses in " + pose_arg);
    pose = t.poses.front();
    pose_time = t.timestamps.front();
  }
  const dygs::RenderOutput r = dygs::render_state(ck.state, time.value_or(pose_time), pose, ck.intrinsics);
  dygs::write_png_rgb(out, r.color);
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data, const std::string& out) {
  const dygs::Checkpoint ck = dygs::load_checkpoint(checkpoint);
  const dygs::Dataset dataset = dygs::load_sequence(data);
  if (dataset.size() != ck.state.trajectory.size())
    throw std::invalid_argument("dataset has " + std::to_string(dataset.size()) + " frames but the checkpoint has " +
                                std::to_string(ck.state.trajectory.size()) + " poses");
  json frames = json::array();
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const dygs::FrameObservation& f = dataset.frames[i];
    const dygs::RenderOutput r = dygs::render_state(ck.state, f.timestamp, ck.state.trajectory[i], f.intrinsics);
    const double p = dygs::psnr(r.color, f.rgb, &f.instrument_mask);
    const double s = dygs::ssim(r.color, f.rgb);
    psnr_sum += p;
    ssim_sum += s;
    frames.push_back({{"frame", i}, {"timestamp", f.timestamp}, {"psnr", p}, {"ssim", s}});
  }
  const double n = static_cast<double>(dataset.size());
  json report = {{"frames", frames}, {"mean_psnr", psnr_sum / n}, {"mean_ssim", ssim_sum / n}};

  dygs::Trajectory reference;
  for (std::size_t i = 0; i < dataset.size() && dataset.gt_poses[i]; ++i) {
    reference.timestamps.push_back(dataset.frames[i].timestamp);
    reference.poses.push_back(*dataset.gt_poses[i]);
  }
  if (reference.size() == dataset.size()) {
    const dygs::Trajectory estimated{ck.state.timestamps, ck.state.trajectory};
    report["ate_mm"] = dygs::ate(estimated, reference);
    report["trajectory_length_mm"] = reference.length() * 1000.0;
  } else {
    report["ate_mm"] = nullptr;
  }
  write_text(out, report.dump(2) + "\n");
  std::cout << "mean psnr " << report["mean_psnr"].get<double>() << " dB\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-free dynamic Gaussian splatting from RGBD video"};
  app.require_subcommand(1);

  std::string synth_config, synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
  synth->add_option("--config", synth_config, "Synthetic scene config (JSON); defaults when omitted");
  synth->add_option("--out", synth_out, "Output directory")->required();

  ReconstructOptions rec;
  std::uint64_t seed = 0;
  CLI::App* reconstruct = app.add_subcommand("reconstruct", "Reconstruct a dataset");
  reconstruct->add_option("--data", rec.data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--config", rec.config, "Training config (JSON); defaults when omitted");
  reconstruct->add_option("--out", rec.out, "Output directory")->required();
  CLI::Option* seed_opt = reconstruct->add_option("--seed", seed, "RNG seed");
  reconstruct->add_flag("--no-retro", rec.no_retro, "Spend the retrospective steps on the current frame only");
  reconstruct->add_flag("--no-joint", rec.no_joint, "Optimize pose, then deformation, instead of jointly");
  reconstruct->add_flag("--full-activation", rec.full_activation, "Update every deformation basis");
  reconstruct->add_flag("--no-refine", rec.no_refine, "Skip parameter refinement at initialization and expansion");

  std::string render_checkpoint, render_pose, render_out;
  std::optional<double> render_time;
  CLI::App* render = app.add_subcommand("render", "Render a view from a checkpoint");
  render->add_option("--checkpoint", render_checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  render->add_option("--pose", render_pose, "Trajectory index, or a trajectory file whose first pose is used")
      ->required();
  render->add_option("--time", render_time, "Scene time; defaults to the pose's timestamp");
  render->add_option("--out", render_out, "Output PNG")->required();

  std::string eval_checkpoint, eval_data, eval_out;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a checkpoint against a dataset");
  evaluate->add_option("--checkpoint", eval_checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", eval_data, "Dataset manifest")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", eval_out, "Report file (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(synth_config, synth_out);
    if (reconstruct->parsed()) {
      if (seed_opt->count() > 0) rec.seed = seed;
      return cmd_reconstruct(rec);
    }
    if (render->parsed()) return cmd_render(render_checkpoint, render_pose, render_time, render_out);
    if (evaluate->parsed()) return cmd_evaluate(eval_checkpoint, eval_data, eval_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
