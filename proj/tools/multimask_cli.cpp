// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synthetic scene generation, warping, mask
// computation, losses, depth/pose refinement, and evaluation metrics.
// Identical inputs produce byte-identical outputs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "multimask/io.hpp"
#include "multimask/losses.hpp"
#include "multimask/masks.hpp"
#include "multimask/metrics.hpp"
#include "multimask/refine.hpp"
#include "multimask/synth.hpp"
#include "multimask/warp.hpp"

namespace fs = std::filesystem;
using namespace multimask;

namespace {

struct CommonOpts {
  std::string out;
  std::uint64_t seed = kDefaultPresetSeed;
  int rounds = 3;
  double alpha = 0.15;
  double beta = -1.0;  // resolved against --dn unless set explicitly
  double gamma = 0.85;
  int scales = 4;
  bool dn = false;
  bool median_scale = false;
  int cap = 80;

  LossWeights weights() const {
    LossWeights w = LossWeights::defaults(dn);
    w.alpha = alpha;
    if (beta >= 0.0) w.beta = beta;
    w.gamma = gamma;
    w.num_scales = scales;
    w.validate();
    return w;
  }
};

void add_common(CLI::App* cmd, CommonOpts* opts, bool needs_out) {
  CLI::Option* out = cmd->add_option("--out", opts->out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--seed", opts->seed, "texture seed for presets");
  cmd->add_option("--rounds", opts->rounds, "repeated-masking rounds")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--alpha", opts->alpha, "reconstruction-loss weight");
  cmd->add_option("--beta", opts->beta, "smoothness-loss weight");
  cmd->add_option("--gamma", opts->gamma, "SSIM-loss weight");
  cmd->add_option("--scales", opts->scales, "pyramid levels")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--dn", opts->dn, "depth normalization (beta defaults to 0.2)");
  cmd->add_flag("--median-scale", opts->median_scale,
                "median-scale predictions before depth metrics");
  cmd->add_option("--cap", opts->cap, "depth cap in meters")
      ->check(CLI::IsMember({50, 80}));
}

fs::path out_dir(const CommonOpts& opts) {
  fs::path dir(opts.out);
  fs::create_directories(dir);
  return dir;
}

ImageBuffer load_image(const std::string& path) {
  return image_from_float_grid(load_pfm(path));
}

DepthMap load_depth(const std::string& path) {
  return depth_from_float_grid(load_pfm(path));
}

std::string csv_of(const std::vector<TraceRow>& trace) {
  std::string csv = "iter,loss,step\n";
  char line[96];
  for (const TraceRow& row : trace) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", row.iter, row.loss,
                  row.step);
    csv += line;
  }
  return csv;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

/// Explicit file inputs shared by warp/masks/loss/refine.
struct PairFileOpts {
  std::string image_t, image_tm1, depth_t, depth_tm1, pose, intrinsics;
};

void add_pair_files(CLI::App* cmd, PairFileOpts* files, std::string* preset) {
  cmd->add_option("--preset", *preset,
                  "one of identity, pure_translation, occluder_fig3, "
                  "reverse_fig5, thin_object_fig7");
  cmd->add_option("--image-t", files->image_t, "frame t image (PFM)");
  cmd->add_option("--image-tm1", files->image_tm1, "frame t-1 image (PFM)");
  cmd->add_option("--depth-t", files->depth_t, "frame t depth (PFM)");
  cmd->add_option("--depth-tm1", files->depth_tm1, "frame t-1 depth (PFM)");
  cmd->add_option("--pose", files->pose, "motion T_t JSON (t to t-1 frame)");
  cmd->add_option("--intrinsics", files->intrinsics, "intrinsics JSON");
}

struct PairInputs {
  ImageBuffer x_t, x_tm1;
  DepthMap d_t, d_tm1;
  PoseSE3 pose;
  Intrinsics intr;
  std::optional<PresetPair> preset;
};

PairInputs resolve_pair(const std::string& preset_name,
                        const PairFileOpts& files, std::uint64_t seed) {
  if (!preset_name.empty()) {
    PresetPair p = preset(parse_preset(preset_name), seed);
    RenderedPair f = render_pair(p);
    return PairInputs{std::move(f.x_t), std::move(f.x_tm1), std::move(f.d_t),
                      std::move(f.d_tm1), p.motion_t(), p.intr, std::move(p)};
  }
  if (files.image_t.empty() || files.image_tm1.empty() ||
      files.depth_t.empty() || files.depth_tm1.empty() || files.pose.empty() ||
      files.intrinsics.empty()) {
    throw std::runtime_error(
        "either --preset or all of --image-t/--image-tm1/--depth-t/"
        "--depth-tm1/--pose/--intrinsics are required");
  }
  return PairInputs{load_image(files.image_t),
                    load_image(files.image_tm1),
                    load_depth(files.depth_t),
                    load_depth(files.depth_tm1),
                    pose_from_json(load_json(files.pose)),
                    intrinsics_from_json(load_json(files.intrinsics)),
                    std::nullopt};
}

// ---------------------------------------------------------------------------

void run_synth(const CommonOpts& opts, const std::string& preset_name) {
  PresetPair p = preset(parse_preset(preset_name), opts.seed);
  RenderedPair f = render_pair(p);
  const fs::path dir = out_dir(opts);
  save_pfm(dir / "image_t.pfm", image_to_float_grid(f.x_t));
  save_pfm(dir / "image_tm1.pfm", image_to_float_grid(f.x_tm1));
  save_png_gray(dir / "image_t.png", image_to_gray(f.x_t));
  save_png_gray(dir / "image_tm1.png", image_to_gray(f.x_tm1));
  save_pfm(dir / "depth_t.pfm", to_float_grid(f.d_t.grid()));
  save_pfm(dir / "depth_tm1.pfm", to_float_grid(f.d_tm1.grid()));
  save_json(dir / "intrinsics.json", intrinsics_to_json(p.intr));
  save_json(dir / "pose.json", pose_to_json(p.motion_t()));
  save_png_gray(dir / "labels_t.png",
                labels_to_gray(visibility_oracle(p.scene, p.intr,
                                                 p.cam_to_world_t,
                                                 p.cam_to_world_tm1)));
  save_png_gray(dir / "labels_tm1.png",
                labels_to_gray(visibility_oracle(p.scene, p.intr,
                                                 p.cam_to_world_tm1,
                                                 p.cam_to_world_t)));
}

void run_warp(const CommonOpts& opts, const PairInputs& in) {
  Reconstruction r = reconstruct(in.x_tm1, in.d_t, in.pose, in.intr);
  const fs::path dir = out_dir(opts);
  save_pfm(dir / "xhat_t.pfm", image_to_float_grid(r.image));
  save_png_gray(dir / "xhat_t.png", image_to_gray(r.image));
  save_png_gray(dir / "edge_t.png",
                mask_to_gray(edge_mask(r.record, in.intr.width,
                                       in.intr.height)));
}

void run_masks(const CommonOpts& opts, const PairInputs& in) {
  RepeatedMaskingResult r = repeated_masking(in.x_t, in.x_tm1, in.d_t,
                                             in.d_tm1, in.pose, in.intr,
                                             opts.rounds);
  const fs::path dir = out_dir(opts);
  save_png_gray(dir / "mask_edge_t.png", mask_to_gray(r.masks_t.edge));
  save_png_gray(dir / "mask_overlap_t.png", mask_to_gray(r.masks_t.overlap));
  save_png_gray(dir / "mask_blank_t.png", mask_to_gray(r.masks_t.blank));
  save_png_gray(dir / "mask_edge_tm1.png", mask_to_gray(r.masks_tm1.edge));
  save_png_gray(dir / "mask_overlap_tm1.png",
                mask_to_gray(r.masks_tm1.overlap));
  save_png_gray(dir / "mask_blank_tm1.png", mask_to_gray(r.masks_tm1.blank));
  save_png_gray(dir / "mask_combined_t.png", mask_to_gray(combine(r.masks_t)));
  save_png_gray(dir / "mask_combined_tm1.png",
                mask_to_gray(combine(r.masks_tm1)));
  save_pfm(dir / "xhat_t.pfm", image_to_float_grid(r.xhat_t));
  save_pfm(dir / "xhat_tm1.pfm", image_to_float_grid(r.xhat_tm1));
  save_png_gray(dir / "xhat_t.png", image_to_gray(r.xhat_t));
  save_png_gray(dir / "xhat_tm1.png", image_to_gray(r.xhat_tm1));
  nlohmann::json summary{
      {"rounds_requested", opts.rounds},
      {"rounds_run", r.rounds_run},
      {"kept",
       {{"edge_t", r.masks_t.edge.count()},
        {"overlap_t", r.masks_t.overlap.count()},
        {"blank_t", r.masks_t.blank.count()},
        {"combined_t", combine(r.masks_t).count()},
        {"edge_tm1", r.masks_tm1.edge.count()},
        {"overlap_tm1", r.masks_tm1.overlap.count()},
        {"blank_tm1", r.masks_tm1.blank.count()},
        {"combined_tm1", combine(r.masks_tm1).count()}}},
      {"pixels", static_cast<std::uint64_t>(in.intr.width) * in.intr.height}};
  save_json(dir / "summary.json", summary);
}

void run_loss(const CommonOpts& opts, const PairInputs& in) {
  LossReport report = total_loss(in.x_t, in.x_tm1, in.d_t, in.d_tm1, in.pose,
                                 in.intr, opts.weights(), opts.dn, opts.rounds);
  save_json(out_dir(opts) / "report.json", loss_report_to_json(report));
  std::printf("total %.17g\n", report.total);
}

void run_refine_depth(const CommonOpts& opts, const PairInputs& in,
                      double init_scale, const std::string& init_path,
                      double step, int iters) {
  DepthMap initial = in.d_t;
  if (!init_path.empty()) {
    initial = load_depth(init_path);
  } else {
    Grid<double> g = in.d_t.grid();
    for (double& v : g.values()) v *= init_scale;
    initial = DepthMap(std::move(g));
  }
  RefineConfig cfg;
  cfg.step_size = step;
  cfg.max_iters = iters;
  cfg.weights = opts.weights();
  cfg.target = RefineTarget::kDepth;
  cfg.rounds = opts.rounds;
  RefineDepthResult r =
      refine_depth(initial, in.x_t, in.x_tm1, in.pose, in.intr, cfg);

  const fs::path dir = out_dir(opts);
  save_pfm(dir / "depth_refined.pfm", to_float_grid(r.depth.grid()));
  write_text(dir / "trace.csv", csv_of(r.trace));
  nlohmann::json summary{{"diverged", r.diverged},
                         {"iterations", r.trace.empty()
                                            ? 0
                                            : r.trace.back().iter},
                         {"initial_loss", r.trace.front().loss},
                         {"final_loss", r.trace.back().loss}};
  if (in.preset) {
    Mask all = Mask::ones(in.intr.width, in.intr.height);
    summary["abs_rel_initial"] =
        depth_metrics(initial, in.d_t, all, opts.cap, false).abs_rel;
    summary["abs_rel_final"] =
        depth_metrics(r.depth, in.d_t, all, opts.cap, false).abs_rel;
  }
  save_json(dir / "summary.json", summary);
  if (r.diverged) throw std::runtime_error("refine-depth diverged");
}

void run_refine_pose(const CommonOpts& opts, const PairInputs& in,
                     double perturb_tx, const std::string& init_path,
                     double step, int iters) {
  PoseSE3 initial = in.pose;
  if (!init_path.empty()) {
    initial = pose_from_json(load_json(init_path));
  } else {
    Twist off = Twist::Zero();
    off[0] = perturb_tx;
    initial = pose_exp(off) * in.pose;
  }
  RefineConfig cfg;
  cfg.step_size = step;
  cfg.max_iters = iters;
  cfg.weights = opts.weights();
  cfg.target = RefineTarget::kPose;
  cfg.rounds = opts.rounds;
  RefinePoseResult r =
      refine_pose(initial, in.d_t, in.x_t, in.x_tm1, in.intr, cfg);

  const fs::path dir = out_dir(opts);
  save_json(dir / "pose_refined.json", pose_to_json(r.pose));
  write_text(dir / "trace.csv", csv_of(r.trace));
  nlohmann::json summary{{"diverged", r.diverged},
                         {"initial_loss", r.trace.front().loss},
                         {"final_loss", r.trace.back().loss}};
  if (in.preset) {
    summary["translation_error"] =
        (r.pose.translation() - in.pose.translation()).norm();
  }
  save_json(dir / "summary.json", summary);
  if (r.diverged) throw std::runtime_error("refine-pose diverged");
}

void run_eval_depth(const CommonOpts& opts, const std::string& pred_path,
                    const std::string& gt_path) {
  DepthMap pred = load_depth(pred_path);
  DepthMap gt = load_depth(gt_path);
  Mask valid = Mask::zeros(gt.width(), gt.height());
  for (int j = 0; j < gt.height(); ++j) {
    for (int i = 0; i < gt.width(); ++i) {
      valid.set(i, j, gt.at(i, j) > 0.0 && gt.at(i, j) <= opts.cap);
    }
  }
  DepthMetrics m = depth_metrics(pred, gt, valid, opts.cap, opts.median_scale);
  const nlohmann::json j = depth_metrics_to_json(m);
  std::cout << j.dump(2) << "\n";
  if (!opts.out.empty()) save_json(out_dir(opts) / "depth_metrics.json", j);
}

void run_eval_ate(const CommonOpts& opts, const std::string& pred_path,
                  const std::string& gt_path, int snippet) {
  AteStats s = ate_snippets(poses_from_json(load_json(pred_path)),
                            poses_from_json(load_json(gt_path)), snippet);
  const nlohmann::json j = ate_stats_to_json(s);
  std::cout << j.dump(2) << "\n";
  if (!opts.out.empty()) save_json(out_dir(opts) / "ate.json", j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-mask image-reconstruction geometry toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string preset_name;
  PairFileOpts files;
  std::function<void()> action;

  CLI::App* synth_cmd =
      app.add_subcommand("synth", "render a synthetic frame pair");
  add_common(synth_cmd, &opts, true);
  synth_cmd->add_option("--preset", preset_name, "scene preset")->required();
  synth_cmd->callback([&] { action = [&] { run_synth(opts, preset_name); }; });

  CLI::App* warp_cmd =
      app.add_subcommand("warp", "reconstruct frame t from frame t-1");
  add_common(warp_cmd, &opts, true);
  add_pair_files(warp_cmd, &files, &preset_name);
  warp_cmd->callback([&] {
    action = [&] { run_warp(opts, resolve_pair(preset_name, files, opts.seed)); };
  });

  CLI::App* masks_cmd = app.add_subcommand(
      "masks", "edge/overlap/blank masks via repeated masking");
  add_common(masks_cmd, &opts, true);
  add_pair_files(masks_cmd, &files, &preset_name);
  masks_cmd->callback([&] {
    action = [&] {
      run_masks(opts, resolve_pair(preset_name, files, opts.seed));
    };
  });

  CLI::App* loss_cmd =
      app.add_subcommand("loss", "masked multi-scale loss report");
  add_common(loss_cmd, &opts, true);
  add_pair_files(loss_cmd, &files, &preset_name);
  loss_cmd->callback([&] {
    action = [&] { run_loss(opts, resolve_pair(preset_name, files, opts.seed)); };
  });

  double init_scale = 1.2, depth_step = 1000.0, pose_step = 0.03;
  double perturb_tx = 0.05;
  int depth_iters = 200, pose_iters = 300;
  std::string init_path;

  CLI::App* rdepth_cmd = app.add_subcommand(
      "refine-depth", "gradient descent on per-pixel log depth");
  add_common(rdepth_cmd, &opts, true);
  add_pair_files(rdepth_cmd, &files, &preset_name);
  rdepth_cmd->add_option("--init-scale", init_scale,
                         "scale the true depth for the initial estimate");
  rdepth_cmd->add_option("--init-depth", init_path, "initial depth (PFM)");
  rdepth_cmd->add_option("--step", depth_step, "descent step size");
  rdepth_cmd->add_option("--iters", depth_iters, "iteration budget")
      ->check(CLI::PositiveNumber);
  rdepth_cmd->callback([&] {
    action = [&] {
      run_refine_depth(opts, resolve_pair(preset_name, files, opts.seed),
                       init_scale, init_path, depth_step, depth_iters);
    };
  });

  CLI::App* rpose_cmd =
      app.add_subcommand("refine-pose", "gradient descent on a pose twist");
  add_common(rpose_cmd, &opts, true);
  add_pair_files(rpose_cmd, &files, &preset_name);
  rpose_cmd->add_option("--perturb-tx", perturb_tx,
                        "x-translation offset for the initial pose");
  rpose_cmd->add_option("--init-pose", init_path, "initial pose (JSON)");
  rpose_cmd->add_option("--step", pose_step, "descent step size");
  rpose_cmd->add_option("--iters", pose_iters, "iteration budget")
      ->check(CLI::PositiveNumber);
  rpose_cmd->callback([&] {
    action = [&] {
      run_refine_pose(opts, resolve_pair(preset_name, files, opts.seed),
                      perturb_tx, init_path, pose_step, pose_iters);
    };
  });

  std::string pred_path, gt_path;
  int snippet = 3;
  CLI::App* edepth_cmd =
      app.add_subcommand("eval-depth", "depth error/accuracy metrics");
  add_common(edepth_cmd, &opts, false);
  edepth_cmd->add_option("--pred", pred_path, "predicted depth (PFM)")
      ->required();
  edepth_cmd->add_option("--gt", gt_path, "ground-truth depth (PFM)")
      ->required();
  edepth_cmd->callback([&] {
    action = [&] { run_eval_depth(opts, pred_path, gt_path); };
  });

  CLI::App* eate_cmd =
      app.add_subcommand("eval-ate", "ATE over pose snippets");
  add_common(eate_cmd, &opts, false);
  eate_cmd->add_option("--pred", pred_path, "predicted poses (JSON)")
      ->required();
  eate_cmd->add_option("--gt", gt_path, "ground-truth poses (JSON)")
      ->required();
  eate_cmd->add_option("--snippet", snippet, "snippet length")
      ->check(CLI::PositiveNumber);
  eate_cmd->callback(
      [&] { action = [&] { run_eval_ate(opts, pred_path, gt_path, snippet); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
