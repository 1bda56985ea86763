// Command-line front end: generate / segment / refine / eval / sweep-tau / ablate.

#include <functional>
#include <iostream>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "edgefield/app/commands.hpp"
#include "edgefield/parallel.hpp"

namespace {

using edgefield::app::RunConfig;
using Setter = std::function<void(RunConfig&)>;

struct Overrides {
  std::vector<Setter> setters;
  std::string config_path;

  template <typename T>
  void option(CLI::App* sub, const std::string& name, const std::string& help,
              std::function<void(RunConfig&, const T&)> apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = sub->add_option(name, *value, help);
    setters.push_back([opt, value, apply](RunConfig& c) {
      if (opt->count()) apply(c, *value);
    });
  }

  void flag(CLI::App* sub, const std::string& name, const std::string& help, std::function<void(RunConfig&)> apply) {
    CLI::Option* opt = sub->add_flag(name, help);
    setters.push_back([opt, apply](RunConfig& c) {
      if (opt->count()) apply(c);
    });
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = edgefield::app::load_config(config_path, cfg);
    edgefield::app::apply_environment(cfg);
    for (const auto& s : setters) s(cfg);
    cfg.refine.seed = cfg.seed;
    edgefield::app::validate(cfg);
    return cfg;
  }
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_path, "JSON config file (defaults <- file <- EDGEFIELD_SEED <- flags)");
  o.option<std::string>(sub, "-o,--output", "Output directory", [](RunConfig& c, const std::string& v) { c.output = v; });
  o.option<std::uint64_t>(sub, "--seed", "Random seed", [](RunConfig& c, const std::uint64_t& v) { c.seed = v; });
  o.option<unsigned>(sub, "--threads", "Worker threads (0 = all cores)",
                     [](RunConfig& c, const unsigned& v) { c.threads = v; });
  o.option<std::string>(sub, "--preset", "two-spheres | occluded-box | thin-structure",
                        [](RunConfig& c, const std::string& v) { c.preset = v; });
  o.option<double>(sub, "--jitter", "Mask noise band half-width in pixels",
                   [](RunConfig& c, const double& v) { c.noise.jitter_px = v; });
  o.option<double>(sub, "--flip", "Flip probability inside the noise band",
                   [](RunConfig& c, const double& v) { c.noise.flip_prob = v; });
}

void add_inputs(CLI::App* sub, Overrides& o) {
  o.option<std::string>(sub, "--scene", "Scene JSON to load instead of a preset",
                        [](RunConfig& c, const std::string& v) { c.scene = v; });
  o.option<std::string>(sub, "--masks", "Directory with mask_NNN.pgm inputs (default: scene directory)",
                        [](RunConfig& c, const std::string& v) { c.masks = v; });
  o.option<int>(sub, "--band", "Boundary band for B-mIoU in pixels (0 = 2% of the diagonal)",
                [](RunConfig& c, const int& v) { c.band = v; });
  o.option<double>(sub, "--tau", "Boundary threshold on normalized variance",
                   [](RunConfig& c, const double& v) { c.refine.tau = v; });
  o.flag(sub, "--raw-threshold", "Compare tau with the raw variance", [](RunConfig& c) { c.refine.raw_threshold = true; });
  o.flag(sub, "--occlusion-aware", "Ignore views in which a Gaussian is hidden",
         [](RunConfig& c) { c.refine.signals.occlusion_aware = true; });
}

void add_refine(CLI::App* sub, Overrides& o) {
  using R = RunConfig;
  o.option<double>(sub, "--delta", "Bounding-box margin in pixels", [](R& c, const double& v) { c.refine.delta = v; });
  o.option<int>(sub, "--grid", "Grid cells per side", [](R& c, const int& v) { c.refine.grid_rows = c.refine.grid_cols = v; });
  o.option<int>(sub, "--samples", "Samples per ray", [](R& c, const int& v) { c.refine.samples_per_ray = v; });
  o.option<double>(sub, "--alpha", "Relative depth window", [](R& c, const double& v) { c.refine.alpha_range = v; });
  o.option<double>(sub, "--eps", "Minimum depth half-window", [](R& c, const double& v) { c.refine.eps = v; });
  o.option<double>(sub, "--kernel-width", "RBF kernel width", [](R& c, const double& v) { c.refine.rbf.kernel_width = v; });
  o.option<int>(sub, "--k-neighbors", "RBF neighbours", [](R& c, const int& v) { c.refine.rbf.k_neighbors = v; });
  o.option<int>(sub, "--levels", "Hash levels", [](R& c, const int& v) { c.refine.hash.levels = v; });
  o.option<int>(sub, "--log2-table", "log2 of the hash table size", [](R& c, const int& v) { c.refine.hash.log2_table_size = v; });
  o.option<int>(sub, "--features-per-level", "Hash features per level",
                [](R& c, const int& v) { c.refine.hash.features_per_level = v; });
  o.option<int>(sub, "--base-res", "Coarsest hash grid resolution", [](R& c, const int& v) { c.refine.hash.base_resolution = v; });
  o.option<double>(sub, "--growth", "Per-level resolution factor", [](R& c, const double& v) { c.refine.hash.growth = v; });
  o.flag(sub, "--nearest-corner", "Single nearest-corner hash lookup", [](R& c) { c.refine.hash.nearest_corner = true; });
  o.option<int>(sub, "--width", "Network width", [](R& c, const int& v) { c.refine.nerf_width = v; });
  o.option<double>(sub, "--w-alpha", "Alpha weight in the alignment loss", [](R& c, const double& v) { c.refine.weights.w_alpha = v; });
  o.option<double>(sub, "--w-var", "Patch variance weight", [](R& c, const double& v) { c.refine.weights.w_var = v; });
  o.option<double>(sub, "--lambda-mask", "Mask loss weight", [](R& c, const double& v) { c.refine.weights.lambda_mask = v; });
  o.option<double>(sub, "--lambda-cont", "Continuity loss weight", [](R& c, const double& v) { c.refine.weights.lambda_cont = v; });
  o.option<double>(sub, "--lambda-smth", "Smoothness loss weight", [](R& c, const double& v) { c.refine.weights.lambda_smth = v; });
  o.option<double>(sub, "--lr", "Adam learning rate", [](R& c, const double& v) { c.refine.adam.lr = v; });
  o.option<int>(sub, "--iterations", "Refinement iterations", [](R& c, const int& v) { c.refine.iterations = v; });
  o.option<int>(sub, "--refresh-every", "Iterations between boundary re-detection",
                [](R& c, const int& v) { c.refine.refresh_every = v; });
  o.option<int>(sub, "--checkpoint-every", "Iterations between checkpoints (0 = none)",
                [](R& c, const int& v) { c.refine.checkpoint_every = v; });
  o.flag(sub, "--no-nerf", "Disable the neural field stage", [](R& c) { c.refine.ablation.nerf = false; });
  o.flag(sub, "--no-rbf", "Zero condition vector instead of RBF features", [](R& c) { c.refine.ablation.rbf = false; });
  o.flag(sub, "--no-mrhe", "Normalized xyz instead of the hash encoding", [](R& c) { c.refine.ablation.mrhe = false; });
  o.flag(sub, "--no-align", "Drop the alignment loss", [](R& c) { c.refine.ablation.align = false; });
  o.flag(sub, "--no-smth", "Drop the smoothness loss", [](R& c) { c.refine.ablation.smth = false; });
  o.flag(sub, "--freeze-labels", "Keep mask labels fixed", [](R& c) { c.refine.freeze.labels = true; });
  o.flag(sub, "--freeze-colors", "Keep colors fixed", [](R& c) { c.refine.freeze.colors = true; });
  o.flag(sub, "--freeze-opacities", "Keep opacities fixed", [](R& c) { c.refine.freeze.opacities = true; });
}

}  // namespace

int main(int argc, char** argv) {
  namespace app = edgefield::app;
  CLI::App cli{"Boundary-aware segmentation refinement for Gaussian scenes"};
  cli.require_subcommand(1);
  cli.set_version_flag("--version", edgefield::kVersion);

  Overrides gen_o, seg_o, ref_o, sweep_o, abl_o;
  auto* gen = cli.add_subcommand("generate", "Write a preset scene and its noisy target masks");
  add_common(gen, gen_o);

  auto* seg = cli.add_subcommand("segment", "Threshold labels and boundary detection");
  add_common(seg, seg_o);
  add_inputs(seg, seg_o);

  auto* ref = cli.add_subcommand("refine", "Segment, then jointly refine boundary labels");
  add_common(ref, ref_o);
  add_inputs(ref, ref_o);
  add_refine(ref, ref_o);
  bool ref_check = false;
  ref->add_flag("--check", ref_check, "Exit 4 unless refinement raises B-mIoU");

  auto* sweep = cli.add_subcommand("sweep-tau", "Refine and evaluate for several tau values");
  add_common(sweep, sweep_o);
  add_inputs(sweep, sweep_o);
  add_refine(sweep, sweep_o);
  sweep_o.option<std::vector<double>>(sweep, "--taus", "Tau values", [](RunConfig& c, const std::vector<double>& v) {
    c.taus = v;
  });
  bool sweep_check = false;
  sweep->add_flag("--check", sweep_check, "Exit 4 unless tau 0.6 gives the best mIoU and B-mIoU");

  auto* abl = cli.add_subcommand("ablate", "Refine with components removed");
  add_common(abl, abl_o);
  add_inputs(abl, abl_o);
  add_refine(abl, abl_o);
  abl_o.option<std::vector<std::string>>(abl, "--variants",
                                         "full, no_align_smth, no_rbf, no_mrhe, threshold_only",
                                         [](RunConfig& c, const std::vector<std::string>& v) { c.variants = v; });
  bool abl_check = false;
  abl->add_flag("--check", abl_check, "Exit 4 unless full >= no_align_smth >= threshold_only on B-mIoU");

  auto* ev = cli.add_subcommand("eval", "Score predicted masks against ground truth");
  app::EvalArgs eval_args;
  std::string ev_scene, ev_out = "out";
  std::vector<std::string> ev_gt, ev_pred;
  unsigned ev_threads = 0;
  ev->add_option("--scene", ev_scene, "Scene JSON providing ground-truth target masks");
  ev->add_option("--gt", ev_gt, "Ground-truth mask PGMs, one per view");
  ev->add_option("--pred", ev_pred, "Predicted mask PGMs, one per view")->required();
  ev->add_option("--band", eval_args.band, "Boundary band in pixels (0 = 2% of the diagonal)");
  ev->add_option("-o,--output", ev_out, "Output directory");
  ev->add_option("--threads", ev_threads, "Worker threads (0 = all cores)");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? app::kExitOk : app::kExitBadArgs;
  }

  auto run = [&](Overrides& o, auto&& body) -> int {
    RunConfig cfg;
    try {
      cfg = o.resolve();
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return app::kExitBadArgs;
    }
    edgefield::set_thread_count(cfg.threads);
    try {
      return body(cfg);
    } catch (const edgefield::InvalidArgument& e) {
      std::cerr << "error: " << e.what() << "\n";
      return app::kExitBadArgs;
    } catch (const std::exception& e) {
      std::cerr << "pipeline error: " << e.what() << "\n";
      return app::kExitPipeline;
    }
  };

  if (*gen) return run(gen_o, [](const RunConfig& c) { app::cmd_generate(c, std::cout); return 0; });
  if (*seg) return run(seg_o, [](const RunConfig& c) { app::cmd_segment(c, std::cout); return 0; });
  if (*ref)
    return run(ref_o, [&](const RunConfig& c) {
      const auto s = app::cmd_refine(c, std::cout);
      if (ref_check && !(s.after.b_miou > s.before.b_miou)) {
        std::cerr << "check failed: refined B-mIoU does not exceed the baseline\n";
        return int(app::kExitAcceptance);
      }
      return 0;
    });
  if (*sweep)
    return run(sweep_o, [&](const RunConfig& c) {
      const auto t = app::cmd_sweep_tau(c, std::cout);
      if (!sweep_check) return 0;
      double best_miou = -1, best_b = -1, miou06 = -1, b06 = -1;
      for (const auto& row : t.rows()) {
        const double tau = std::stod(row[0]), miou = std::stod(row[2]), b = std::stod(row[4]);
        best_miou = std::max(best_miou, miou);
        best_b = std::max(best_b, b);
        if (tau == 0.6) miou06 = miou, b06 = b;
      }
      if (miou06 < best_miou || b06 < best_b) {
        std::cerr << "check failed: tau 0.6 is not the peak\n";
        return int(app::kExitAcceptance);
      }
      return 0;
    });
  if (*abl)
    return run(abl_o, [&](const RunConfig& c) {
      const auto t = app::cmd_ablate(c, std::cout);
      if (!abl_check) return 0;
      std::map<std::string, double> b;
      for (const auto& row : t.rows()) b[row[0]] = std::stod(row[3]);
      if (!b.count("full") || !b.count("no_align_smth") || !b.count("threshold_only")) {
        std::cerr << "check needs the full, no_align_smth and threshold_only variants\n";
        return int(app::kExitBadArgs);
      }
      if (!(b["full"] >= b["no_align_smth"] && b["no_align_smth"] >= b["threshold_only"])) {
        std::cerr << "check failed: ablation ordering violated\n";
        return int(app::kExitAcceptance);
      }
      return 0;
    });
  if (*ev) {
    eval_args.scene = ev_scene;
    eval_args.output = ev_out;
    for (const auto& p : ev_gt) eval_args.gt.emplace_back(p);
    for (const auto& p : ev_pred) eval_args.pred.emplace_back(p);
    edgefield::set_thread_count(ev_threads);
    try {
      app::cmd_eval(eval_args, std::cout);
      return app::kExitOk;
    } catch (const edgefield::InvalidArgument& e) {
      std::cerr << "error: " << e.what() << "\n";
      return app::kExitBadArgs;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return app::kExitPipeline;
    }
  }
  return app::kExitBadArgs;
}
