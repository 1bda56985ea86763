#include "edgefield/app/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

#include "edgefield/boundary.hpp"
#include "json.hpp"
#include "edgefield/scene_io.hpp"
#include "edgefield/splat.hpp"

namespace edgefield::app {

namespace fs = std::filesystem;

fs::path mask_path(const fs::path& dir, const std::string& stem, std::size_t view) {
  char name[64];
  std::snprintf(name, sizeof name, "%s_%03zu.pgm", stem.c_str(), view);
  return dir / name;
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
}

std::vector<Mask> hard_masks(std::span<const Gaussian> gaussians, std::span<const Camera> cameras) {
  std::vector<Mask> out;
  for (const auto& cam : cameras) out.push_back(render_hard_mask(gaussians, cam));
  return out;
}

void write_masks(const fs::path& dir, const std::string& stem, std::span<const Mask> masks) {
  for (std::size_t v = 0; v < masks.size(); ++v) write_pgm(mask_path(dir, stem, v), masks[v]);
}

SyntheticScene with_gaussians(const SyntheticScene& scene, std::span<const Gaussian> gaussians) {
  SyntheticScene out = scene;
  out.gaussians.assign(gaussians.begin(), gaussians.end());
  return out;
}

std::string pct(double v) { return format_double(v); }

nlohmann::json points(std::span<const Vec2> pts) {
  auto out = nlohmann::json::array();
  for (const auto& p : pts) out.push_back({p.x(), p.y()});
  return out;
}

nlohmann::json points(std::span<const Vec3> pts) {
  auto out = nlohmann::json::array();
  for (const auto& p : pts) out.push_back({p.x(), p.y(), p.z()});
  return out;
}

// Boundary set plus, for every view that sees it, the box and query batch.
nlohmann::json boundary_dump(const BoundarySet& bset, std::span<const Gaussian> gaussians,
                             std::span<const Camera> cameras, const RefineConfig& rc) {
  nlohmann::json j;
  j["tau"] = bset.tau;
  j["raw_threshold"] = bset.raw_threshold;
  j["max_variance"] = bset.max_variance;
  j["indices"] = bset.indices;
  j["views"] = nlohmann::json::array();
  if (bset.empty()) return j;
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    nlohmann::json view{{"view", v}};
    const auto box = bounding_box(bset, gaussians, cameras[v], rc.delta);
    view["visible"] = box.has_value();
    if (box) {
      const auto grid = grid_sample(box->min, box->max, rc.grid_rows, rc.grid_cols);
      const QueryBatch q =
          make_queries(grid, cameras[v], bset, gaussians, rc.samples_per_ray, rc.alpha_range, rc.eps);
      view["bbox_min"] = {box->min.x(), box->min.y()};
      view["bbox_max"] = {box->max.x(), box->max.y()};
      view["delta"] = box->delta;
      view["t_bar"] = q.t_bar;
      view["half_window"] = q.half_window;
      view["samples_per_ray"] = q.samples_per_ray;
      view["grid_points"] = points(q.grid_points);
      view["ray_dirs"] = points(q.ray_dirs);
      view["queries"] = points(q.queries);
    }
    j["views"].push_back(std::move(view));
  }
  return j;
}

void summary(std::ostream& log, const std::string& stage, const SegMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s mIoU %6.2f  mAcc %6.2f  B-mIoU %6.2f  (band %d px)\n", stage.c_str(),
                100.0 * m.miou, 100.0 * m.macc, 100.0 * m.b_miou, m.boundary_band_px);
  log << buf;
}

}  // namespace

Inputs load_inputs(const RunConfig& cfg) {
  Inputs in;
  if (!cfg.scene.empty()) {
    in.scene = load_scene(cfg.scene);
    const fs::path dir = cfg.masks.empty() ? cfg.scene.parent_path() : cfg.masks;
    for (std::size_t v = 0; v < in.scene.cameras.size(); ++v) in.masks.push_back(read_pgm_mask(mask_path(dir, "mask", v)));
  } else {
    SceneDescriptor desc = preset(cfg.preset, cfg.seed);
    desc.noise = cfg.noise;
    in.scene = generate_scene(desc);
    in.masks = corrupt_masks(in.scene, in.scene.seed);
  }
  in.gt = in.scene.target_masks();
  return in;
}

PipelineResult run_pipeline(const Inputs& in, const RunConfig& cfg, const RefineConfig& refine_cfg,
                            const std::function<void(const RefineCheckpoint&)>& on_checkpoint) {
  PipelineResult out;
  out.baseline = segment(in.scene.gaussians, in.scene.cameras, in.masks, refine_cfg.signals);
  out.before = evaluate_labels(out.baseline, in.scene.cameras, in.gt, cfg.band);
  out.refined = refine(out.baseline, in.scene.cameras, in.masks, refine_cfg, on_checkpoint);
  out.after = evaluate_labels(out.refined.gaussians, in.scene.cameras, in.gt, cfg.band);
  return out;
}

CsvTable metrics_table(const std::vector<std::pair<std::string, SegMetrics>>& stages) {
  // Aggregate rows average the per-view values of the target object.
  CsvTable t({"stage", "view", "miou", "macc", "b_miou", "band_px"});
  for (const auto& [stage, m] : stages) {
    for (const auto& v : m.per_view)
      t.add_row({stage, std::to_string(v.view), pct(v.iou), pct(v.acc), pct(v.b_iou),
                 std::to_string(m.boundary_band_px)});
    t.add_row({stage, "mean", pct(m.miou), pct(m.macc), pct(m.b_miou), std::to_string(m.boundary_band_px)});
  }
  return t;
}

void cmd_generate(const RunConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.output);
  RunConfig gen = cfg;
  gen.scene.clear();
  const Inputs in = load_inputs(gen);
  save_scene(cfg.output / "scene.json", in.scene);
  write_masks(cfg.output, "mask", in.masks);
  write_provenance(cfg, cfg.output);
  log << "wrote " << in.scene.gaussians.size() << " Gaussians and " << in.masks.size() << " masks to "
      << cfg.output.string() << "\n";
}

void cmd_segment(const RunConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.output);
  const Inputs in = load_inputs(cfg);
  const auto table = mask_signals(in.scene.gaussians, in.scene.cameras, in.masks, cfg.refine.signals);
  const auto bset = select_boundary(table, cfg.refine.tau, cfg.refine.raw_threshold);
  const auto labels = threshold_labels(table);
  std::vector<Gaussian> seg(in.scene.gaussians);
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i].mask_label = labels[i];

  CsvTable t({"gaussian", "views", "mean_signal", "variance", "normalized_variance", "boundary", "label"});
  std::size_t b = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const bool flagged = b < bset.indices.size() && bset.indices[b] == static_cast<int>(i);
    if (flagged) ++b;
    const double norm = bset.max_variance > 0.0 ? table.variance[i] / bset.max_variance : 0.0;
    t.add_row({std::to_string(i), std::to_string(table.signals[i].size()), pct(table.mean(i)),
               pct(table.variance[i]), pct(norm), flagged ? "1" : "0", pct(labels[i])});
  }
  t.write(cfg.output / "boundary.csv");
  {
    std::ofstream f(cfg.output / "boundary.json");
    f << boundary_dump(bset, in.scene.gaussians, in.scene.cameras, cfg.refine).dump() << "\n";
    if (!f) throw Error("cannot write " + (cfg.output / "boundary.json").string());
  }
  const auto pred = hard_masks(seg, in.scene.cameras);
  write_masks(cfg.output, "pred", pred);
  const auto m = evaluate_views(pred, in.gt, cfg.band);
  metrics_table({{"segment", m}}).write(cfg.output / "metrics.csv");
  save_scene(cfg.output / "segmented_scene.json", with_gaussians(in.scene, seg));
  write_provenance(cfg, cfg.output);
  log << bset.size() << " of " << table.size() << " Gaussians flagged as boundary (tau " << cfg.refine.tau << ")\n";
  summary(log, "segment", m);
}

RefineSummary cmd_refine(const RunConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.output);
  const Inputs in = load_inputs(cfg);
  auto checkpoint = [&](const RefineCheckpoint& ck) {
    char name[32];
    std::snprintf(name, sizeof name, "iter_%06d", ck.iteration);
    const fs::path dir = cfg.output / "checkpoints" / name;
    ensure_dir(dir);
    if (ck.field->use_hash) {
      std::ofstream f(dir / "hash.bin", std::ios::binary);
      ck.field->encoding.write(f);
    }
    std::ofstream f(dir / "nerf.bin", std::ios::binary);
    ck.field->net.write(f);
    save_scene(dir / "scene.json", with_gaussians(in.scene, ck.gaussians));
  };
  const PipelineResult r = run_pipeline(in, cfg, cfg.refine, checkpoint);

  CsvTable loss({"iteration", "align", "cont", "smth", "mask", "total"});
  for (std::size_t i = 0; i < r.refined.history.size(); ++i) {
    const auto& h = r.refined.history[i];
    loss.add_row({std::to_string(i + 1), pct(h.align), pct(h.cont), pct(h.smth), pct(h.mask), pct(h.total)});
  }
  loss.write(cfg.output / "loss.csv");
  metrics_table({{"before", r.before}, {"after", r.after}}).write(cfg.output / "metrics.csv");
  write_masks(cfg.output, "before", hard_masks(r.baseline, in.scene.cameras));
  write_masks(cfg.output, "after", hard_masks(r.refined.gaussians, in.scene.cameras));
  save_scene(cfg.output / "refined_scene.json", with_gaussians(in.scene, r.refined.gaussians));
  write_provenance(cfg, cfg.output);
  log << r.refined.boundary.size() << " boundary Gaussians, " << r.refined.iterations_run << " iterations"
      << (r.refined.early_stopped ? " (early stop)" : "") << "\n";
  summary(log, "before", r.before);
  summary(log, "after", r.after);
  return {r.before, r.after};
}

CsvTable cmd_sweep_tau(const RunConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.output);
  const Inputs in = load_inputs(cfg);
  CsvTable t({"tau", "boundary_gaussians", "miou", "macc", "b_miou", "baseline_miou", "baseline_b_miou"});
  for (double tau : cfg.taus) {
    RefineConfig rc = cfg.refine;
    rc.tau = tau;
    const PipelineResult r = run_pipeline(in, cfg, rc);
    t.add_row({pct(tau), std::to_string(r.refined.boundary.size()), pct(r.after.miou), pct(r.after.macc),
               pct(r.after.b_miou), pct(r.before.miou), pct(r.before.b_miou)});
    summary(log, "tau " + pct(tau), r.after);
  }
  t.write(cfg.output / "sweep_tau.csv");
  write_provenance(cfg, cfg.output);
  return t;
}

CsvTable cmd_ablate(const RunConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.output);
  const Inputs in = load_inputs(cfg);
  CsvTable t({"variant", "miou", "macc", "b_miou", "iterations"});
  for (const auto& variant : cfg.variants) {
    const PipelineResult r = run_pipeline(in, cfg, variant_config(cfg.refine, variant));
    t.add_row({variant, pct(r.after.miou), pct(r.after.macc), pct(r.after.b_miou),
               std::to_string(r.refined.iterations_run)});
    summary(log, variant, r.after);
  }
  t.write(cfg.output / "ablation.csv");
  write_provenance(cfg, cfg.output);
  return t;
}

SegMetrics cmd_eval(const EvalArgs& args, std::ostream& log) {
  std::vector<Mask> gt;
  if (!args.scene.empty()) {
    if (!args.gt.empty()) throw InvalidArgument("eval: give either a scene or ground-truth masks, not both");
    gt = load_scene(args.scene).target_masks();
  } else {
    for (const auto& p : args.gt) gt.push_back(read_pgm_mask(p));
  }
  std::vector<Mask> pred;
  for (const auto& p : args.pred) pred.push_back(read_pgm_mask(p));
  if (gt.empty()) throw InvalidArgument("eval: no ground-truth masks");
  if (pred.size() != gt.size())
    throw InvalidArgument("eval: " + std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) +
                          " ground-truth masks");
  const SegMetrics m = evaluate_views(pred, gt, args.band);
  ensure_dir(args.output);
  metrics_table({{"eval", m}}).write(args.output / "metrics.csv");
  summary(log, "eval", m);
  return m;
}

}  // namespace edgefield::app
