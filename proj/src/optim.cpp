#include "edgefield/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edgefield/parallel.hpp"
#include "edgefield/rng.hpp"

namespace edgefield {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg,
               std::span<const int> active) {
  if (grads.size() != params.size()) throw ShapeMismatch("adam_step: gradient length differs from parameter length");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeMismatch("adam_step: optimizer state does not match the parameter group");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto update = [&](std::size_t i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    params[i] -= cfg.lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.eps);
  };
  if (active.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) update(i);
  } else {
    for (int i : active) update(static_cast<std::size_t>(i));
  }
}

std::vector<double> threshold_labels(const MaskSignalTable& table) {
  std::vector<double> out(table.size(), kLabelMin);
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table.observed(i) && table.mean(i) > 0.5) out[i] = kLabelMax;
  return out;
}

std::vector<Gaussian> segment(std::span<const Gaussian> gaussians, std::span<const Camera> cameras,
                              std::span<const Mask> masks, const SignalOptions& signals) {
  const auto labels = threshold_labels(mask_signals(gaussians, cameras, masks, signals));
  std::vector<Gaussian> out(gaussians.begin(), gaussians.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].mask_label = labels[i];
  return out;
}

Eigen::AlignedBox3d scene_bounds(std::span<const Gaussian> gaussians) {
  Eigen::AlignedBox3d box;
  for (const auto& g : gaussians) box.extend(g.mu);
  if (box.isEmpty()) return Eigen::AlignedBox3d(Vec3::Constant(-1.0), Vec3::Constant(1.0));
  const Vec3 pad = (0.1 * box.sizes()).cwiseMax(1e-3);
  return Eigen::AlignedBox3d(box.min() - pad, box.max() + pad);
}

FieldModel::FieldModel(const RefineConfig& cfg, const Eigen::AlignedBox3d& box)
    : use_hash(cfg.ablation.mrhe), use_condition(cfg.ablation.rbf), bounds(box) {
  if (use_hash) encoding = HashEncoding(cfg.hash, box, derive_seed(cfg.seed, 101));
  NerfDims dims;
  dims.input_dim = use_hash ? encoding.output_dim() : 3;
  dims.cond_dim = kFeatureDim;
  dims.width = cfg.nerf_width;
  dims.hidden_layers = cfg.nerf_layers;
  net = NerfNet(dims, derive_seed(cfg.seed, 202));
}

Eigen::MatrixXd FieldModel::encode(std::span<const Vec3> points, HashStencil* stencil) const {
  if (use_hash) return encoding.encode(points, stencil);
  Eigen::MatrixXd out(3, static_cast<Eigen::Index>(points.size()));
  const Vec3 extent = bounds.sizes();
  for (std::size_t i = 0; i < points.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) =
        ((points[i] - bounds.min()).cwiseQuotient(extent)).cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

ViewContext make_view_context(std::span<const Gaussian> gaussians, const Camera& cam, int view,
                              const BoundarySet& bset, const RefineConfig& cfg) {
  ViewContext ctx;
  ctx.view = view;
  if (bset.empty()) return ctx;
  const auto box = bounding_box(bset, gaussians, cam, cfg.delta);
  if (!box) return ctx;
  const auto grid = grid_sample(box->min, box->max, cfg.grid_rows, cfg.grid_cols);
  ctx.queries = make_queries(grid, cam, bset, gaussians, cfg.samples_per_ray, cfg.alpha_range, cfg.eps);
  ctx.pixels.reserve(grid.size());
  for (const Vec2& p : grid) {
    const int x = std::clamp(static_cast<int>(std::lround(p.x())), 0, cam.width - 1);
    const int y = std::clamp(static_cast<int>(std::lround(p.y())), 0, cam.height - 1);
    ctx.pixels.push_back({x, y});
  }
  ctx.segments = window_segments(cfg.samples_per_ray, 2.0 * ctx.queries.half_window);
  std::vector<Vec3> centers;
  centers.reserve(bset.size());
  for (int i : bset.indices) centers.push_back(gaussians[static_cast<std::size_t>(i)].mu);
  ctx.rbf = rbf_stencils(ctx.queries.queries, centers, cfg.rbf);
  const int k = cfg.samples_per_ray;
  ctx.dirs.resize(3, static_cast<Eigen::Index>(ctx.queries.queries.size()));
  for (std::size_t r = 0; r < grid.size(); ++r)
    for (int s = 0; s < k; ++s) ctx.dirs.col(static_cast<Eigen::Index>(r * k + s)) = ctx.queries.ray_dirs[r];
  ctx.has_field = true;
  return ctx;
}

namespace {

struct RayChunk {
  std::size_t ray_begin = 0;
  std::size_t ray_end = 0;
  NerfNet::Batch batch;
  std::vector<RayComposite> composites;
};

void add_into(Eigen::MatrixXd& acc, const Eigen::MatrixXd& g) {
  if (acc.size() == 0)
    acc = g;
  else
    acc += g;
}

}  // namespace

LossReport joint_loss(const JointInputs& in, const RefineConfig& cfg, JointGrad* grad) {
  const auto& gaussians = in.gaussians;
  const BoundarySet& bset = *in.boundary;
  const FieldModel& field = *in.field;
  const Camera& cam = *in.camera;
  const ViewContext& ctx = *in.context;
  const LossWeights& w = cfg.weights;
  const int k = cfg.samples_per_ray;

  RenderOptions ropts = cfg.render;
  ropts.keep_lists = grad != nullptr;
  const SplatFrame frame = render(gaussians, cam, Channel::both, ropts);

  const std::size_t n_rays = ctx.has_field ? ctx.pixels.size() : 0;
  const std::vector<PixelIndex> no_pixels;
  const std::span<const PixelIndex> pixels = ctx.has_field ? std::span<const PixelIndex>(ctx.pixels) : no_pixels;

  // Neural field along every sampled ray, in fixed ray chunks.
  Eigen::MatrixXd features(kFeatureDim, static_cast<Eigen::Index>(bset.size()));
  for (std::size_t j = 0; j < bset.size(); ++j)
    features.col(static_cast<Eigen::Index>(j)) = gaussians[static_cast<std::size_t>(bset.indices[j])].feature;
  std::vector<RayChunk> chunks;
  HashStencil stencil;
  std::vector<Vec3> nerf_color(n_rays, Vec3::Zero());
  std::vector<double> nerf_alpha(n_rays, 0.0);
  std::vector<double> nerf_density(n_rays, 0.0);
  if (n_rays > 0) {
    const auto n_samples = static_cast<Eigen::Index>(n_rays * k);
    const Eigen::MatrixXd cond = field.use_condition ? rbf_apply(ctx.rbf, features)
                                                     : Eigen::MatrixXd::Zero(kFeatureDim, n_samples);
    const Eigen::MatrixXd f_in = field.encode(ctx.queries.queries, &stencil);
    const std::size_t n_chunks = std::min(kReductionChunks, n_rays);
    chunks.resize(n_chunks);
    parallel_for(n_chunks, [&](std::size_t c) {
      RayChunk& ch = chunks[c];
      std::tie(ch.ray_begin, ch.ray_end) = chunk_range(n_rays, c, n_chunks);
      const auto col0 = static_cast<Eigen::Index>(ch.ray_begin * k);
      const auto cols = static_cast<Eigen::Index>((ch.ray_end - ch.ray_begin) * k);
      ch.batch = field.net.forward(f_in.middleCols(col0, cols), cond.middleCols(col0, cols),
                                   ctx.dirs.middleCols(col0, cols));
      const auto& sig = ch.batch.tape.value(ch.batch.sigma);
      const auto& col = ch.batch.tape.value(ch.batch.color);
      std::vector<double> s(static_cast<std::size_t>(k));
      std::vector<Vec3> c3(static_cast<std::size_t>(k));
      for (std::size_t r = ch.ray_begin; r < ch.ray_end; ++r) {
        for (int q = 0; q < k; ++q) {
          const auto local = static_cast<Eigen::Index>((r - ch.ray_begin) * k + q);
          s[static_cast<std::size_t>(q)] = sig(0, local);
          c3[static_cast<std::size_t>(q)] = col.col(local);
        }
        ch.composites.push_back(composite_ray(s, c3, ctx.segments));
        nerf_color[r] = ch.composites.back().color;
        nerf_alpha[r] = ch.composites.back().alpha;
        nerf_density[r] = ch.composites.back().density;
      }
    });
  }

  LossReport rep;
  AlignGrad ag;
  Image smth_grad;
  if (cfg.ablation.align)
    rep.align = align_loss(frame.color, frame.alpha, pixels, nerf_color, nerf_alpha, w, grad ? &ag : nullptr);
  if (cfg.ablation.smth) rep.smth = smoothness_loss(frame.color, pixels, grad ? &smth_grad : nullptr);

  std::vector<Vec3> b_colors;
  b_colors.reserve(bset.size());
  for (int i : bset.indices) b_colors.push_back(gaussians[static_cast<std::size_t>(i)].color);
  std::vector<Vec3> cont_grad;
  if (!in.cont_graph.empty()) rep.cont = continuity_loss(b_colors, in.cont_graph, grad ? &cont_grad : nullptr);

  std::vector<int> hits;
  const Image density = pixel_density(pixels, nerf_density, cam.width, cam.height, &hits);
  MaskLossGrad mg;
  rep.mask = mask_loss(frame.mask, *in.target, density, w, grad ? &mg : nullptr);
  rep = total_loss(rep, w);
  if (!grad) return rep;

  // Splat side.
  Image d_color(cam.width, cam.height, 3);
  Image d_alpha(cam.width, cam.height, 1);
  Image d_mask(cam.width, cam.height, 1);
  if (cfg.ablation.align) {
    d_color = ag.d_color;
    d_alpha = ag.d_alpha;
  }
  if (cfg.ablation.smth)
    for (std::size_t i = 0; i < d_color.data.size(); ++i) d_color.data[i] += w.lambda_smth * smth_grad.data[i];
  for (std::size_t i = 0; i < d_mask.data.size(); ++i) d_mask.data[i] = w.lambda_mask * mg.d_pred.data[i];
  SplatGradients sg = backprop_render(frame, d_color, d_mask, d_alpha);
  grad->labels = std::move(sg.mask_label);
  grad->opacity = std::move(sg.opacity);
  grad->color = std::move(sg.color);
  for (std::size_t j = 0; j < cont_grad.size(); ++j)
    grad->color[static_cast<std::size_t>(bset.indices[j])] += w.lambda_cont * cont_grad[j];

  // Field side.
  grad->features = Eigen::MatrixXd::Zero(kFeatureDim, static_cast<Eigen::Index>(bset.size()));
  grad->table.assign(field.use_hash ? field.encoding.parameters().size() : 0, 0.0);
  grad->net.clear();
  for (std::size_t i = 0; i < field.net.group_count(); ++i)
    grad->net.push_back(Eigen::MatrixXd::Zero(field.net.param(i).rows(), field.net.param(i).cols()));
  if (n_rays == 0) return rep;

  const auto n_samples = static_cast<Eigen::Index>(n_rays * k);
  Eigen::MatrixXd d_in(field.net.dims().input_dim, n_samples);
  Eigen::MatrixXd d_cond(kFeatureDim, n_samples);
  std::vector<NerfNet::Grad> chunk_grads(chunks.size());
  parallel_for(chunks.size(), [&](std::size_t c) {
    const RayChunk& ch = chunks[c];
    const auto& sig = ch.batch.tape.value(ch.batch.sigma);
    const auto& col = ch.batch.tape.value(ch.batch.color);
    const auto cols = static_cast<Eigen::Index>((ch.ray_end - ch.ray_begin) * k);
    Eigen::MatrixXd ds(1, cols);
    Eigen::MatrixXd dc(3, cols);
    std::vector<double> s(static_cast<std::size_t>(k));
    std::vector<Vec3> c3(static_cast<std::size_t>(k));
    for (std::size_t r = ch.ray_begin; r < ch.ray_end; ++r) {
      const auto base = static_cast<Eigen::Index>((r - ch.ray_begin) * k);
      for (int q = 0; q < k; ++q) {
        s[static_cast<std::size_t>(q)] = sig(0, base + q);
        c3[static_cast<std::size_t>(q)] = col.col(base + q);
      }
      const PixelIndex p = ctx.pixels[r];
      const std::size_t pi = density.index(p.x, p.y);
      const double d_density = w.lambda_mask * mg.d_density.data[pi] / hits[pi];
      const Vec3 dC = cfg.ablation.align ? ag.d_nerf_color[r] : Vec3::Zero();
      const double dA = cfg.ablation.align ? ag.d_nerf_alpha[r] : 0.0;
      const auto cg = composite_backprop(s, c3, ctx.segments, ch.composites[r - ch.ray_begin], dC, dA, d_density);
      for (int q = 0; q < k; ++q) {
        ds(0, base + q) = cg.d_sigma[static_cast<std::size_t>(q)];
        dc.col(base + q) = cg.d_color[static_cast<std::size_t>(q)];
      }
    }
    chunk_grads[c] = field.net.backward(ch.batch, ds, dc);
  });
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const RayChunk& ch = chunks[c];
    for (std::size_t i = 0; i < grad->net.size(); ++i) add_into(grad->net[i], chunk_grads[c].params[i]);
    const auto col0 = static_cast<Eigen::Index>(ch.ray_begin * k);
    const auto cols = static_cast<Eigen::Index>((ch.ray_end - ch.ray_begin) * k);
    d_in.middleCols(col0, cols) = chunk_grads[c].d_hash;
    d_cond.middleCols(col0, cols) = chunk_grads[c].d_cond;
  }
  if (field.use_hash) field.encoding.backprop(stencil, d_in, grad->table);
  if (field.use_condition)
    grad->features = rbf_backprop(ctx.rbf, d_cond, static_cast<Eigen::Index>(bset.size()));
  return rep;
}

namespace {

void check_finite(const LossReport& r, int iteration) {
  if (!std::isfinite(r.align)) throw NonFiniteLoss(iteration, "align");
  if (!std::isfinite(r.cont)) throw NonFiniteLoss(iteration, "cont");
  if (!std::isfinite(r.smth)) throw NonFiniteLoss(iteration, "smth");
  if (!std::isfinite(r.mask)) throw NonFiniteLoss(iteration, "mask");
  if (!std::isfinite(r.total)) throw NonFiniteLoss(iteration, "total");
}

struct Boundary {
  BoundarySet set;
  std::vector<std::vector<int>> graph;
  std::vector<ViewContext> contexts;
  std::vector<int> coord3;  // flattened xyz coordinates of boundary Gaussians
};

Boundary detect(std::span<const Gaussian> gaussians, std::span<const Camera> cameras, std::span<const Mask> masks,
                const RefineConfig& cfg) {
  Boundary b;
  b.set = select_boundary(mask_signals(gaussians, cameras, masks, cfg.signals), cfg.tau, cfg.raw_threshold);
  std::vector<Vec3> centers;
  for (int i : b.set.indices) {
    centers.push_back(gaussians[static_cast<std::size_t>(i)].mu);
    for (int a = 0; a < 3; ++a) b.coord3.push_back(3 * i + a);
  }
  b.graph = knn_graph(centers, cfg.cont_neighbors);
  for (std::size_t v = 0; v < cameras.size(); ++v)
    b.contexts.push_back(make_view_context(gaussians, cameras[v], static_cast<int>(v), b.set, cfg));
  return b;
}

double window_mean(const std::vector<LossReport>& h, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += h[i].total;
  return s / static_cast<double>(end - begin);
}

}  // namespace

RefineResult refine(std::span<const Gaussian> gaussians, std::span<const Camera> cameras,
                    std::span<const Mask> masks, const RefineConfig& cfg,
                    const std::function<void(const RefineCheckpoint&)>& on_checkpoint) {
  if (cameras.size() < 2) throw InvalidArgument("refine: at least two views are required");
  if (masks.size() != cameras.size()) throw InvalidArgument("refine: need one mask per view");
  if (cfg.iterations < 0) throw InvalidArgument("refine: negative iteration count");
  if (!(cfg.adam.lr > 0.0)) throw InvalidArgument("refine: learning rate must be positive");

  RefineResult out;
  out.gaussians.assign(gaussians.begin(), gaussians.end());
  if (cfg.iterations == 0 || !cfg.ablation.joint_stage()) return out;

  Boundary bd = detect(out.gaussians, cameras, masks, cfg);
  out.boundary = bd.set;
  if (bd.set.empty()) return out;

  auto& gs = out.gaussians;
  const std::size_t n = gs.size();
  for (int i : bd.set.indices) gs[static_cast<std::size_t>(i)].mask_label = kInitialMaskLabel;
  out.field = FieldModel(cfg, scene_bounds(gs));
  FieldModel& field = out.field;

  AdamState s_labels, s_colors, s_opacity, s_features, s_table, s_net;
  std::vector<double> buf;

  for (int it = 0; it < cfg.iterations; ++it) {
    if (it > 0 && cfg.refresh_every > 0 && it % cfg.refresh_every == 0) {
      Boundary fresh = detect(gs, cameras, masks, cfg);
      if (fresh.set.indices != bd.set.indices) {
        bd = std::move(fresh);
        s_features = {};
        out.boundary = bd.set;
      }
    }
    const std::size_t v = static_cast<std::size_t>(it) % cameras.size();
    JointInputs in{gs, &bd.set, bd.graph, &field, &cameras[v], &masks[v], &bd.contexts[v]};
    JointGrad g;
    const LossReport rep = joint_loss(in, cfg, &g);
    check_finite(rep, it);
    out.history.push_back(rep);

    if (!cfg.freeze.labels) {
      buf.resize(n);
      for (std::size_t i = 0; i < n; ++i) buf[i] = gs[i].mask_label;
      adam_step(buf, g.labels, s_labels, cfg.adam);
      for (std::size_t i = 0; i < n; ++i) gs[i].mask_label = std::clamp(buf[i], kLabelMin, kLabelMax);
    }
    if (!cfg.freeze.colors) {
      buf.resize(3 * n);
      std::vector<double> gc(3 * n);
      for (std::size_t i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) {
          buf[3 * i + a] = gs[i].color[a];
          gc[3 * i + a] = g.color[i][a];
        }
      adam_step(buf, gc, s_colors, cfg.adam, bd.coord3);
      for (int i : bd.set.indices)
        for (int a = 0; a < 3; ++a) gs[static_cast<std::size_t>(i)].color[a] = buf[3 * i + a];
    }
    if (!cfg.freeze.opacities) {
      buf.resize(n);
      for (std::size_t i = 0; i < n; ++i) buf[i] = gs[i].opacity;
      adam_step(buf, g.opacity, s_opacity, cfg.adam, bd.set.indices);
      for (int i : bd.set.indices)
        gs[static_cast<std::size_t>(i)].opacity = std::clamp(buf[static_cast<std::size_t>(i)], kLabelMin, kLabelMax);
    }
    if (!cfg.freeze.features && field.use_condition) {
      const std::size_t nb = bd.set.size();
      buf.resize(kFeatureDim * nb);
      for (std::size_t j = 0; j < nb; ++j)
        for (int a = 0; a < kFeatureDim; ++a)
          buf[kFeatureDim * j + a] = gs[static_cast<std::size_t>(bd.set.indices[j])].feature[a];
      std::vector<double> gf(g.features.data(), g.features.data() + g.features.size());
      adam_step(buf, gf, s_features, cfg.adam);
      for (std::size_t j = 0; j < nb; ++j)
        for (int a = 0; a < kFeatureDim; ++a)
          gs[static_cast<std::size_t>(bd.set.indices[j])].feature[a] = buf[kFeatureDim * j + a];
    }
    if (!cfg.freeze.hash && field.use_hash) adam_step(field.encoding.parameters(), g.table, s_table, cfg.adam);
    if (!cfg.freeze.nerf) {
      buf = field.net.flatten();
      std::vector<double> gn;
      gn.reserve(buf.size());
      for (const auto& m : g.net) gn.insert(gn.end(), m.data(), m.data() + m.size());
      adam_step(buf, gn, s_net, cfg.adam);
      field.net.assign(buf);
    }

    out.iterations_run = it + 1;
    if (on_checkpoint && cfg.checkpoint_every > 0 && out.iterations_run % cfg.checkpoint_every == 0)
      on_checkpoint({out.iterations_run, gs, &field});

    const auto window = static_cast<std::size_t>(std::max(cfg.early_stop_window, 1));
    const std::size_t h = out.history.size();
    if (cfg.early_stop_window > 0 && h >= 2 * window && h % window == 0) {
      const double prev = window_mean(out.history, h - 2 * window, h - window);
      const double last = window_mean(out.history, h - window, h);
      if (prev - last < cfg.early_stop_tol) {
        out.early_stopped = true;
        break;
      }
    }
  }
  return out;
}

SegMetrics evaluate_labels(std::span<const Gaussian> gaussians, std::span<const Camera> cameras,
                           std::span<const Mask> gt, int band, const RenderOptions& opts) {
  std::vector<Mask> pred;
  pred.reserve(cameras.size());
  for (const auto& cam : cameras) pred.push_back(render_hard_mask(gaussians, cam, opts));
  return evaluate_views(pred, gt, band);
}

}  // namespace edgefield
