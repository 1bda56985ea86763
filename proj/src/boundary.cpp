#include "edgefield/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "edgefield/parallel.hpp"

namespace edgefield {

double MaskSignalTable::mean(std::size_t i) const {
  const auto& row = signals[i];
  if (row.empty()) return 0.0;
  double s = 0.0;
  for (double v : row) s += v;
  return s / static_cast<double>(row.size());
}

std::vector<double> surface_depth_at_centers(std::span<const Gaussian> gaussians, const Camera& cam) {
  RenderOptions opts;
  opts.keep_lists = true;
  const SplatFrame frame = render(gaussians, cam, Channel::mask, opts);
  std::vector<double> out(gaussians.size(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(gaussians.size(), [&](std::size_t i) {
    const Vec3 p = cam.to_camera(gaussians[i].mu);
    if (!(p.z() > opts.near_plane)) return;
    const long x = std::lround(cam.fx * p.x() / p.z() + cam.cx);
    const long y = std::lround(cam.fy * p.y() / p.z() + cam.cy);
    if (x < 0 || y < 0 || x >= cam.width || y >= cam.height) return;
    double trans = 1.0;
    out[i] = std::numeric_limits<double>::infinity();
    for (const PixelEntry& e : frame.contributors(static_cast<int>(x), static_cast<int>(y))) {
      trans *= 1.0 - e.local_alpha;
      if (trans <= 0.5) {
        out[i] = cam.to_camera(gaussians[e.gaussian].mu).z();
        return;
      }
    }
  });
  return out;
}

std::vector<char> observed_in_view(std::span<const Gaussian> gaussians, const Camera& cam, double depth_margin) {
  const auto surface = surface_depth_at_centers(gaussians, cam);
  std::vector<char> out(gaussians.size(), 0);
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    if (std::isnan(surface[i])) continue;
    const double depth = cam.to_camera(gaussians[i].mu).z();
    out[i] = depth <= surface[i] + depth_margin * gaussians[i].scale.maxCoeff();
  }
  return out;
}

MaskSignalTable mask_signals(std::span<const Gaussian> gaussians, std::span<const Camera> cameras,
                             std::span<const Mask> masks, const SignalOptions& opts) {
  if (masks.size() != cameras.size()) throw InvalidArgument("mask_signals: need one mask per view");
  for (std::size_t v = 0; v < cameras.size(); ++v)
    if (masks[v].width != cameras[v].width || masks[v].height != cameras[v].height)
      throw ShapeMismatch("mask_signals: mask " + std::to_string(v) + " does not match its camera");

  MaskSignalTable table;
  const std::size_t n = gaussians.size();
  std::vector<std::vector<char>> visible;
  if (opts.occlusion_aware)
    for (const Camera& cam : cameras) visible.push_back(observed_in_view(gaussians, cam, opts.depth_margin));
  table.signals.resize(n);
  table.views.resize(n);
  table.variance.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      const Camera& cam = cameras[v];
      const Vec3 p = cam.to_camera(gaussians[i].mu);
      if (!(p.z() > RenderOptions{}.near_plane)) continue;
      const double x = cam.fx * p.x() / p.z() + cam.cx;
      const double y = cam.fy * p.y() / p.z() + cam.cy;
      if (x < 0.0 || y < 0.0 || x > cam.width - 1 || y > cam.height - 1) continue;
      if (opts.occlusion_aware && !visible[v][i]) continue;
      table.signals[i].push_back(sample_bilinear(masks[v], x, y));
      table.views[i].push_back(static_cast<int>(v));
    }
    const auto& row = table.signals[i];
    if (row.size() < 2) continue;
    const double mean = table.mean(i);
    double acc = 0.0;
    for (double s : row) acc += (s - mean) * (s - mean);
    table.variance[i] = acc / static_cast<double>(row.size());
  }
  return table;
}

BoundarySet select_boundary(const MaskSignalTable& table, double tau, bool raw_threshold) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("select_boundary: tau must lie in (0, 1)");
  BoundarySet out;
  out.tau = tau;
  out.raw_threshold = raw_threshold;
  out.max_variance = table.variance.empty() ? 0.0 : *std::max_element(table.variance.begin(), table.variance.end());
  if (!raw_threshold && out.max_variance <= 0.0) return out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const double v = raw_threshold ? table.variance[i] : table.variance[i] / out.max_variance;
    if (v > tau) out.indices.push_back(static_cast<int>(i));
  }
  return out;
}

std::optional<ViewBox> bounding_box(const BoundarySet& bset, std::span<const Gaussian> gaussians,
                                    const Camera& cam, double delta) {
  if (delta < 0.0) throw InvalidArgument("bounding_box: delta must be non-negative");
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vec2 lo(inf, inf);
  Vec2 hi(-inf, -inf);
  bool any = false;
  for (int i : bset.indices) {
    const Vec3 p = cam.to_camera(gaussians[static_cast<std::size_t>(i)].mu);
    if (!(p.z() > RenderOptions{}.near_plane)) continue;
    const Vec2 px(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
    lo = lo.cwiseMin(px);
    hi = hi.cwiseMax(px);
    any = true;
  }
  if (!any) return std::nullopt;
  const Vec2 limit(cam.width - 1, cam.height - 1);
  ViewBox box;
  box.delta = delta;
  box.min = (lo.array() - delta).max(0.0).min(limit.array()).matrix();
  box.max = (hi.array() + delta).max(0.0).min(limit.array()).matrix();
  return box;
}

std::vector<Vec2> grid_sample(const Vec2& bmin, const Vec2& bmax, int n_row, int n_col) {
  if (n_row < 1 || n_col < 1) throw InvalidArgument("grid_sample: grid size must be at least 1x1");
  const double dx = (bmax.x() - bmin.x()) / n_col;
  const double dy = (bmax.y() - bmin.y()) / n_row;
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n_row + 1) * (n_col + 1));
  for (int l = 0; l <= n_row; ++l) {
    const double y = l == n_row ? bmax.y() : bmin.y() + l * dy;
    for (int k = 0; k <= n_col; ++k) {
      const double x = k == n_col ? bmax.x() : bmin.x() + k * dx;
      pts.emplace_back(x, y);
    }
  }
  return pts;
}

std::vector<double> depth_offsets(int k) {
  if (k < 2) throw InvalidArgument("depth_offsets: need at least two samples per ray");
  std::vector<double> out(static_cast<std::size_t>(k));
  for (int s = 1; s <= k; ++s) out[static_cast<std::size_t>(s - 1)] = -1.0 + 2.0 * (s - 1) / (k - 1);
  return out;
}

double mean_boundary_depth(const BoundarySet& bset, std::span<const Gaussian> gaussians, const Camera& cam) {
  if (bset.empty()) return 0.0;
  double sum = 0.0;
  for (int i : bset.indices) sum += (gaussians[static_cast<std::size_t>(i)].mu - cam.origin).norm();
  return sum / static_cast<double>(bset.size());
}

QueryBatch make_queries(std::span<const Vec2> grid_points, const Camera& cam, double t_bar, int samples_per_ray,
                        double alpha_range, double eps) {
  if (!(t_bar > 0.0) || !std::isfinite(t_bar)) throw InvalidDepth("make_queries: mean boundary depth must be positive");
  const auto offsets = depth_offsets(samples_per_ray);
  QueryBatch batch;
  batch.grid_points.assign(grid_points.begin(), grid_points.end());
  batch.origin = cam.origin;
  batch.samples_per_ray = samples_per_ray;
  batch.t_bar = t_bar;
  batch.alpha_range = alpha_range;
  batch.eps = eps;
  batch.half_window = std::max(alpha_range * t_bar, eps);
  batch.ray_dirs.reserve(grid_points.size());
  batch.queries.reserve(grid_points.size() * offsets.size());
  batch.depths.reserve(grid_points.size() * offsets.size());
  const Mat3 cam_to_world = cam.rot.transpose();
  for (const Vec2& p : grid_points) {
    const Vec3 d_cam = Vec3((p.x() - cam.cx) / cam.fx, (p.y() - cam.cy) / cam.fy, 1.0).normalized();
    const Vec3 d_world = cam_to_world * d_cam;
    batch.ray_dirs.push_back(d_world);
    for (double delta : offsets) {
      const double t = t_bar + batch.half_window * delta;
      batch.depths.push_back(t);
      batch.queries.push_back(cam.origin + t * d_world);
    }
  }
  return batch;
}

QueryBatch make_queries(std::span<const Vec2> grid_points, const Camera& cam, const BoundarySet& bset,
                        std::span<const Gaussian> gaussians, int samples_per_ray, double alpha_range, double eps) {
  return make_queries(grid_points, cam, mean_boundary_depth(bset, gaussians, cam), samples_per_ray, alpha_range, eps);
}

}  // namespace edgefield
