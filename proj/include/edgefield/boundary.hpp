#pragma once

#include <optional>
#include <span>
#include <vector>

#include "edgefield/common.hpp"
#include "edgefield/image.hpp"
#include "edgefield/scene.hpp"
#include "edgefield/splat.hpp"

namespace edgefield {

/// Multi-view foreground probabilities per Gaussian.
struct MaskSignalTable {
  /// signals[i] holds one value per view in which Gaussian i is observed.
  std::vector<std::vector<double>> signals;
  /// views[i][k] is the view index that produced signals[i][k].
  std::vector<std::vector<int>> views;
  /// Population variance of signals[i]; 0 when fewer than two views observe i.
  std::vector<double> variance;

  std::size_t size() const { return variance.size(); }
  bool observed(std::size_t i) const { return !signals[i].empty(); }
  double mean(std::size_t i) const;
};

struct SignalOptions {
  /// Skip views in which the Gaussian is hidden behind other Gaussians.
  bool occlusion_aware = false;
  /// A Gaussian counts as observed when its depth is within this many of its
  /// largest scales behind the visible surface at its center pixel.
  double depth_margin = 3.0;
};

/// Samples each view's mask (bilinear) at the projected Gaussian center.
/// Views where the center is behind the camera, off-image or (optionally)
/// occluded are skipped.
MaskSignalTable mask_signals(std::span<const Gaussian> gaussians, std::span<const Camera> cameras,
                             std::span<const Mask> masks, const SignalOptions& opts = {});

/// Depth of the visible surface at each Gaussian's rounded center pixel: the
/// depth of the contributor at which transmittance first falls to 0.5, or
/// +inf when it never does. NaN when the center is not on the image.
std::vector<double> surface_depth_at_centers(std::span<const Gaussian> gaussians, const Camera& cam);

/// Whether each Gaussian is on or in front of the visible surface in `cam`.
std::vector<char> observed_in_view(std::span<const Gaussian> gaussians, const Camera& cam, double depth_margin);

struct BoundarySet {
  std::vector<int> indices;  // ascending
  double tau = 0.6;
  bool raw_threshold = false;
  double max_variance = 0.0;

  bool empty() const { return indices.empty(); }
  std::size_t size() const { return indices.size(); }
};

/// Boundary Gaussians: variance / max variance > tau, or variance > tau when
/// `raw_threshold` is set. Empty when every variance is zero.
BoundarySet select_boundary(const MaskSignalTable& table, double tau, bool raw_threshold = false);

struct ViewBox {
  Vec2 min;
  Vec2 max;
  double delta = 5.0;
};

/// Image-plane bounds of the boundary Gaussians expanded by delta and clamped
/// to the image. std::nullopt when no boundary Gaussian is in front of the camera.
std::optional<ViewBox> bounding_box(const BoundarySet& bset, std::span<const Gaussian> gaussians,
                                    const Camera& cam, double delta);

/// (n_col + 1) x (n_row + 1) points spanning [bmin, bmax], row-major.
std::vector<Vec2> grid_sample(const Vec2& bmin, const Vec2& bmax, int n_row, int n_col);

/// Normalized window offsets -1 + 2(k-1)/(K-1), k = 1..K.
std::vector<double> depth_offsets(int k);

struct QueryBatch {
  std::vector<Vec2> grid_points;
  std::vector<Vec3> ray_dirs;  // world space, unit
  /// queries[g * samples_per_ray + k]
  std::vector<Vec3> queries;
  /// Ray parameter of each query (distance from the origin along ray_dirs).
  std::vector<double> depths;
  Vec3 origin = Vec3::Zero();
  int samples_per_ray = 8;
  double t_bar = 0.0;
  double half_window = 0.0;  // max(alpha * t_bar, eps)
  double alpha_range = 0.1;
  double eps = 0.01;

  std::size_t ray_count() const { return grid_points.size(); }
};

/// Mean distance from the camera center to the boundary Gaussians.
double mean_boundary_depth(const BoundarySet& bset, std::span<const Gaussian> gaussians, const Camera& cam);

QueryBatch make_queries(std::span<const Vec2> grid_points, const Camera& cam, double t_bar, int samples_per_ray,
                        double alpha_range, double eps);

/// Same, with the window centred on the mean boundary depth of `bset`.
QueryBatch make_queries(std::span<const Vec2> grid_points, const Camera& cam, const BoundarySet& bset,
                        std::span<const Gaussian> gaussians, int samples_per_ray, double alpha_range, double eps);

}  // namespace edgefield
