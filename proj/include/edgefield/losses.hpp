#pragma once

#include <span>
#include <vector>

#include "edgefield/common.hpp"
#include "edgefield/image.hpp"

namespace edgefield {

struct LossWeights {
  double w_alpha = 0.5;
  double w_var = 0.1;
  double lambda_mask = 0.5;
  double lambda_cont = 0.1;
  double lambda_smth = 0.05;
  double eps_mask = 1e-7;
  int patch = 7;
};

struct LossReport {
  double align = 0.0;
  double cont = 0.0;
  double smth = 0.0;
  double mask = 0.0;
  double total = 0.0;
};

/// Fills `total` from the four terms.
LossReport total_loss(LossReport terms, const LossWeights& w);

struct PixelIndex {
  int x = 0;
  int y = 0;
  bool operator==(const PixelIndex&) const = default;
};

/// Mean per-channel population variance of the patch x patch window centred
/// on (x, y), clipped to the image. When `d_color` is given, scale * dVar/dI
/// is added into it.
double patch_variance(const Image& color, int x, int y, int patch, Image* d_color = nullptr, double scale = 1.0);

struct AlignGrad {
  Image d_color;  // same shape as the splat color image
  Image d_alpha;
  std::vector<Vec3> d_nerf_color;
  std::vector<double> d_nerf_alpha;
};

/// Mean over sampled pixels of |C_gs - C_nerf|^2 + w_alpha (a_gs - a_nerf)^2
/// + w_var Var(patch). Sample i pairs pixels[i] with nerf_color[i]/nerf_alpha[i].
double align_loss(const Image& gs_color, const Image& gs_alpha, std::span<const PixelIndex> pixels,
                  std::span<const Vec3> nerf_color, std::span<const double> nerf_alpha, const LossWeights& w,
                  AlignGrad* grad = nullptr);

/// k nearest neighbours of every point among the others (self excluded),
/// ties broken by index.
std::vector<std::vector<int>> knn_graph(std::span<const Vec3> positions, int k);

/// Mean over points of the mean squared color distance to their neighbours.
/// Zero for fewer than two points.
double continuity_loss(std::span<const Vec3> colors, std::span<const std::vector<int>> neighbors,
                       std::vector<Vec3>* d_colors = nullptr);

/// Mean over pixels of the squared image-space color gradient (central
/// differences, one-sided at the border).
double smoothness_loss(const Image& color, std::span<const PixelIndex> pixels, Image* d_color = nullptr);

/// Per-pixel density from sampled rays: mean of the ray densities that land on
/// a pixel, zero where no ray landed.
Image pixel_density(std::span<const PixelIndex> pixels, std::span<const double> ray_density, int width, int height,
                    std::vector<int>* counts = nullptr);

struct MaskLossGrad {
  Image d_pred;
  Image d_density;
  std::size_t clamped = 0;  // predictions outside [0, 1]
};

/// (1/N) sum sigmoid(d) * BCE(pred, gt) with eps inside the logs; predictions
/// are clamped to [0, 1].
double mask_loss(const Image& pred, const Mask& gt, const Image& density, const LossWeights& w,
                 MaskLossGrad* grad = nullptr);

}  // namespace edgefield
