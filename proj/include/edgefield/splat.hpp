#pragma once

#include <optional>
#include <span>
#include <vector>

#include "edgefield/common.hpp"
#include "edgefield/image.hpp"
#include "edgefield/scene.hpp"

namespace edgefield {

struct RenderOptions {
  /// Contributions with opacity * footprint below this are skipped.
  double min_footprint = 1.0 / 255.0;
  /// Added to the diagonal of every projected covariance (px^2).
  double cov_floor = 0.3;
  double near_plane = 1e-3;
  /// Keep the per-pixel contributor lists needed by backprop_render.
  bool keep_lists = true;
};

struct Projection {
  Vec2 mean;
  Mat2 cov;
  Mat2 conic;  // inverse of cov
  double depth = 0.0;
};

/// EWA-style projection; std::nullopt when the Gaussian is behind the near plane.
std::optional<Projection> project(const Gaussian& g, const Camera& cam,
                                  const RenderOptions& opts = {});

enum class Channel { color, mask, both };

/// One contributor of a pixel, in compositing order.
struct PixelEntry {
  int gaussian = 0;
  double footprint = 0.0;  // G2D(p)
  double local_alpha = 0.0;  // opacity * G2D(p)
  double weight = 0.0;  // local_alpha * transmittance before it
};

struct SplatFrame {
  int width = 0;
  int height = 0;
  Image color;  // H x W x 3
  Image mask;   // H x W
  Image alpha;  // H x W, accumulated opacity
  bool has_lists = false;
  std::vector<std::size_t> offsets;  // CSR offsets into entries, size W*H + 1
  std::vector<PixelEntry> entries;
  std::vector<std::optional<Projection>> projections;
  /// Per-Gaussian values the frame was rendered with.
  std::vector<Vec3> colors;
  std::vector<double> opacities;
  std::vector<double> labels;

  std::span<const PixelEntry> contributors(int x, int y) const {
    const std::size_t p = static_cast<std::size_t>(y) * width + x;
    return {entries.data() + offsets[p], entries.data() + offsets[p + 1]};
  }
};

/// Front-to-back alpha compositing of color, mask label and opacity. Gaussians
/// are sorted by camera depth with index tiebreak. `labels`, when non-empty,
/// replaces each Gaussian's mask_label.
SplatFrame render(std::span<const Gaussian> gaussians, const Camera& cam,
                  Channel channel = Channel::both, const RenderOptions& opts = {},
                  std::span<const double> labels = {});

struct SplatGradients {
  std::vector<Vec3> color;
  std::vector<double> opacity;
  std::vector<double> mask_label;
};

/// Reverse pass of render for image gradients on color, mask and alpha.
/// Any of the image gradients may be empty (treated as zero).
SplatGradients backprop_render(const SplatFrame& frame, const Image& d_color,
                               const Image& d_mask, const Image& d_alpha = {});

/// Mask rendered with hard labels (label > 0.5) and thresholded at 0.5.
Mask render_hard_mask(std::span<const Gaussian> gaussians, const Camera& cam,
                      const RenderOptions& opts = {});

}  // namespace edgefield
