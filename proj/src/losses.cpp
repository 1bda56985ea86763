#include "edgefield/losses.hpp"

#include <algorithm>
#include <cmath>

#include "edgefield/field.hpp"

namespace edgefield {

LossReport total_loss(LossReport terms, const LossWeights& w) {
  terms.total = terms.align + w.lambda_mask * terms.mask + w.lambda_cont * terms.cont + w.lambda_smth * terms.smth;
  return terms;
}

double patch_variance(const Image& color, int x, int y, int patch, Image* d_color, double scale) {
  const int r = patch / 2;
  const int x0 = std::max(0, x - r);
  const int x1 = std::min(color.width - 1, x + r);
  const int y0 = std::max(0, y - r);
  const int y1 = std::min(color.height - 1, y + r);
  const double n = static_cast<double>((x1 - x0 + 1) * (y1 - y0 + 1));
  const int channels = color.channels;
  double total = 0.0;
  for (int c = 0; c < channels; ++c) {
    // Offsets from the centre pixel keep a constant patch at exactly zero.
    const double ref = color.at(x, y, c);
    double mean = 0.0;
    for (int yy = y0; yy <= y1; ++yy)
      for (int xx = x0; xx <= x1; ++xx) mean += color.at(xx, yy, c) - ref;
    mean /= n;
    double var = 0.0;
    for (int yy = y0; yy <= y1; ++yy)
      for (int xx = x0; xx <= x1; ++xx) {
        const double dv = (color.at(xx, yy, c) - ref) - mean;
        var += dv * dv;
        if (d_color) d_color->at(xx, yy, c) += scale * 2.0 * dv / (n * channels);
      }
    total += var / n;
  }
  return total / channels;
}

double align_loss(const Image& gs_color, const Image& gs_alpha, std::span<const PixelIndex> pixels,
                  std::span<const Vec3> nerf_color, std::span<const double> nerf_alpha, const LossWeights& w,
                  AlignGrad* grad) {
  if (nerf_color.size() != pixels.size() || nerf_alpha.size() != pixels.size())
    throw ShapeMismatch("align_loss: one nerf output per sampled pixel expected");
  if (grad) {
    grad->d_color = Image(gs_color.width, gs_color.height, gs_color.channels);
    grad->d_alpha = Image(gs_alpha.width, gs_alpha.height, 1);
    grad->d_nerf_color.assign(pixels.size(), Vec3::Zero());
    grad->d_nerf_alpha.assign(pixels.size(), 0.0);
  }
  if (pixels.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(pixels.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const auto [x, y] = pixels[i];
    const Vec3 gs(gs_color.at(x, y, 0), gs_color.at(x, y, 1), gs_color.at(x, y, 2));
    const Vec3 diff = gs - nerf_color[i];
    const double da = gs_alpha.at(x, y) - nerf_alpha[i];
    sum += diff.squaredNorm() + w.w_alpha * da * da;
    sum += w.w_var * patch_variance(gs_color, x, y, w.patch, grad ? &grad->d_color : nullptr, w.w_var * inv_n);
    if (grad) {
      for (int c = 0; c < 3; ++c) grad->d_color.at(x, y, c) += 2.0 * diff[c] * inv_n;
      grad->d_alpha.at(x, y) += 2.0 * w.w_alpha * da * inv_n;
      grad->d_nerf_color[i] = -2.0 * diff * inv_n;
      grad->d_nerf_alpha[i] = -2.0 * w.w_alpha * da * inv_n;
    }
  }
  return sum * inv_n;
}

std::vector<std::vector<int>> knn_graph(std::span<const Vec3> positions, int k) {
  std::vector<std::vector<int>> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    auto nn = nearest_neighbors(positions[i], positions, k + 1);
    nn.erase(std::remove(nn.begin(), nn.end(), static_cast<int>(i)), nn.end());
    if (static_cast<int>(nn.size()) > k) nn.resize(static_cast<std::size_t>(k));
    out[i] = std::move(nn);
  }
  return out;
}

double continuity_loss(std::span<const Vec3> colors, std::span<const std::vector<int>> neighbors,
                       std::vector<Vec3>* d_colors) {
  if (neighbors.size() != colors.size()) throw ShapeMismatch("continuity_loss: one neighbour list per point expected");
  if (d_colors) d_colors->assign(colors.size(), Vec3::Zero());
  if (colors.size() < 2) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(colors.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < colors.size(); ++i) {
    const auto& nn = neighbors[i];
    if (nn.empty()) continue;
    const double inv_k = 1.0 / static_cast<double>(nn.size());
    for (int j : nn) {
      const Vec3 diff = colors[i] - colors[static_cast<std::size_t>(j)];
      sum += diff.squaredNorm() * inv_k;
      if (d_colors) {
        (*d_colors)[i] += 2.0 * diff * inv_k * inv_n;
        (*d_colors)[static_cast<std::size_t>(j)] -= 2.0 * diff * inv_k * inv_n;
      }
    }
  }
  return sum * inv_n;
}

namespace {

struct Stencil1D {
  int lo;
  int hi;
  double scale;
};

// Central difference (hi - lo) * scale, one-sided at the border, zero when
// the axis has a single pixel.
Stencil1D difference(int at, int size) {
  if (size < 2) return {at, at, 0.0};
  if (at == 0) return {0, 1, 1.0};
  if (at == size - 1) return {size - 2, size - 1, 1.0};
  return {at - 1, at + 1, 0.5};
}

}  // namespace

double smoothness_loss(const Image& color, std::span<const PixelIndex> pixels, Image* d_color) {
  if (d_color) *d_color = Image(color.width, color.height, color.channels);
  if (pixels.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(pixels.size());
  double sum = 0.0;
  for (const auto& [x, y] : pixels) {
    const Stencil1D sx = difference(x, color.width);
    const Stencil1D sy = difference(y, color.height);
    for (int c = 0; c < color.channels; ++c) {
      const double gx = (color.at(sx.hi, y, c) - color.at(sx.lo, y, c)) * sx.scale;
      const double gy = (color.at(x, sy.hi, c) - color.at(x, sy.lo, c)) * sy.scale;
      sum += gx * gx + gy * gy;
      if (d_color) {
        d_color->at(sx.hi, y, c) += 2.0 * gx * sx.scale * inv_n;
        d_color->at(sx.lo, y, c) -= 2.0 * gx * sx.scale * inv_n;
        d_color->at(x, sy.hi, c) += 2.0 * gy * sy.scale * inv_n;
        d_color->at(x, sy.lo, c) -= 2.0 * gy * sy.scale * inv_n;
      }
    }
  }
  return sum * inv_n;
}

Image pixel_density(std::span<const PixelIndex> pixels, std::span<const double> ray_density, int width, int height,
                    std::vector<int>* counts) {
  if (pixels.size() != ray_density.size()) throw ShapeMismatch("pixel_density: one density per ray expected");
  Image out(width, height, 1);
  std::vector<int> hits(static_cast<std::size_t>(width) * height, 0);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    out.at(pixels[i].x, pixels[i].y) += ray_density[i];
    ++hits[out.index(pixels[i].x, pixels[i].y)];
  }
  for (std::size_t p = 0; p < hits.size(); ++p)
    if (hits[p] > 1) out.data[p] /= hits[p];
  if (counts) *counts = std::move(hits);
  return out;
}

double mask_loss(const Image& pred, const Mask& gt, const Image& density, const LossWeights& w, MaskLossGrad* grad) {
  if (pred.width != gt.width || pred.height != gt.height || density.width != gt.width || density.height != gt.height)
    throw ShapeMismatch("mask_loss: prediction, target and density must share a size");
  const std::size_t n = gt.pixel_count();
  if (grad) {
    grad->d_pred = Image(pred.width, pred.height, 1);
    grad->d_density = Image(pred.width, pred.height, 1);
    grad->clamped = 0;
  }
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double eps = w.eps_mask;
  double sum = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double raw = pred.data[p];
    const double m = std::clamp(raw, 0.0, 1.0);
    const bool clamped = m != raw;
    const double target = gt.data[p] ? 1.0 : 0.0;
    const double bce = -target * std::log(m + eps) - (1.0 - target) * std::log(1.0 - m + eps);
    const double s = 1.0 / (1.0 + std::exp(-density.data[p]));
    sum += s * bce;
    if (grad) {
      if (clamped)
        ++grad->clamped;
      else
        grad->d_pred.data[p] = s * (-target / (m + eps) + (1.0 - target) / (1.0 - m + eps)) * inv_n;
      grad->d_density.data[p] = s * (1.0 - s) * bce * inv_n;
    }
  }
  return sum * inv_n;
}

}  // namespace edgefield
