#include "edgefield/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "edgefield/parallel.hpp"

namespace edgefield {

namespace {

void require_same_size(const Mask& a, const Mask& b, const char* what) {
  if (a.width != b.width || a.height != b.height) throw ShapeMismatch(std::string(what) + ": mask sizes differ");
}

double set_iou(const Mask& a, const Mask& b) {
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t p = 0; p < a.data.size(); ++p) {
    inter += a.data[p] && b.data[p];
    uni += a.data[p] || b.data[p];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

IouAcc miou_macc(const Mask& pred, const Mask& gt) {
  require_same_size(pred, gt, "miou_macc");
  IouAcc out;
  out.iou = set_iou(pred, gt);
  std::size_t correct = 0;
  for (std::size_t p = 0; p < gt.data.size(); ++p) correct += pred.data[p] == gt.data[p];
  out.acc = gt.data.empty() ? 1.0 : static_cast<double>(correct) / static_cast<double>(gt.data.size());
  return out;
}

IouAcc miou_macc(const Image& pred, const Mask& gt, double thr) { return miou_macc(threshold(pred, thr), gt); }

Mask boundary_region(const Mask& mask, int band) {
  if (band < 1) throw InvalidArgument("boundary_region: band must be at least 1");
  const int w = mask.width;
  const int h = mask.height;
  // Separable erosion; anything outside the image counts as background.
  Mask rows(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool keep = x - band >= 0 && x + band < w;
      for (int dx = -band; keep && dx <= band; ++dx) keep = mask.at(x + dx, y) != 0;
      rows.at(x, y) = keep;
    }
  Mask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool keep = y - band >= 0 && y + band < h;
      for (int dy = -band; keep && dy <= band; ++dy) keep = rows.at(x, y + dy) != 0;
      out.at(x, y) = mask.at(x, y) && !keep;
    }
  return out;
}

double boundary_iou(const Mask& pred, const Mask& gt, int band) {
  require_same_size(pred, gt, "boundary_iou");
  const Mask bp = boundary_region(pred, band);
  const Mask bg = boundary_region(gt, band);
  if (bg.count() == 0) return bp.count() == 0 ? 1.0 : 0.0;
  return set_iou(bp, bg);
}

int default_band(int width, int height) {
  const double diag = std::hypot(static_cast<double>(width), static_cast<double>(height));
  return std::max(1, static_cast<int>(std::lround(0.02 * diag)));
}

SegMetrics evaluate_views(std::span<const Mask> pred, std::span<const Mask> gt, int band) {
  if (pred.size() != gt.size()) throw ShapeMismatch("evaluate_views: view counts differ");
  SegMetrics out;
  if (gt.empty()) return out;
  out.boundary_band_px = band > 0 ? band : default_band(gt[0].width, gt[0].height);
  out.per_view.resize(gt.size());
  parallel_for(gt.size(), [&](std::size_t v) {
    const IouAcc ia = miou_macc(pred[v], gt[v]);
    out.per_view[v] = {static_cast<int>(v), ia.iou, ia.acc, boundary_iou(pred[v], gt[v], out.boundary_band_px)};
  });
  for (const auto& m : out.per_view) {
    out.miou += m.iou;
    out.macc += m.acc;
    out.b_miou += m.b_iou;
  }
  const double n = static_cast<double>(gt.size());
  out.miou /= n;
  out.macc /= n;
  out.b_miou /= n;
  return out;
}

}  // namespace edgefield
