#pragma once

#include <span>
#include <vector>

#include "edgefield/image.hpp"

namespace edgefield {

struct IouAcc {
  double iou = 0.0;
  double acc = 0.0;
};

/// Foreground IoU (1 when both masks are empty) and pixel accuracy.
IouAcc miou_macc(const Mask& pred, const Mask& gt);
/// Binarizes `pred` at `threshold` (value > threshold is foreground) first.
IouAcc miou_macc(const Image& pred, const Mask& gt, double threshold = 0.5);

/// Mask pixels with a non-mask pixel (or the image border) within Chebyshev
/// distance `band`: the mask minus its erosion by a (2 band + 1)^2 square.
Mask boundary_region(const Mask& mask, int band);

/// IoU of the two boundary regions. 1 when both are empty, 0 when only the
/// ground-truth region is empty.
double boundary_iou(const Mask& pred, const Mask& gt, int band);

/// max(1, round(0.02 * image diagonal)).
int default_band(int width, int height);

struct ViewMetrics {
  int view = 0;
  double iou = 0.0;
  double acc = 0.0;
  double b_iou = 0.0;
};

struct SegMetrics {
  double miou = 0.0;
  double macc = 0.0;
  double b_miou = 0.0;
  int boundary_band_px = 0;
  std::vector<ViewMetrics> per_view;
};

/// Averages over views. band <= 0 selects default_band for the first view.
SegMetrics evaluate_views(std::span<const Mask> pred, std::span<const Mask> gt, int band = 0);

}  // namespace edgefield
