#include <gtest/gtest.h>

#include <random>

#include "edgefield/metrics.hpp"
#include "oracles.hpp"

using namespace edgefield;

namespace {

Mask square(int size, int x0, int y0, int side) {
  Mask m(size, size);
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x)
      if (x >= 0 && y >= 0 && x < size && y < size) m.at(x, y) = 1;
  return m;
}

Mask complement(const Mask& m) {
  Mask out(m.width, m.height);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = !m.data[i];
  return out;
}

}  // namespace

TEST(Metrics, IdenticalMasks) {
  const Mask m = square(16, 3, 4, 7);
  const auto r = miou_macc(m, m);
  EXPECT_EQ(r.iou, 1.0);
  EXPECT_EQ(r.acc, 1.0);
  EXPECT_EQ(boundary_iou(m, m, 2), 1.0);
}

TEST(Metrics, ComplementHasZeroIou) {
  const Mask m = square(16, 3, 4, 7);
  const auto r = miou_macc(complement(m), m);
  EXPECT_EQ(r.iou, 0.0);
  EXPECT_EQ(r.acc, 0.0);
}

TEST(Metrics, EmptyMasks) {
  const Mask empty(8, 8);
  EXPECT_EQ(miou_macc(empty, empty).iou, 1.0);
  EXPECT_EQ(boundary_iou(empty, empty, 1), 1.0);
  EXPECT_EQ(boundary_iou(square(8, 2, 2, 3), empty, 1), 0.0);
  EXPECT_EQ(boundary_iou(empty, square(8, 2, 2, 3), 1), 0.0);
}

TEST(Metrics, SoftPredictionThreshold) {
  Image pred(2, 1, 1);
  pred.data = {0.5, 0.51};
  Mask gt(2, 1);
  gt.data = {1, 1};
  const auto r = miou_macc(pred, gt);
  EXPECT_EQ(r.iou, 0.5);
  EXPECT_EQ(r.acc, 0.5);
  EXPECT_EQ(miou_macc(pred, gt, 0.4).iou, 1.0);
}

TEST(Metrics, ShiftedSquareHasDisjointBands) {
  const int band = 2;
  const Mask gt = square(40, 5, 5, 12);
  const Mask pred = square(40, 5 + 2 * band + 13, 5, 12);
  EXPECT_EQ(boundary_iou(pred, gt, band), 0.0);
}

TEST(Metrics, BoundaryRegionOfSquare) {
  const Mask m = square(12, 2, 2, 8);
  const Mask b = boundary_region(m, 2);
  int count = 0;
  for (auto v : b.data) count += v;
  EXPECT_EQ(count, 64 - 16);
  EXPECT_EQ(b.at(2, 2), 1);
  EXPECT_EQ(b.at(5, 5), 0);
  EXPECT_EQ(b.at(0, 0), 0);
  // The image border counts as background.
  const Mask full = square(6, 0, 0, 6);
  const Mask bf = boundary_region(full, 1);
  EXPECT_EQ(bf.at(0, 3), 1);
  EXPECT_EQ(bf.at(2, 2), 0);
}

TEST(Metrics, RandomPairsMatchOracles) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int size = trial % 2 ? 16 : 8;
    const Mask a = trial % 3 ? oracle::random_blobs(size, size, rng) : oracle::random_mask(size, size, rng);
    const Mask b = trial % 3 ? oracle::random_blobs(size, size, rng) : oracle::random_mask(size, size, rng);
    const auto r = miou_macc(a, b);
    EXPECT_EQ(r.iou, oracle::iou(a, b));
    EXPECT_EQ(r.acc, oracle::accuracy(a, b));
    for (int band = 1; band <= 3; ++band) {
      EXPECT_EQ(boundary_iou(a, b, band), oracle::boundary_iou(a, b, band));
      EXPECT_EQ(boundary_region(a, band).data, oracle::inner_boundary(a, band).data);
    }
  }
}

TEST(Metrics, Invariants) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Mask a = oracle::random_blobs(16, 16, rng);
    const Mask b = oracle::random_blobs(16, 16, rng);
    EXPECT_EQ(miou_macc(a, b).iou, miou_macc(b, a).iou);
    EXPECT_EQ(miou_macc(a, b).acc, miou_macc(b, a).acc);
    const double bi = boundary_iou(a, b, 2);
    EXPECT_GE(bi, 0.0);
    EXPECT_LE(bi, 1.0);
    bool gt_empty = true;
    for (auto v : b.data) gt_empty = gt_empty && !v;
    if (!gt_empty) EXPECT_EQ(boundary_iou(a, b, 16), miou_macc(a, b).iou);
  }
}

TEST(Metrics, DefaultBand) {
  EXPECT_EQ(default_band(128, 128), 4);
  EXPECT_EQ(default_band(8, 8), 1);
  EXPECT_EQ(default_band(640, 480), 16);
}

TEST(Metrics, Errors) {
  EXPECT_THROW(miou_macc(Mask(4, 4), Mask(4, 5)), ShapeMismatch);
  EXPECT_THROW(boundary_iou(Mask(4, 4), Mask(5, 4), 1), ShapeMismatch);
  EXPECT_THROW(boundary_iou(Mask(4, 4), Mask(4, 4), 0), InvalidArgument);
  const std::vector<Mask> two(2, Mask(4, 4));
  const std::vector<Mask> one(1, Mask(4, 4));
  EXPECT_THROW(evaluate_views(two, one), ShapeMismatch);
}

TEST(Metrics, EvaluateViewsAverages) {
  std::mt19937_64 rng(13);
  std::vector<Mask> pred, gt;
  for (int v = 0; v < 3; ++v) {
    pred.push_back(oracle::random_blobs(16, 16, rng));
    gt.push_back(oracle::random_blobs(16, 16, rng));
  }
  const auto m = evaluate_views(pred, gt, 2);
  EXPECT_EQ(m.boundary_band_px, 2);
  ASSERT_EQ(m.per_view.size(), 3u);
  double iou = 0, acc = 0, bi = 0;
  for (int v = 0; v < 3; ++v) {
    EXPECT_EQ(m.per_view[v].view, v);
    EXPECT_EQ(m.per_view[v].iou, oracle::iou(pred[v], gt[v]));
    EXPECT_EQ(m.per_view[v].b_iou, oracle::boundary_iou(pred[v], gt[v], 2));
    iou += m.per_view[v].iou;
    acc += m.per_view[v].acc;
    bi += m.per_view[v].b_iou;
  }
  EXPECT_DOUBLE_EQ(m.miou, iou / 3);
  EXPECT_DOUBLE_EQ(m.macc, acc / 3);
  EXPECT_DOUBLE_EQ(m.b_miou, bi / 3);
  EXPECT_EQ(evaluate_views(pred, gt).boundary_band_px, default_band(16, 16));
}
