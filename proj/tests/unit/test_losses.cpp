#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "edgefield/autodiff.hpp"
#include "edgefield/losses.hpp"
#include "oracles.hpp"

using namespace edgefield;

namespace {

Image random_image(int w, int h, int c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h, c);
  for (double& v : img.data) v = u(rng);
  return img;
}

std::vector<double> flat(const Image& img) { return img.data; }

Image with(const Image& like, std::span<const double> data) {
  Image img = like;
  std::copy(data.begin(), data.end(), img.data.begin());
  return img;
}

// Independent patch variance: per-channel population variance, averaged.
double patch_var_oracle(const Image& img, int x, int y, int patch) {
  const int r = patch / 2;
  double total = 0;
  for (int c = 0; c < img.channels; ++c) {
    std::vector<double> vals;
    for (int yy = y - r; yy <= y + r; ++yy)
      for (int xx = x - r; xx <= x + r; ++xx)
        if (xx >= 0 && yy >= 0 && xx < img.width && yy < img.height) vals.push_back(img.at(xx, yy, c));
    const double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
    double v = 0;
    for (double s : vals) v += (s - mean) * (s - mean);
    total += v / vals.size();
  }
  return total / img.channels;
}

double grad_oracle_sq(const Image& img, int x, int y) {
  double sum = 0;
  for (int c = 0; c < img.channels; ++c) {
    double gx, gy;
    if (x == 0) gx = img.at(1, y, c) - img.at(0, y, c);
    else if (x == img.width - 1) gx = img.at(x, y, c) - img.at(x - 1, y, c);
    else gx = (img.at(x + 1, y, c) - img.at(x - 1, y, c)) / 2;
    if (y == 0) gy = img.at(x, 1, c) - img.at(x, 0, c);
    else if (y == img.height - 1) gy = img.at(x, y, c) - img.at(x, y - 1, c);
    else gy = (img.at(x, y + 1, c) - img.at(x, y - 1, c)) / 2;
    sum += gx * gx + gy * gy;
  }
  return sum;
}

std::vector<PixelIndex> block(int x0, int y0, int w, int h) {
  std::vector<PixelIndex> px;
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) px.push_back({x, y});
  return px;
}

}  // namespace

TEST(TotalLoss, Examples) {
  const LossWeights w;
  EXPECT_EQ(total_loss({}, w).total, 0.0);
  LossReport r;
  r.align = 1;
  r.mask = 2;
  r.cont = 4;
  r.smth = 8;
  EXPECT_NEAR(total_loss(r, w).total, 2.8, 1e-12);
  EXPECT_DOUBLE_EQ(w.lambda_mask, 0.5);
  EXPECT_DOUBLE_EQ(w.lambda_cont, 0.1);
  EXPECT_DOUBLE_EQ(w.lambda_smth, 0.05);
  EXPECT_DOUBLE_EQ(w.eps_mask, 1e-7);
}

TEST(AlignLoss, IdenticalOutputsOnConstantPatch) {
  const Image color(16, 16, 3, 0.4);
  const Image alpha(16, 16, 1, 0.8);
  const auto px = block(5, 5, 3, 3);
  const std::vector<Vec3> nc(px.size(), Vec3::Constant(0.4));
  const std::vector<double> na(px.size(), 0.8);
  EXPECT_EQ(align_loss(color, alpha, px, nc, na, LossWeights{}), 0.0);
}

TEST(AlignLoss, SinglePixelSquaredNorm) {
  Image color(9, 9, 3, 0.0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) color.at(x, y, 0) = 1.0;
  const Image alpha(9, 9, 1, 0.5);
  const std::vector<PixelIndex> px{{4, 4}};
  const std::vector<Vec3> nc{Vec3::Zero()};
  const std::vector<double> na{0.5};
  EXPECT_DOUBLE_EQ(align_loss(color, alpha, px, nc, na, LossWeights{}), 1.0);
}

TEST(AlignLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double wa : {0.0, 0.5, 2.0})
    for (double wv : {0.0, 0.1, 1.0}) {
      const Image color = random_image(12, 10, 3, rng);
      const Image alpha = random_image(12, 10, 1, rng);
      const auto px = block(rng() % 3, 7, 3, 3);  // touches the bottom border
      std::vector<Vec3> nc(px.size());
      std::vector<double> na(px.size());
      for (std::size_t i = 0; i < px.size(); ++i) {
        nc[i] = Vec3(u(rng), u(rng), u(rng));
        na[i] = u(rng);
      }
      LossWeights w;
      w.w_alpha = wa;
      w.w_var = wv;
      double sum = 0;
      for (std::size_t i = 0; i < px.size(); ++i) {
        const auto [x, y] = px[i];
        double d = 0;
        for (int c = 0; c < 3; ++c) d += (color.at(x, y, c) - nc[i][c]) * (color.at(x, y, c) - nc[i][c]);
        const double da = alpha.at(x, y) - na[i];
        sum += d + wa * da * da + wv * patch_var_oracle(color, x, y, 7);
      }
      EXPECT_NEAR(align_loss(color, alpha, px, nc, na, w), sum / px.size(), 1e-10);
    }
}

TEST(AlignLoss, EmptyIsNoOp) {
  const Image color(4, 4, 3), alpha(4, 4, 1);
  AlignGrad g;
  EXPECT_EQ(align_loss(color, alpha, {}, {}, {}, LossWeights{}, &g), 0.0);
  EXPECT_EQ(g.d_color.data.size(), color.data.size());
  const std::vector<PixelIndex> px{{1, 1}};
  EXPECT_THROW(align_loss(color, alpha, px, {}, {}, LossWeights{}), ShapeMismatch);
}

TEST(AlignLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(2);
  const Image color = random_image(10, 10, 3, rng);
  const Image alpha = random_image(10, 10, 1, rng);
  const auto px = block(0, 3, 4, 3);
  std::vector<Vec3> nc(px.size());
  std::vector<double> na(px.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < px.size(); ++i) {
    nc[i] = Vec3(u(rng), u(rng), u(rng));
    na[i] = u(rng);
  }
  const LossWeights w;
  AlignGrad g;
  align_loss(color, alpha, px, nc, na, w, &g);

  const ScalarClosure f_color = [&](std::span<const double> x) {
    return align_loss(with(color, x), alpha, px, nc, na, w);
  };
  EXPECT_LT(fd_check(f_color, flat(color), flat(g.d_color)), 1e-3);
  const ScalarClosure f_alpha = [&](std::span<const double> x) {
    return align_loss(color, with(alpha, x), px, nc, na, w);
  };
  EXPECT_LT(fd_check(f_alpha, flat(alpha), flat(g.d_alpha)), 1e-3);

  std::vector<double> x0, ad;
  for (std::size_t i = 0; i < px.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      x0.push_back(nc[i][c]);
      ad.push_back(g.d_nerf_color[i][c]);
    }
  for (std::size_t i = 0; i < px.size(); ++i) {
    x0.push_back(na[i]);
    ad.push_back(g.d_nerf_alpha[i]);
  }
  const ScalarClosure f_nerf = [&](std::span<const double> x) {
    std::vector<Vec3> c(px.size());
    std::vector<double> a(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      c[i] = Vec3(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
      a[i] = x[3 * px.size() + i];
    }
    return align_loss(color, alpha, px, c, a, w);
  };
  EXPECT_LT(fd_check(f_nerf, x0, ad), 1e-3);
}

TEST(PatchVariance, ClippedAtBorders) {
  std::mt19937_64 rng(3);
  const Image img = random_image(9, 6, 3, rng);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 9; ++x) EXPECT_NEAR(patch_variance(img, x, y, 7), patch_var_oracle(img, x, y, 7), 1e-12);
}

TEST(ContinuityLoss, Examples) {
  const std::vector<Vec3> same(5, Vec3(0.2, 0.3, 0.4));
  std::vector<Vec3> pos{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 1, 1)};
  EXPECT_EQ(continuity_loss(same, knn_graph(pos, 2)), 0.0);

  const std::vector<Vec3> two{Vec3(1, 0, 0), Vec3(0, 0, 0)};
  const std::vector<std::vector<int>> mutual{{1}, {0}};
  EXPECT_DOUBLE_EQ(continuity_loss(two, mutual), 1.0);

  const std::vector<Vec3> one{Vec3(1, 0, 0)};
  const std::vector<std::vector<int>> none{{}};
  EXPECT_EQ(continuity_loss(one, none), 0.0);
  EXPECT_THROW(continuity_loss(two, none), ShapeMismatch);
}

TEST(ContinuityLoss, KnnGraphExcludesSelf) {
  const std::vector<Vec3> pos{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0), Vec3(6, 0, 0)};
  const auto g = knn_graph(pos, 2);
  EXPECT_EQ(g[0], (std::vector<int>{1, 2}));
  EXPECT_EQ(g[2], (std::vector<int>{1, 0}));
  EXPECT_EQ(g[3], (std::vector<int>{2, 1}));
  EXPECT_EQ(knn_graph(pos, 10)[1].size(), 3u);
}

TEST(ContinuityLoss, MatchesScalarOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pos(10), col(10);
  for (int i = 0; i < 10; ++i) {
    pos[i] = Vec3(u(rng), u(rng), u(rng));
    col[i] = Vec3(u(rng), u(rng), u(rng));
  }
  // Brute-force 3 nearest others.
  double total = 0;
  for (int i = 0; i < 10; ++i) {
    std::vector<std::pair<double, int>> d;
    for (int j = 0; j < 10; ++j)
      if (j != i) d.push_back({(pos[i] - pos[j]).squaredNorm(), j});
    std::sort(d.begin(), d.end());
    double s = 0;
    for (int n = 0; n < 3; ++n) s += (col[i] - col[d[n].second]).squaredNorm();
    total += s / 3;
  }
  EXPECT_NEAR(continuity_loss(col, knn_graph(pos, 3)), total / 10, 1e-10);
}

TEST(ContinuityLoss, GradientAndPermutation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pos(10), col(10);
  for (int i = 0; i < 10; ++i) {
    pos[i] = Vec3(u(rng), u(rng), u(rng));
    col[i] = Vec3(u(rng), u(rng), u(rng));
  }
  const auto graph = knn_graph(pos, 3);
  std::vector<Vec3> d;
  const double base = continuity_loss(col, graph, &d);
  std::vector<double> x0, ad;
  for (int i = 0; i < 10; ++i)
    for (int c = 0; c < 3; ++c) {
      x0.push_back(col[i][c]);
      ad.push_back(d[i][c]);
    }
  const ScalarClosure f = [&](std::span<const double> x) {
    std::vector<Vec3> c(10);
    for (int i = 0; i < 10; ++i) c[i] = Vec3(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
    return continuity_loss(c, graph);
  };
  EXPECT_LT(fd_check(f, x0, ad), 1e-3);

  std::vector<int> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> pos2(10), col2(10);
  for (int i = 0; i < 10; ++i) {
    pos2[i] = pos[perm[i]];
    col2[i] = col[perm[i]];
  }
  EXPECT_NEAR(continuity_loss(col2, knn_graph(pos2, 3)), base, 1e-12);
}

TEST(SmoothnessLoss, ConstantAndRamp) {
  const Image flat_img(8, 8, 3, 0.3);
  EXPECT_EQ(smoothness_loss(flat_img, block(0, 0, 8, 8)), 0.0);
  const double s = 0.07;
  Image ramp(8, 8, 3, 0.0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) ramp.at(x, y, 1) = s * x;
  for (const auto& p : block(0, 0, 8, 8)) {
    const std::vector<PixelIndex> one{p};
    EXPECT_NEAR(smoothness_loss(ramp, one), s * s, 1e-15);
  }
}

TEST(SmoothnessLoss, MatchesScalarOracleAndGradient) {
  std::mt19937_64 rng(6);
  const Image img = random_image(8, 8, 3, rng);
  const auto px = block(0, 0, 8, 8);
  double want = 0;
  for (const auto& p : px) want += grad_oracle_sq(img, p.x, p.y);
  Image d;
  EXPECT_NEAR(smoothness_loss(img, px, &d), want / px.size(), 1e-10);
  const auto sub = block(2, 0, 3, 8);
  smoothness_loss(img, sub, &d);
  const ScalarClosure f = [&](std::span<const double> x) { return smoothness_loss(with(img, x), sub); };
  EXPECT_LT(fd_check(f, flat(img), flat(d)), 1e-3);
}

TEST(SmoothnessLoss, PermutationInvariant) {
  std::mt19937_64 rng(7);
  const Image img = random_image(8, 8, 3, rng);
  auto px = block(1, 1, 5, 5);
  const double a = smoothness_loss(img, px);
  std::shuffle(px.begin(), px.end(), rng);
  EXPECT_NEAR(smoothness_loss(img, px), a, 1e-14);
}

TEST(MaskLoss, PerfectPrediction) {
  Mask gt(8, 8);
  Image pred(8, 8, 1);
  for (int i = 0; i < 64; i += 3) {
    gt.data[i] = 1;
    pred.data[i] = 1.0;
  }
  EXPECT_LT(mask_loss(pred, gt, Image(8, 8, 1), LossWeights{}), 1e-6);
}

TEST(MaskLoss, SinglePixelExample) {
  Mask gt(1, 1, 1);
  const Image pred(1, 1, 1, 0.5);
  const Image d(1, 1, 1, 0.0);
  const double v = mask_loss(pred, gt, d, LossWeights{});
  EXPECT_NEAR(v, 0.3466, 1e-4);
  EXPECT_NEAR(v, -0.5 * std::log(0.5 + 1e-7), 1e-15);
}

TEST(MaskLoss, DensityWeightMonotone) {
  std::mt19937_64 rng(8);
  const Image pred = random_image(6, 6, 1, rng);
  const Mask gt = oracle::random_mask(6, 6, rng);
  Image d = random_image(6, 6, 1, rng);
  for (double& v : d.data) v += 0.1;
  Image d2 = d;
  for (double& v : d2.data) v *= 2;
  EXPECT_GT(mask_loss(pred, gt, d2, LossWeights{}), mask_loss(pred, gt, d, LossWeights{}));
}

TEST(MaskLoss, GradientsClampAndPermutation) {
  std::mt19937_64 rng(9);
  Image pred = random_image(6, 5, 1, rng);
  const Mask gt = oracle::random_mask(6, 5, rng);
  Image dens = random_image(6, 5, 1, rng);
  for (double& v : dens.data) v = 4 * v - 2;
  const LossWeights w;
  MaskLossGrad g;
  mask_loss(pred, gt, dens, w, &g);
  EXPECT_EQ(g.clamped, 0u);
  const ScalarClosure fp = [&](std::span<const double> x) { return mask_loss(with(pred, x), gt, dens, w); };
  EXPECT_LT(fd_check(fp, flat(pred), flat(g.d_pred)), 1e-3);
  const ScalarClosure fd = [&](std::span<const double> x) { return mask_loss(pred, gt, with(dens, x), w); };
  EXPECT_LT(fd_check(fd, flat(dens), flat(g.d_density)), 1e-3);

  Image wild = pred;
  wild.data[0] = 1.4;
  wild.data[1] = -0.2;
  mask_loss(wild, gt, dens, w, &g);
  EXPECT_EQ(g.clamped, 2u);
  EXPECT_TRUE(std::isfinite(mask_loss(wild, gt, dens, w)));

  // Reverse the pixel order of all three images.
  Image rp = pred, rd = dens;
  Mask rg = gt;
  std::reverse(rp.data.begin(), rp.data.end());
  std::reverse(rd.data.begin(), rd.data.end());
  std::reverse(rg.data.begin(), rg.data.end());
  EXPECT_NEAR(mask_loss(rp, rg, rd, w), mask_loss(pred, gt, dens, w), 1e-14);
  EXPECT_THROW(mask_loss(pred, Mask(3, 3), dens, w), ShapeMismatch);
}

TEST(PixelDensity, AveragesRaysPerPixel) {
  const std::vector<PixelIndex> px{{1, 1}, {1, 1}, {2, 0}};
  const std::vector<double> d{1.0, 3.0, 5.0};
  std::vector<int> counts;
  const Image img = pixel_density(px, d, 4, 3, &counts);
  EXPECT_DOUBLE_EQ(img.at(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(img.at(2, 0), 5.0);
  EXPECT_DOUBLE_EQ(img.at(0, 0), 0.0);
  EXPECT_EQ(counts[img.index(1, 1)], 2);
  EXPECT_THROW(pixel_density(px, std::vector<double>{1.0}, 4, 3), ShapeMismatch);
}

TEST(Losses, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Image color = random_image(8, 8, 3, rng), alpha = random_image(8, 8, 1, rng);
    const auto px = block(1, 2, 4, 4);
    std::vector<Vec3> nc(px.size(), Vec3::Constant(0.5));
    std::vector<double> na(px.size(), 0.5);
    EXPECT_GE(align_loss(color, alpha, px, nc, na, LossWeights{}), 0.0);
    EXPECT_GE(smoothness_loss(color, px), 0.0);
    EXPECT_GE(mask_loss(alpha, oracle::random_mask(8, 8, rng), alpha, LossWeights{}), 0.0);
  }
}
