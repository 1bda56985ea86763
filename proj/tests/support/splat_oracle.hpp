#pragma once

// Independent per-pixel splatting reference shared by the splat tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "edgefield/scene.hpp"
#include "oracles.hpp"

namespace splat_oracle {

using namespace edgefield;

inline Camera axis_camera(int size = 128) {
  Camera cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = 64.0;
  cam.width = cam.height = size;
  return cam;
}

inline Gaussian splat_at(const Vec3& mu, double scale, double opacity, const Vec3& color, double label = 0.5) {
  Gaussian g;
  g.mu = mu;
  g.scale = Vec3::Constant(scale);
  g.opacity = opacity;
  g.color = color;
  g.mask_label = label;
  return g;
}

// Independent EWA projection: J R Sigma R^T J^T plus the anti-aliasing floor.
struct ProjOracle {
  double mx, my, depth;
  Mat2 cov;
};

inline ProjOracle project_oracle(const Gaussian& g, const Camera& cam) {
  const Vec3 p = cam.rot * (g.mu - cam.origin);
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx / p.z(), 0.0, -cam.fx * p.x() / (p.z() * p.z()), 0.0, cam.fy / p.z(), -cam.fy * p.y() / (p.z() * p.z());
  const Mat3 r = g.rotation.toRotationMatrix();
  const Mat3 sigma = r * g.scale.cwiseAbs2().asDiagonal() * r.transpose();
  Mat2 cov = j * cam.rot * sigma * cam.rot.transpose() * j.transpose();
  cov += 0.3 * Mat2::Identity();
  return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, p.z(), cov};
}

inline oracle::Composite pixel_oracle(const std::vector<Gaussian>& gs, const Camera& cam, int x, int y) {
  std::vector<int> idx(gs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<ProjOracle> pr;
  for (const auto& g : gs) pr.push_back(project_oracle(g, cam));
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return pr[a].depth < pr[b].depth; });
  std::vector<oracle::Layer> stack;
  for (int i : idx) {
    const Vec2 d(x - pr[i].mx, y - pr[i].my);
    const double footprint = std::exp(-0.5 * d.dot(pr[i].cov.inverse() * d));
    const double a = gs[i].opacity * footprint;
    if (a < 1.0 / 255.0) continue;
    stack.push_back({a, gs[i].color.x(), gs[i].color.y(), gs[i].color.z(), gs[i].mask_label});
  }
  return oracle::composite(stack);
}

inline std::vector<Gaussian> random_cluster(std::mt19937_64& rng, int n, double spread = 0.3) {
  std::uniform_real_distribution<double> u(-spread, spread), s(0.05, 0.3), a(0.2, 0.95), c(0.0, 1.0), l(0.05, 0.95);
  std::normal_distribution<double> q(0.0, 1.0);
  std::vector<Gaussian> gs;
  for (int i = 0; i < n; ++i) {
    Gaussian g = splat_at(Vec3(u(rng), u(rng), 3.0 + u(rng)), 0.1, a(rng), Vec3(c(rng), c(rng), c(rng)), l(rng));
    g.scale = Vec3(s(rng), s(rng), s(rng));
    g.rotation = Eigen::Quaterniond(q(rng), q(rng), q(rng), q(rng)).normalized();
    gs.push_back(g);
  }
  return gs;
}


}  // namespace splat_oracle
