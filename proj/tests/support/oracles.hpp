#pragma once

// Scalar reference implementations used by the tests. None of these call into
// the library code paths they are compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "edgefield/image.hpp"

namespace oracle {

struct Layer {
  double alpha = 0.0;  // opacity * footprint
  double r = 0.0, g = 0.0, b = 0.0;
  double label = 0.0;
};

struct Composite {
  double r = 0.0, g = 0.0, b = 0.0;
  double mask = 0.0;
  double alpha = 0.0;
  std::vector<double> weights;
  std::vector<double> transmittance;
};

// Term-by-term front-to-back compositing: weight_i = a_i * prod_{j<i} (1 - a_j).
inline Composite composite(const std::vector<Layer>& stack) {
  Composite out;
  for (std::size_t i = 0; i < stack.size(); ++i) {
    double t = 1.0;
    for (std::size_t j = 0; j < i; ++j) t *= 1.0 - stack[j].alpha;
    const double w = stack[i].alpha * t;
    out.transmittance.push_back(t);
    out.weights.push_back(w);
    out.r += w * stack[i].r;
    out.g += w * stack[i].g;
    out.b += w * stack[i].b;
    out.mask += w * stack[i].label;
    out.alpha += w;
  }
  return out;
}

// Pixels whose Euclidean distance to some pixel of the opposite value is at
// most `radius`.
inline edgefield::Mask band(const edgefield::Mask& m, double radius) {
  edgefield::Mask out(m.width, m.height);
  const int reach = static_cast<int>(std::ceil(radius));
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      for (int v = std::max(0, y - reach); v <= std::min(m.height - 1, y + reach) && !out.at(x, y); ++v)
        for (int u = std::max(0, x - reach); u <= std::min(m.width - 1, x + reach); ++u)
          if (m.at(u, v) != m.at(x, y) && std::hypot(u - x, v - y) <= radius) {
            out.at(x, y) = 1;
            break;
          }
  return out;
}

inline double iou(const edgefield::Mask& a, const edgefield::Mask& b) {
  long inter = 0, uni = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (a.at(x, y) == 1 && b.at(x, y) == 1) ++inter;
      if (a.at(x, y) == 1 || b.at(x, y) == 1) ++uni;
    }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double accuracy(const edgefield::Mask& a, const edgefield::Mask& b) {
  long same = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) same += a.at(x, y) == b.at(x, y);
  return static_cast<double>(same) / static_cast<double>(a.width * a.height);
}

// Chessboard distance from each foreground pixel to the nearest background
// pixel, where everything outside the image is background.
inline std::vector<int> chessboard_distance(const edgefield::Mask& m) {
  std::vector<int> d(static_cast<std::size_t>(m.width) * m.height, 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      int best = std::min({x + 1, y + 1, m.width - x, m.height - y});
      for (int v = 0; v < m.height; ++v)
        for (int u = 0; u < m.width; ++u)
          if (!m.at(u, v)) best = std::min(best, std::max(std::abs(u - x), std::abs(v - y)));
      d[static_cast<std::size_t>(y) * m.width + x] = best;
    }
  return d;
}

// Foreground pixels within `band` of the background.
inline edgefield::Mask inner_boundary(const edgefield::Mask& m, int band) {
  const auto d = chessboard_distance(m);
  edgefield::Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      const int v = d[static_cast<std::size_t>(y) * m.width + x];
      out.at(x, y) = m.at(x, y) && v <= band;
    }
  return out;
}

inline double boundary_iou(const edgefield::Mask& pred, const edgefield::Mask& gt, int band) {
  const auto bp = inner_boundary(pred, band);
  const auto bg = inner_boundary(gt, band);
  long nb = 0, np = 0;
  for (std::size_t i = 0; i < bg.data.size(); ++i) {
    nb += bg.data[i];
    np += bp.data[i];
  }
  if (nb == 0) return np == 0 ? 1.0 : 0.0;
  return iou(bp, bg);
}

// Random blob mask: union of a few discs.
inline edgefield::Mask random_blobs(int w, int h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h), ur(1.0, 0.35 * std::min(w, h));
  std::uniform_int_distribution<int> count(1, 4);
  edgefield::Mask m(w, h);
  const int n = count(rng);
  for (int k = 0; k < n; ++k) {
    const double cx = ux(rng), cy = uy(rng), r = ur(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (std::hypot(x - cx, y - cy) <= r) m.at(x, y) = 1;
  }
  return m;
}

inline edgefield::Mask random_mask(int w, int h, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution coin(p);
  edgefield::Mask m(w, h);
  for (auto& v : m.data) v = coin(rng) ? 1 : 0;
  return m;
}

// Central differences of a scalar function of a vector.
template <class F>
std::vector<double> central_difference(F&& f, std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return worst;
}

}  // namespace oracle
