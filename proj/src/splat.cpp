#include "edgefield/splat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edgefield/parallel.hpp"

namespace edgefield {

std::optional<Projection> project(const Gaussian& g, const Camera& cam, const RenderOptions& opts) {
  const Vec3 p = cam.to_camera(g.mu);
  if (!(p.z() > opts.near_plane)) return std::nullopt;
  const double z = p.z();
  const double z2 = z * z;
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / z, 0.0, -cam.fx * p.x() / z2,
         0.0, cam.fy / z, -cam.fy * p.y() / z2;
  const Eigen::Matrix<double, 2, 3> t = jac * cam.rot;
  Projection out;
  out.mean = Vec2(cam.fx * p.x() / z + cam.cx, cam.fy * p.y() / z + cam.cy);
  out.cov = t * covariance(g) * t.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  out.cov.diagonal().array() += opts.cov_floor;
  out.conic = out.cov.inverse();
  out.depth = z;
  return out;
}

namespace {

struct Candidate {
  int gaussian;
};

}  // namespace

SplatFrame render(std::span<const Gaussian> gaussians, const Camera& cam, Channel channel,
                  const RenderOptions& opts, std::span<const double> labels) {
  if (!labels.empty() && labels.size() != gaussians.size())
    throw InvalidArgument("render: label override size does not match gaussian count");
  const int w = cam.width;
  const int h = cam.height;
  const std::size_t n = gaussians.size();

  SplatFrame frame;
  frame.width = w;
  frame.height = h;
  frame.color = Image(w, h, 3);
  frame.mask = Image(w, h, 1);
  frame.alpha = Image(w, h, 1);
  frame.projections.resize(n);
  frame.colors.resize(n);
  frame.opacities.resize(n);
  frame.labels.resize(n);

  std::vector<int> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Gaussian& g = gaussians[i];
    frame.colors[i] = g.color;
    frame.opacities[i] = g.opacity;
    frame.labels[i] = labels.empty() ? g.mask_label : labels[i];
    frame.projections[i] = project(g, cam, opts);
    if (frame.projections[i] && g.opacity >= opts.min_footprint) order.push_back(static_cast<int>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return frame.projections[a]->depth < frame.projections[b]->depth;
  });

  // Pixel rectangles that can pass the footprint cutoff, in depth order.
  struct Rect {
    int x0, x1, y0, y1;
  };
  std::vector<Rect> rects(order.size());
  std::vector<std::size_t> counts(static_cast<std::size_t>(w) * h + 1, 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int i = order[k];
    const Projection& pr = *frame.projections[i];
    const double r2 = 2.0 * std::log(gaussians[i].opacity / opts.min_footprint);
    const double ex = std::sqrt(std::max(0.0, r2 * pr.cov(0, 0))) + 1e-9;
    const double ey = std::sqrt(std::max(0.0, r2 * pr.cov(1, 1))) + 1e-9;
    Rect r{static_cast<int>(std::ceil(pr.mean.x() - ex)), static_cast<int>(std::floor(pr.mean.x() + ex)),
           static_cast<int>(std::ceil(pr.mean.y() - ey)), static_cast<int>(std::floor(pr.mean.y() + ey))};
    r.x0 = std::max(r.x0, 0);
    r.y0 = std::max(r.y0, 0);
    r.x1 = std::min(r.x1, w - 1);
    r.y1 = std::min(r.y1, h - 1);
    rects[k] = r;
    for (int y = r.y0; y <= r.y1; ++y)
      for (int x = r.x0; x <= r.x1; ++x) ++counts[static_cast<std::size_t>(y) * w + x + 1];
  }
  std::vector<std::size_t> cand_offsets(counts.size(), 0);
  std::partial_sum(counts.begin(), counts.end(), cand_offsets.begin());
  std::vector<Candidate> candidates(cand_offsets.back());
  {
    std::vector<std::size_t> cursor(cand_offsets.begin(), cand_offsets.end() - 1);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Rect& r = rects[k];
      for (int y = r.y0; y <= r.y1; ++y)
        for (int x = r.x0; x <= r.x1; ++x)
          candidates[cursor[static_cast<std::size_t>(y) * w + x]++] = Candidate{order[k]};
    }
  }

  const bool want_color = channel != Channel::mask;
  const bool want_mask = channel != Channel::color;
  std::vector<PixelEntry> scratch(candidates.size());
  std::vector<std::size_t> kept(static_cast<std::size_t>(w) * h, 0);

  parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < w; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * w + x;
      double transmittance = 1.0;
      Vec3 c = Vec3::Zero();
      double m = 0.0;
      std::size_t out = cand_offsets[p];
      for (std::size_t k = cand_offsets[p]; k < cand_offsets[p + 1]; ++k) {
        const int i = candidates[k].gaussian;
        const Projection& pr = *frame.projections[i];
        const Vec2 d(x - pr.mean.x(), y - pr.mean.y());
        const double power = -0.5 * d.dot(pr.conic * d);
        const double footprint = std::exp(power);
        const double a = frame.opacities[i] * footprint;
        if (a < opts.min_footprint) continue;
        const double weight = a * transmittance;
        if (want_color) c += weight * frame.colors[i];
        if (want_mask) m += weight * frame.labels[i];
        scratch[out++] = PixelEntry{i, footprint, a, weight};
        transmittance *= 1.0 - a;
      }
      kept[p] = out - cand_offsets[p];
      for (int ch = 0; ch < 3; ++ch) frame.color.at(x, y, ch) = c[ch];
      frame.mask.at(x, y) = m;
      frame.alpha.at(x, y) = 1.0 - transmittance;
    }
  });

  if (opts.keep_lists) {
    frame.offsets.assign(static_cast<std::size_t>(w) * h + 1, 0);
    for (std::size_t p = 0; p < kept.size(); ++p) frame.offsets[p + 1] = frame.offsets[p] + kept[p];
    frame.entries.resize(frame.offsets.back());
    for (std::size_t p = 0; p < kept.size(); ++p)
      std::copy_n(scratch.begin() + static_cast<std::ptrdiff_t>(cand_offsets[p]), kept[p],
                  frame.entries.begin() + static_cast<std::ptrdiff_t>(frame.offsets[p]));
    frame.has_lists = true;
  }
  return frame;
}

SplatGradients backprop_render(const SplatFrame& frame, const Image& d_color, const Image& d_mask,
                               const Image& d_alpha) {
  if (!frame.has_lists) throw MissingTape("backprop_render: frame was rendered without per-pixel lists");
  const std::size_t n = frame.colors.size();
  const bool has_c = !d_color.data.empty();
  const bool has_m = !d_mask.data.empty();
  const bool has_a = !d_alpha.data.empty();
  if ((has_c && (d_color.width != frame.width || d_color.height != frame.height || d_color.channels != 3)) ||
      (has_m && (d_mask.width != frame.width || d_mask.height != frame.height)) ||
      (has_a && (d_alpha.width != frame.width || d_alpha.height != frame.height)))
    throw ShapeMismatch("backprop_render: gradient image shape does not match the frame");

  struct Partial {
    std::vector<Vec3> color;
    std::vector<double> opacity;
    std::vector<double> label;
  };
  std::vector<Partial> partials(kReductionChunks);
  const std::size_t rows = static_cast<std::size_t>(frame.height);

  parallel_for(kReductionChunks, [&](std::size_t chunk) {
    Partial& part = partials[chunk];
    part.color.assign(n, Vec3::Zero());
    part.opacity.assign(n, 0.0);
    part.label.assign(n, 0.0);
    const auto [r0, r1] = chunk_range(rows, chunk);
    std::vector<double> suffix;
    for (std::size_t row = r0; row < r1; ++row) {
      const int y = static_cast<int>(row);
      for (int x = 0; x < frame.width; ++x) {
        const auto list = frame.contributors(x, y);
        if (list.empty()) continue;
        const Vec3 gc = has_c ? Vec3(d_color.at(x, y, 0), d_color.at(x, y, 1), d_color.at(x, y, 2))
                              : Vec3::Zero();
        const double gm = has_m ? d_mask.at(x, y) : 0.0;
        const double ga = has_a ? d_alpha.at(x, y) : 0.0;
        if (gc.isZero(0.0) && gm == 0.0 && ga == 0.0) continue;
        // suffix[k] = composite of the per-entry scalar values after entry k,
        // starting with full transmittance.
        const std::size_t len = list.size();
        suffix.assign(len, 0.0);
        for (std::size_t k = len - 1; k > 0; --k) {
          const PixelEntry& e = list[k];
          const double u = gc.dot(frame.colors[e.gaussian]) + gm * frame.labels[e.gaussian] + ga;
          suffix[k - 1] = u * e.local_alpha + (1.0 - e.local_alpha) * suffix[k];
        }
        double transmittance = 1.0;
        for (std::size_t k = 0; k < len; ++k) {
          const PixelEntry& e = list[k];
          const int i = e.gaussian;
          const double u = gc.dot(frame.colors[i]) + gm * frame.labels[i] + ga;
          part.color[i] += e.weight * gc;
          part.label[i] += e.weight * gm;
          const double d_local = transmittance * (u - suffix[k]);
          part.opacity[i] += d_local * e.footprint;
          transmittance *= 1.0 - e.local_alpha;
        }
      }
    }
  });

  SplatGradients grads;
  grads.color.assign(n, Vec3::Zero());
  grads.opacity.assign(n, 0.0);
  grads.mask_label.assign(n, 0.0);
  for (const Partial& part : partials) {
    for (std::size_t i = 0; i < n; ++i) {
      grads.color[i] += part.color[i];
      grads.opacity[i] += part.opacity[i];
      grads.mask_label[i] += part.label[i];
    }
  }
  return grads;
}

Mask render_hard_mask(std::span<const Gaussian> gaussians, const Camera& cam, const RenderOptions& opts) {
  std::vector<double> hard(gaussians.size());
  std::transform(gaussians.begin(), gaussians.end(), hard.begin(),
                 [](const Gaussian& g) { return g.mask_label > 0.5 ? 1.0 : 0.0; });
  RenderOptions o = opts;
  o.keep_lists = false;
  const SplatFrame frame = render(gaussians, cam, Channel::mask, o, hard);
  return threshold(frame.mask, 0.5);
}

}  // namespace edgefield
