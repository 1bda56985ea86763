#include "edgefield/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "edgefield/rng.hpp"
#include "edgefield/splat.hpp"

namespace edgefield {

void validate(const Gaussian& g) {
  const bool finite = g.mu.allFinite() && g.scale.allFinite() && g.rotation.coeffs().allFinite() &&
                      std::isfinite(g.opacity) && g.color.allFinite() && std::isfinite(g.mask_label) &&
                      g.feature.allFinite();
  if (!finite) throw InvalidPrimitive("gaussian has non-finite fields");
  if ((g.scale.array() <= 0.0).any()) throw InvalidPrimitive("gaussian scale must be positive");
  if (std::abs(g.rotation.norm() - 1.0) > 1e-9) throw InvalidPrimitive("gaussian rotation is not a unit quaternion");
  if (g.opacity < 0.0 || g.opacity > 1.0) throw InvalidPrimitive("gaussian opacity outside [0,1]");
  if (!(g.mask_label > 0.0 && g.mask_label < 1.0)) throw InvalidPrimitive("mask label outside (0,1)");
  if (g.object_id < 0) throw InvalidPrimitive("negative object id");
}

Mat3 covariance(const Gaussian& g) {
  if (!g.scale.allFinite() || !g.rotation.coeffs().allFinite())
    throw InvalidPrimitive("covariance: non-finite scale or rotation");
  const Mat3 r = g.rotation.toRotationMatrix();
  const Mat3 rs = r * g.scale.asDiagonal();
  return rs * rs.transpose();
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
                       int height) {
  const Vec3 forward = (target - eye).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Camera cam;
  cam.rot.row(0) = right.transpose();
  cam.rot.row(1) = down.transpose();
  cam.rot.row(2) = forward.transpose();
  cam.origin = eye;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.width = width;
  cam.height = height;
  return cam;
}

void validate(const Camera& cam) {
  if (!(cam.fx > 0.0 && cam.fy > 0.0)) throw InvalidArgument("camera focal lengths must be positive");
  if (cam.width < 8 || cam.height < 8) throw InvalidArgument("camera image must be at least 8x8");
  const Mat3 should_be_identity = cam.rot * cam.rot.transpose();
  if (!should_be_identity.isApprox(Mat3::Identity(), 1e-9) || std::abs(cam.rot.determinant() - 1.0) > 1e-9)
    throw InvalidArgument("camera rotation is not a proper rotation");
}

std::vector<Mask> SyntheticScene::target_masks() const {
  std::vector<Mask> out;
  out.reserve(gt_masks.size());
  for (const auto& per_object : gt_masks) out.push_back(per_object.at(static_cast<std::size_t>(target_object)));
  return out;
}

namespace {

Eigen::Quaterniond random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q;
}

Vec3 random_direction(Rng& rng) {
  Vec3 v;
  do {
    v = Vec3(rng.normal(), rng.normal(), rng.normal());
  } while (v.norm() < 1e-12);
  return v.normalized();
}

Vec3 surface_point(const ObjectSpec& spec, Rng& rng) {
  switch (spec.shape) {
    case Shape::sphere:
      return spec.center + spec.half_extent.x() * random_direction(rng);
    case Shape::plane: {
      const double x = rng.uniform(-1.0, 1.0) * spec.half_extent.x();
      const double y = rng.uniform(-1.0, 1.0) * spec.half_extent.y();
      return spec.center + Vec3(x, y, 0.0);
    }
    case Shape::box: {
      const Vec3& e = spec.half_extent;
      const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
      const double total = areas[0] + areas[1] + areas[2];
      double pick = rng.uniform() * total;
      int axis = 0;
      while (axis < 2 && pick >= areas[axis]) pick -= areas[axis++];
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      Vec3 local(rng.uniform(-1.0, 1.0) * e.x(), rng.uniform(-1.0, 1.0) * e.y(),
                 rng.uniform(-1.0, 1.0) * e.z());
      local[axis] = side * e[axis];
      return spec.center + local;
    }
  }
  return spec.center;
}

void append_object(const ObjectSpec& spec, int object_id, Rng& rng, std::vector<Gaussian>& out) {
  if (spec.count < 1) throw InvalidArgument("object '" + spec.name + "' must contribute at least one Gaussian");
  for (int k = 0; k < spec.count; ++k) {
    Gaussian g;
    g.mu = surface_point(spec, rng);
    g.scale = Vec3(spec.gaussian_scale * rng.uniform(0.8, 1.2), spec.gaussian_scale * rng.uniform(0.8, 1.2),
                   spec.gaussian_scale * rng.uniform(0.8, 1.2));
    if (spec.shape == Shape::plane) {
      g.scale.z() *= 0.3;
      g.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(0.0, std::numbers::pi), Vec3::UnitZ()));
    } else {
      g.rotation = random_rotation(rng);
    }
    g.opacity = rng.uniform(spec.opacity_min, spec.opacity_max);
    for (int c = 0; c < 3; ++c) g.color[c] = std::clamp(spec.color[c] + 0.04 * rng.normal(), 0.0, 1.0);
    g.feature = g.color;
    g.mask_label = kInitialMaskLabel;
    g.object_id = object_id;
    out.push_back(g);
  }
}

}  // namespace

std::vector<std::vector<Mask>> compute_gt_masks(const std::vector<Gaussian>& gaussians,
                                                const std::vector<Camera>& cameras, int object_count) {
  std::vector<std::vector<Mask>> masks(cameras.size());
  RenderOptions opts;
  opts.keep_lists = false;
  std::vector<double> indicator(gaussians.size());
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    masks[v].reserve(static_cast<std::size_t>(object_count));
    for (int obj = 0; obj < object_count; ++obj) {
      for (std::size_t i = 0; i < gaussians.size(); ++i) indicator[i] = gaussians[i].object_id == obj ? 1.0 : 0.0;
      const SplatFrame frame = render(gaussians, cameras[v], Channel::mask, opts, indicator);
      masks[v].push_back(threshold(frame.mask, 0.5));
    }
  }
  return masks;
}

SyntheticScene generate_scene(const SceneDescriptor& desc) {
  const bool has_object = std::any_of(desc.objects.begin(), desc.objects.end(),
                                      [](const ObjectSpec& o) { return !o.background; });
  if (!has_object) throw DegenerateScene("scene descriptor names no foreground object");
  if (desc.cameras.count < 2) throw DegenerateScene("scene needs at least two cameras");
  if (desc.noise.jitter_px < 0.0 || desc.noise.flip_prob < 0.0 || desc.noise.flip_prob > 1.0)
    throw InvalidArgument("invalid noise settings");

  SyntheticScene scene;
  scene.noise = desc.noise;
  scene.seed = desc.seed;
  scene.object_names.push_back("background");

  Rng rng(desc.seed);
  for (const ObjectSpec& spec : desc.objects) {
    int id = 0;
    if (!spec.background) {
      id = static_cast<int>(scene.object_names.size());
      scene.object_names.push_back(spec.name);
    }
    append_object(spec, id, rng, scene.gaussians);
  }
  if (desc.target_object < 1 || desc.target_object >= scene.object_count())
    throw InvalidArgument("target object id out of range");
  scene.target_object = desc.target_object;

  const CameraRing& ring = desc.cameras;
  for (int k = 0; k < ring.count; ++k) {
    const double theta = ring.phase + 2.0 * std::numbers::pi * k / ring.count;
    const Vec3 eye = ring.target + Vec3(ring.radius * std::cos(theta), ring.radius * std::sin(theta), ring.elevation);
    Camera cam = Camera::look_at(eye, ring.target, Vec3::UnitZ(), ring.focal, ring.width, ring.height);
    validate(cam);
    scene.cameras.push_back(cam);
  }

  for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
    const Camera& cam = scene.cameras[v];
    const bool sees_any = std::any_of(scene.gaussians.begin(), scene.gaussians.end(), [&](const Gaussian& g) {
      const auto pr = project(g, cam);
      return pr && pr->mean.x() >= 0.0 && pr->mean.y() >= 0.0 && pr->mean.x() <= cam.width - 1 &&
             pr->mean.y() <= cam.height - 1;
    });
    if (!sees_any) throw DegenerateScene("camera " + std::to_string(v) + " sees no Gaussian");
  }

  scene.gt_masks = compute_gt_masks(scene.gaussians, scene.cameras, scene.object_count());
  return scene;
}

Mask boundary_band(const Mask& mask, double radius) {
  Mask band(mask.width, mask.height);
  if (radius <= 0.0) return band;
  const int w = mask.width;
  const int h = mask.height;
  // Pixels with a 4-neighbour of the opposite value, split by their own value.
  std::vector<std::pair<int, int>> edge[2];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = mask.at(x, y);
      const bool is_edge = (x > 0 && mask.at(x - 1, y) != v) || (x + 1 < w && mask.at(x + 1, y) != v) ||
                           (y > 0 && mask.at(x, y - 1) != v) || (y + 1 < h && mask.at(x, y + 1) != v);
      if (is_edge) edge[v].emplace_back(x, y);
    }
  }
  const double r2 = radius * radius;
  const int r = static_cast<int>(std::floor(radius));
  const bool scan_window = static_cast<std::size_t>((2 * r + 1) * (2 * r + 1)) < edge[0].size() + edge[1].size();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::uint8_t v = mask.at(x, y);
      bool hit = false;
      if (scan_window) {
        for (int dy = -r; dy <= r && !hit; ++dy) {
          for (int dx = -r; dx <= r && !hit; ++dx) {
            const int xx = x + dx;
            const int yy = y + dy;
            if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
            hit = mask.at(xx, yy) != v && dx * dx + dy * dy <= r2;
          }
        }
      } else {
        for (const auto& [ex, ey] : edge[1 - v]) {
          const double dx = ex - x;
          const double dy = ey - y;
          if (dx * dx + dy * dy <= r2) {
            hit = true;
            break;
          }
        }
      }
      band.at(x, y) = hit ? 1 : 0;
    }
  }
  return band;
}

Mask corrupt_mask(const Mask& mask, const NoiseSpec& noise, std::uint64_t seed) {
  if (noise.jitter_px < 0.0 || noise.flip_prob < 0.0 || noise.flip_prob > 1.0)
    throw InvalidArgument("invalid noise settings");
  Mask out = mask;
  if (noise.flip_prob == 0.0 || noise.jitter_px == 0.0) return out;
  const Mask band = boundary_band(mask, noise.jitter_px);
  Rng rng(seed);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (band.data[i] && rng.bernoulli(noise.flip_prob)) out.data[i] = 1 - out.data[i];
  }
  return out;
}

std::vector<Mask> corrupt_masks(const SyntheticScene& scene, std::uint64_t seed) {
  std::vector<Mask> out;
  const auto clean = scene.target_masks();
  out.reserve(clean.size());
  for (std::size_t v = 0; v < clean.size(); ++v) out.push_back(corrupt_mask(clean[v], scene.noise, derive_seed(seed, v)));
  return out;
}

namespace {

ObjectSpec ground_plane() {
  ObjectSpec g;
  g.name = "ground";
  g.shape = Shape::plane;
  g.center = Vec3(0.0, 0.0, -0.5);
  g.half_extent = Vec3(1.5, 1.5, 0.0);
  g.count = 450;
  g.color = Vec3(0.35, 0.45, 0.3);
  g.gaussian_scale = 0.1;
  g.background = true;
  return g;
}

}  // namespace

SceneDescriptor preset(std::string_view name, std::uint64_t seed) {
  SceneDescriptor d;
  d.seed = seed;
  d.target_object = 1;
  d.cameras.count = 4;
  d.cameras.radius = 3.2;
  d.cameras.elevation = 1.4;
  d.cameras.focal = 150.0;
  d.cameras.width = 128;
  d.cameras.height = 128;
  d.cameras.phase = 0.3;
  d.noise = NoiseSpec{2.0, 0.2};
  d.objects.push_back(ground_plane());

  if (name == "two-spheres") {
    ObjectSpec a;
    a.name = "sphere_a";
    a.center = Vec3(-0.45, -0.1, 0.0);
    a.half_extent = Vec3::Constant(0.5);
    a.count = 320;
    a.color = Vec3(0.85, 0.3, 0.2);
    a.gaussian_scale = 0.07;
    ObjectSpec b;
    b.name = "sphere_b";
    b.center = Vec3(0.55, 0.35, -0.15);
    b.half_extent = Vec3::Constant(0.35);
    b.count = 180;
    b.color = Vec3(0.2, 0.35, 0.85);
    b.gaussian_scale = 0.06;
    d.objects.push_back(a);
    d.objects.push_back(b);
  } else if (name == "occluded-box") {
    ObjectSpec box;
    box.name = "box";
    box.shape = Shape::box;
    box.center = Vec3(-0.2, 0.0, -0.1);
    box.half_extent = Vec3(0.45, 0.3, 0.4);
    box.count = 360;
    box.color = Vec3(0.9, 0.75, 0.2);
    box.gaussian_scale = 0.07;
    ObjectSpec occluder;
    occluder.name = "occluder";
    occluder.center = Vec3(0.75, 0.45, -0.2);
    occluder.half_extent = Vec3::Constant(0.3);
    occluder.count = 160;
    occluder.color = Vec3(0.3, 0.3, 0.8);
    occluder.gaussian_scale = 0.06;
    d.objects.push_back(box);
    d.objects.push_back(occluder);
  } else if (name == "thin-structure") {
    ObjectSpec rod;
    rod.name = "rod";
    rod.shape = Shape::box;
    rod.center = Vec3(0.0, 0.0, 0.2);
    rod.half_extent = Vec3(0.015, 0.015, 0.7);
    rod.count = 160;
    rod.color = Vec3(0.9, 0.9, 0.85);
    rod.gaussian_scale = 0.012;
    ObjectSpec ball;
    ball.name = "ball";
    ball.center = Vec3(0.6, -0.3, -0.2);
    ball.half_extent = Vec3::Constant(0.3);
    ball.count = 150;
    ball.color = Vec3(0.8, 0.25, 0.5);
    ball.gaussian_scale = 0.06;
    d.objects.push_back(rod);
    d.objects.push_back(ball);
  } else {
    throw InvalidArgument("unknown preset '" + std::string(name) + "'");
  }
  return d;
}

std::vector<std::string> preset_names() { return {"two-spheres", "occluded-box", "thin-structure"}; }

}  // namespace edgefield
