#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "edgefield/common.hpp"
#include "edgefield/image.hpp"

namespace edgefield {

/// Feature width of the per-Gaussian learnable vector (seeded from color).
inline constexpr int kFeatureDim = 3;

/// Initial mask label; the uncertainty prior used before any assignment.
inline constexpr double kInitialMaskLabel = 0.5;

/// A single anisotropic 3D Gaussian with degree-0 appearance.
struct Gaussian {
  Vec3 mu = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity = 1.0;
  Vec3 color = Vec3::Constant(0.5);
  double mask_label = kInitialMaskLabel;
  Eigen::VectorXd feature = Eigen::VectorXd::Zero(kFeatureDim);
  int object_id = 0;
};

/// Throws InvalidPrimitive when a field is non-finite or out of range.
void validate(const Gaussian& g);

/// Sigma = R S S^T R^T.
Mat3 covariance(const Gaussian& g);

/// Pinhole camera. `rot` maps world directions to camera directions and
/// camera-space points are rot * (x - origin); +z looks forward, +y is down.
struct Camera {
  double fx = 100.0;
  double fy = 100.0;
  double cx = 64.0;
  double cy = 64.0;
  Mat3 rot = Mat3::Identity();
  Vec3 origin = Vec3::Zero();
  int width = 128;
  int height = 128;

  Vec3 to_camera(const Vec3& world) const { return rot * (world - origin); }

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                        int width, int height);
};

void validate(const Camera& cam);

enum class Shape { sphere, box, plane };

struct ObjectSpec {
  std::string name;
  Shape shape = Shape::sphere;
  Vec3 center = Vec3::Zero();
  /// Sphere: x is the radius. Box: half sizes. Plane: x/y half sizes at z = center.z.
  Vec3 half_extent = Vec3::Constant(0.5);
  int count = 50;
  Vec3 color = Vec3(0.8, 0.3, 0.2);
  double gaussian_scale = 0.05;
  double opacity_min = 0.85;
  double opacity_max = 0.98;
  /// Background objects share object id 0.
  bool background = false;
};

struct CameraRing {
  int count = 4;
  double radius = 3.5;
  double elevation = 1.5;
  Vec3 target = Vec3::Zero();
  double focal = 140.0;
  int width = 128;
  int height = 128;
  double phase = 0.0;  // radians
};

struct NoiseSpec {
  double jitter_px = 0.0;   // band half-width around the true boundary
  double flip_prob = 0.0;   // per-pixel flip probability inside the band
};

struct SceneDescriptor {
  std::vector<ObjectSpec> objects;
  CameraRing cameras;
  NoiseSpec noise;
  std::uint64_t seed = 7;
  int target_object = 1;
};

struct SyntheticScene {
  std::vector<Gaussian> gaussians;
  std::vector<Camera> cameras;
  /// Object names indexed by object id; id 0 is the background.
  std::vector<std::string> object_names;
  /// gt_masks[view][object id]
  std::vector<std::vector<Mask>> gt_masks;
  NoiseSpec noise;
  int target_object = 1;
  std::uint64_t seed = 7;

  int object_count() const { return static_cast<int>(object_names.size()); }
  /// Ground-truth masks of the target object, one per view.
  std::vector<Mask> target_masks() const;
};

/// Builds the scene and its ground-truth masks. Deterministic per seed.
SyntheticScene generate_scene(const SceneDescriptor& desc);

/// Recomputes gt masks from the Gaussians: a pixel belongs to object k when
/// the compositing weight of k's Gaussians exceeds 0.5.
std::vector<std::vector<Mask>> compute_gt_masks(const std::vector<Gaussian>& gaussians,
                                                const std::vector<Camera>& cameras,
                                                int object_count);

/// Pixels within `radius` (Euclidean) of a pixel with the opposite value.
Mask boundary_band(const Mask& mask, double radius);

/// Noisy target-object masks: pixels inside the jitter band flip with the
/// configured probability. Deterministic per seed.
std::vector<Mask> corrupt_masks(const SyntheticScene& scene, std::uint64_t seed);

/// Same noise model applied to a single mask.
Mask corrupt_mask(const Mask& mask, const NoiseSpec& noise, std::uint64_t seed);

/// Benchmark scenes: "two-spheres", "occluded-box", "thin-structure".
SceneDescriptor preset(std::string_view name, std::uint64_t seed);
std::vector<std::string> preset_names();

}  // namespace edgefield
