#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "edgefield/boundary.hpp"
#include "edgefield/field.hpp"
#include "edgefield/losses.hpp"
#include "edgefield/metrics.hpp"
#include "edgefield/nerfnet.hpp"
#include "edgefield/scene.hpp"
#include "edgefield/splat.hpp"

namespace edgefield {

struct AdamConfig {
  double lr = 1.6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// Bias-corrected Adam. `active`, when non-empty, restricts the update to the
/// listed coordinates; moments of the others are left untouched.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg,
               std::span<const int> active = {});

inline constexpr double kLabelMin = 0.001;
inline constexpr double kLabelMax = 0.999;

struct Ablation {
  bool nerf = true;
  bool rbf = true;
  bool mrhe = true;
  bool align = true;
  bool smth = true;

  /// Without the neural field (or without both of its inputs) there is no
  /// joint stage and labels stay at their thresholded values.
  bool joint_stage() const { return nerf && (rbf || mrhe); }
};

struct FreezeFlags {
  bool labels = false;
  bool colors = false;
  bool opacities = false;
  bool features = false;
  bool hash = false;
  bool nerf = false;
};

struct RefineConfig {
  double tau = 0.6;
  bool raw_threshold = false;
  SignalOptions signals;
  double delta = 5.0;
  int grid_rows = 32;
  int grid_cols = 32;
  int samples_per_ray = 8;
  double alpha_range = 0.1;
  double eps = 0.01;
  RbfConfig rbf;
  HashConfig hash;
  int nerf_width = 64;
  int nerf_layers = 4;
  int cont_neighbors = 8;
  LossWeights weights;
  AdamConfig adam;
  int iterations = 500;
  int refresh_every = 100;
  int early_stop_window = 50;
  double early_stop_tol = 1e-6;
  std::uint64_t seed = 7;
  Ablation ablation;
  FreezeFlags freeze;
  RenderOptions render;
  int checkpoint_every = 0;
};

/// Labels from the mean multi-view mask signal: kLabelMax when it exceeds
/// 0.5, kLabelMin otherwise (and for Gaussians no view observes).
std::vector<double> threshold_labels(const MaskSignalTable& table);

/// Gaussians with thresholded labels.
std::vector<Gaussian> segment(std::span<const Gaussian> gaussians, std::span<const Camera> cameras,
                              std::span<const Mask> masks, const SignalOptions& signals = {});

/// Scene box padded by 10% of its extent on every side.
Eigen::AlignedBox3d scene_bounds(std::span<const Gaussian> gaussians);

/// Neural field state shared by all views.
struct FieldModel {
  HashEncoding encoding;
  NerfNet net;
  bool use_hash = true;
  bool use_condition = true;
  Eigen::AlignedBox3d bounds;

  FieldModel() = default;
  FieldModel(const RefineConfig& cfg, const Eigen::AlignedBox3d& bounds);

  /// Network input per query: hash features, or box-normalized xyz.
  Eigen::MatrixXd encode(std::span<const Vec3> points, HashStencil* stencil) const;
};

/// Per-view quantities that depend only on geometry and the boundary set.
struct ViewContext {
  int view = 0;
  bool has_field = false;
  std::vector<PixelIndex> pixels;  // one per ray
  QueryBatch queries;
  std::vector<RbfStencil> rbf;
  std::vector<double> segments;  // per sample on a ray
  Eigen::MatrixXd dirs;          // 3 x (rays * samples)
};

ViewContext make_view_context(std::span<const Gaussian> gaussians, const Camera& cam, int view,
                              const BoundarySet& bset, const RefineConfig& cfg);

struct JointGrad {
  std::vector<double> labels;
  std::vector<double> opacity;
  std::vector<Vec3> color;
  Eigen::MatrixXd features;  // kFeatureDim x |boundary|
  std::vector<double> table;
  std::vector<Eigen::MatrixXd> net;
};

struct JointInputs {
  std::span<const Gaussian> gaussians;
  const BoundarySet* boundary = nullptr;
  std::span<const std::vector<int>> cont_graph;  // local indices into boundary
  const FieldModel* field = nullptr;
  const Camera* camera = nullptr;
  const Mask* target = nullptr;
  const ViewContext* context = nullptr;
};

/// All four losses for one view and, when `grad` is given, the gradient of
/// the weighted total with respect to every trainable group.
LossReport joint_loss(const JointInputs& in, const RefineConfig& cfg, JointGrad* grad = nullptr);

struct RefineCheckpoint {
  int iteration = 0;
  std::span<const Gaussian> gaussians;
  const FieldModel* field = nullptr;
};

struct RefineResult {
  std::vector<Gaussian> gaussians;
  std::vector<LossReport> history;
  BoundarySet boundary;
  FieldModel field;
  int iterations_run = 0;
  bool early_stopped = false;
};

/// Joint refinement. Boundary labels restart from the uncertainty prior and
/// every group is optimized by Adam over round-robin views. Returns the input
/// unchanged for zero iterations, a disabled joint stage, or an empty
/// boundary set.
RefineResult refine(std::span<const Gaussian> gaussians, std::span<const Camera> cameras,
                    std::span<const Mask> masks, const RefineConfig& cfg,
                    const std::function<void(const RefineCheckpoint&)>& on_checkpoint = {});

/// Hard-label masks of every view scored against `gt`.
SegMetrics evaluate_labels(std::span<const Gaussian> gaussians, std::span<const Camera> cameras,
                           std::span<const Mask> gt, int band = 0, const RenderOptions& opts = {});

}  // namespace edgefield
