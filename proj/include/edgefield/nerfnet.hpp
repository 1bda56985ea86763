#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "edgefield/autodiff.hpp"
#include "edgefield/common.hpp"
#include "edgefield/field.hpp"

namespace edgefield {

struct NerfDims {
  int input_dim = 16;  // hash encoding length
  int cond_dim = 3;    // RBF feature length
  int dir_dim = 3;
  int width = 64;
  int hidden_layers = 4;
};

inline constexpr double kSigmaClamp = 1e4;

/// FiLM-conditioned MLP. The first hidden layer is plain ReLU; every later
/// hidden layer computes relu(gamma(c) * (W h + b) + beta(c)). Density is a
/// clamped softplus head, color a sigmoid head over [hidden, direction].
class NerfNet {
 public:
  NerfNet() = default;
  /// Uniform fan-in initialization; FiLM starts near identity.
  NerfNet(const NerfDims& dims, std::uint64_t seed);

  /// Every parameter zero except the gamma biases, which are one.
  static NerfNet identity_film(const NerfDims& dims);

  const NerfDims& dims() const { return dims_; }
  std::size_t group_count() const { return params_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Eigen::MatrixXd& param(std::size_t i) { return params_[i]; }
  const Eigen::MatrixXd& param(std::size_t i) const { return params_[i]; }
  Eigen::MatrixXd& param(const std::string& name);
  const Eigen::MatrixXd& param(const std::string& name) const;
  std::size_t parameter_count() const;

  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  struct Batch {
    Tape tape;
    NodeId hash_in = -1;
    NodeId cond_in = -1;
    NodeId dir_in = -1;
    NodeId sigma = -1;  // 1 x N
    NodeId color = -1;  // 3 x N
  };

  /// Columns are samples: f_hash (input_dim x N), cond (cond_dim x N), dirs (dir_dim x N).
  Batch forward(const Eigen::MatrixXd& f_hash, const Eigen::MatrixXd& cond, const Eigen::MatrixXd& dirs) const;

  struct Grad {
    std::vector<Eigen::MatrixXd> params;  // same order as the parameter groups
    Eigen::MatrixXd d_hash;
    Eigen::MatrixXd d_cond;
  };

  Grad backward(const Batch& batch, const Eigen::MatrixXd& d_sigma, const Eigen::MatrixXd& d_color) const;

  /// Dimensions header (little-endian u64) followed by 32-bit float parameters.
  void write(std::ostream& out) const;
  static NerfNet read(std::istream& in);

 private:
  void build_layout();

  NerfDims dims_;
  std::vector<std::string> names_;
  std::vector<Eigen::MatrixXd> params_;
};

struct RaySample {
  Vec3 position = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  Eigen::VectorXd condition;
  double segment_length = 0.0;
};

/// Quadrature lengths for K equally spaced samples spanning `total_length`:
/// half a spacing at both ends, a full spacing in between.
std::vector<double> window_segments(int samples, double total_length);

struct RayComposite {
  Vec3 color = Vec3::Zero();
  double alpha = 0.0;
  /// Compositing-weighted density sum_k w_k sigma_k.
  double density = 0.0;
  std::vector<double> transmittance;  // before each sample
  std::vector<double> weights;
};

RayComposite composite_ray(std::span<const double> sigma, std::span<const Vec3> colors,
                           std::span<const double> segments);

struct CompositeGrad {
  std::vector<double> d_sigma;
  std::vector<Vec3> d_color;
};

CompositeGrad composite_backprop(std::span<const double> sigma, std::span<const Vec3> colors,
                                 std::span<const double> segments, const RayComposite& comp, const Vec3& d_color,
                                 double d_alpha, double d_density);

struct NerfOutput {
  double sigma = 0.0;
  Vec3 color = Vec3::Zero();
};

NerfOutput forward(const RaySample& sample, const HashEncoding& enc, const NerfNet& net);

struct RayTrace {
  std::vector<RaySample> samples;
  HashStencil stencil;
  NerfNet::Batch batch;
  std::vector<double> sigma;
  std::vector<Vec3> color;
  std::vector<double> segments;
  RayComposite result;
};

/// Samples must be ordered by depth.
RayTrace render_ray(std::span<const RaySample> samples, const HashEncoding& enc, const NerfNet& net);

struct RayGradients {
  std::vector<Eigen::MatrixXd> net;
  std::vector<double> table;
  Eigen::MatrixXd condition;  // cond_dim x K
};

/// Throws MissingTape when `trace` is null.
RayGradients backprop_ray(const RayTrace* trace, const HashEncoding& enc, const NerfNet& net, const Vec3& d_color,
                          double d_alpha, double d_density = 0.0);

}  // namespace edgefield
