#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "edgefield/common.hpp"

namespace edgefield {

// ---------------------------------------------------------------------------
// RBF interpolation over boundary Gaussians
// ---------------------------------------------------------------------------

struct RbfConfig {
  int k_neighbors = 8;
  /// Gaussian kernel width sigma in scene units: w = exp(-d^2 / (2 sigma^2)).
  double kernel_width = 0.3;
};

/// Neighbours of one query and their L1-normalized kernel weights.
struct RbfStencil {
  std::vector<int> neighbors;  // indices into the point set, nearest first
  std::vector<double> weights;
  bool uniform_fallback = false;
};

/// k nearest points by Euclidean distance, ties broken by index.
std::vector<int> nearest_neighbors(const Vec3& query, std::span<const Vec3> points, int k);

RbfStencil rbf_stencil(const Vec3& query, std::span<const Vec3> points, const RbfConfig& cfg);

/// features: one column per point.
Eigen::VectorXd rbf_interpolate(const Vec3& query, std::span<const Vec3> points,
                                const Eigen::MatrixXd& features, const RbfConfig& cfg);

std::vector<RbfStencil> rbf_stencils(std::span<const Vec3> queries, std::span<const Vec3> points,
                                     const RbfConfig& cfg);

/// Interpolated features for a batch, one column per stencil.
Eigen::MatrixXd rbf_apply(std::span<const RbfStencil> stencils, const Eigen::MatrixXd& features);

/// Gradient with respect to the point features (one column per point).
Eigen::MatrixXd rbf_backprop(std::span<const RbfStencil> stencils, const Eigen::MatrixXd& d_out,
                             Eigen::Index point_count);

// ---------------------------------------------------------------------------
// Multi-resolution hash encoding
// ---------------------------------------------------------------------------

using HashPrimes = std::array<std::uint64_t, 3>;
inline constexpr HashPrimes kDefaultPrimes{1ULL, 2654435761ULL, 805459861ULL};

/// ((x0*p0) ^ (x1*p1) ^ (x2*p2)) mod table_size, wrap-around 64-bit arithmetic.
std::uint64_t hash_index(const std::array<std::uint64_t, 3>& x, std::uint64_t table_size,
                         const HashPrimes& primes = kDefaultPrimes);

struct HashConfig {
  int levels = 8;
  int log2_table_size = 14;
  int features_per_level = 2;
  HashPrimes primes = kDefaultPrimes;
  int base_resolution = 16;
  double growth = 1.5;
  /// Single nearest-corner lookup per level instead of trilinear blending.
  bool nearest_corner = false;
  double init_range = 1e-4;
};

/// Corner indices and interpolation weights touched by one encoded query.
struct HashStencil {
  static constexpr int kCorners = 8;
  std::vector<std::uint64_t> index;  // [query][level][corner]
  std::vector<double> weight;
  int levels = 0;
};

// Little-endian helpers shared by the binary blob formats.
void write_u64_le(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64_le(std::istream& in);
void write_f32_le(std::ostream& out, double v);
double read_f32_le(std::istream& in);

class HashEncoding {
 public:
  HashEncoding() = default;
  HashEncoding(const HashConfig& cfg, const Eigen::AlignedBox3d& bounds, std::uint64_t seed);

  const HashConfig& config() const { return cfg_; }
  int levels() const { return cfg_.levels; }
  int features_per_level() const { return cfg_.features_per_level; }
  int output_dim() const { return cfg_.levels * cfg_.features_per_level; }
  int resolution(int level) const;
  std::uint64_t table_size(int level) const { return table_sizes_.at(static_cast<std::size_t>(level)); }
  const Eigen::AlignedBox3d& bounds() const { return bounds_; }

  std::uint64_t index(const std::array<std::uint64_t, 3>& x, int level) const;

  /// Maps a world position into [0,1]^3; positions outside the box are clamped.
  Vec3 normalize(const Vec3& world) const;

  /// Flat parameter storage, level-major, then entry, then feature.
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t offset(int level, std::uint64_t entry) const;
  double& entry(int level, std::uint64_t idx, int f) { return params_[offset(level, idx) + f]; }
  double entry(int level, std::uint64_t idx, int f) const { return params_[offset(level, idx) + f]; }

  Eigen::VectorXd encode(const Vec3& query) const;

  /// Encodes a batch, one column per query; fills `stencil` for backprop.
  Eigen::MatrixXd encode(std::span<const Vec3> queries, HashStencil* stencil = nullptr) const;

  /// Accumulates the table gradient of d_out (output_dim x N) into grad.
  void backprop(const HashStencil& stencil, const Eigen::MatrixXd& d_out, std::span<double> grad) const;

  /// Binary blob: little-endian 64-bit header (L, T_l..., F, primes, base
  /// resolution, growth bits) followed by the tables as 32-bit floats.
  void write(std::ostream& out) const;
  static HashEncoding read(std::istream& in, const Eigen::AlignedBox3d& bounds);

 private:
  void stencil_for(const Vec3& unit, std::uint64_t* index, double* weight) const;

  HashConfig cfg_;
  Eigen::AlignedBox3d bounds_;
  std::vector<std::uint64_t> table_sizes_;
  std::vector<std::size_t> level_offsets_;
  std::vector<double> params_;
};

}  // namespace edgefield
