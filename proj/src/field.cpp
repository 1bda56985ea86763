#include "edgefield/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>

#include "edgefield/parallel.hpp"
#include "edgefield/rng.hpp"

namespace edgefield {

std::vector<int> nearest_neighbors(const Vec3& query, std::span<const Vec3> points, int k) {
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), points.size());
  std::vector<std::pair<double, int>> dist(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) dist[j] = {(points[j] - query).squaredNorm(), static_cast<int>(j)};
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<int> out(take);
  for (std::size_t j = 0; j < take; ++j) out[j] = dist[j].second;
  return out;
}

RbfStencil rbf_stencil(const Vec3& query, std::span<const Vec3> points, const RbfConfig& cfg) {
  if (!query.allFinite()) throw InvalidArgument("rbf: non-finite query");
  if (points.empty()) throw InvalidArgument("rbf: empty boundary set");
  if (cfg.k_neighbors < 1 || !(cfg.kernel_width > 0.0)) throw InvalidArgument("rbf: invalid configuration");
  RbfStencil s;
  s.neighbors = nearest_neighbors(query, points, cfg.k_neighbors);
  s.weights.resize(s.neighbors.size());
  const double inv = 1.0 / (2.0 * cfg.kernel_width * cfg.kernel_width);
  double total = 0.0;
  for (std::size_t j = 0; j < s.neighbors.size(); ++j) {
    s.weights[j] = std::exp(-(points[static_cast<std::size_t>(s.neighbors[j])] - query).squaredNorm() * inv);
    total += s.weights[j];
  }
  if (total > 0.0) {
    for (double& w : s.weights) w /= total;
  } else {
    s.uniform_fallback = true;
    std::fill(s.weights.begin(), s.weights.end(), 1.0 / static_cast<double>(s.weights.size()));
  }
  return s;
}

Eigen::VectorXd rbf_interpolate(const Vec3& query, std::span<const Vec3> points, const Eigen::MatrixXd& features,
                                const RbfConfig& cfg) {
  if (features.cols() != static_cast<Eigen::Index>(points.size()))
    throw ShapeMismatch("rbf_interpolate: one feature column per point expected");
  const RbfStencil s = rbf_stencil(query, points, cfg);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(features.rows());
  for (std::size_t j = 0; j < s.neighbors.size(); ++j) out += s.weights[j] * features.col(s.neighbors[j]);
  return out;
}

std::vector<RbfStencil> rbf_stencils(std::span<const Vec3> queries, std::span<const Vec3> points,
                                     const RbfConfig& cfg) {
  std::vector<RbfStencil> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) { out[q] = rbf_stencil(queries[q], points, cfg); });
  return out;
}

Eigen::MatrixXd rbf_apply(std::span<const RbfStencil> stencils, const Eigen::MatrixXd& features) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(features.rows(), static_cast<Eigen::Index>(stencils.size()));
  for (std::size_t q = 0; q < stencils.size(); ++q) {
    const RbfStencil& s = stencils[q];
    for (std::size_t j = 0; j < s.neighbors.size(); ++j)
      out.col(static_cast<Eigen::Index>(q)) += s.weights[j] * features.col(s.neighbors[j]);
  }
  return out;
}

Eigen::MatrixXd rbf_backprop(std::span<const RbfStencil> stencils, const Eigen::MatrixXd& d_out,
                             Eigen::Index point_count) {
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(d_out.rows(), point_count);
  for (std::size_t q = 0; q < stencils.size(); ++q) {
    const RbfStencil& s = stencils[q];
    for (std::size_t j = 0; j < s.neighbors.size(); ++j)
      grad.col(s.neighbors[j]) += s.weights[j] * d_out.col(static_cast<Eigen::Index>(q));
  }
  return grad;
}

std::uint64_t hash_index(const std::array<std::uint64_t, 3>& x, std::uint64_t table_size, const HashPrimes& primes) {
  const std::uint64_t h = (x[0] * primes[0]) ^ (x[1] * primes[1]) ^ (x[2] * primes[2]);
  return h % table_size;
}

HashEncoding::HashEncoding(const HashConfig& cfg, const Eigen::AlignedBox3d& bounds, std::uint64_t seed)
    : cfg_(cfg), bounds_(bounds) {
  if (cfg.levels < 1 || cfg.features_per_level < 1 || cfg.base_resolution < 1 || !(cfg.growth > 0.0) ||
      cfg.log2_table_size < 1 || cfg.log2_table_size > 40)
    throw InvalidArgument("hash encoding: invalid configuration");
  if (bounds.isEmpty()) throw InvalidArgument("hash encoding: empty bounds");
  table_sizes_.assign(static_cast<std::size_t>(cfg.levels), std::uint64_t{1} << cfg.log2_table_size);
  level_offsets_.resize(static_cast<std::size_t>(cfg.levels) + 1, 0);
  for (int l = 0; l < cfg.levels; ++l)
    level_offsets_[static_cast<std::size_t>(l) + 1] =
        level_offsets_[static_cast<std::size_t>(l)] + table_sizes_[static_cast<std::size_t>(l)] * cfg.features_per_level;
  params_.resize(level_offsets_.back());
  Rng rng(seed);
  for (double& p : params_) p = rng.uniform(-cfg.init_range, cfg.init_range);
}

int HashEncoding::resolution(int level) const {
  return static_cast<int>(std::lround(cfg_.base_resolution * std::pow(cfg_.growth, level)));
}

std::uint64_t HashEncoding::index(const std::array<std::uint64_t, 3>& x, int level) const {
  if (level < 0 || level >= cfg_.levels) throw InvalidArgument("hash index: level out of range");
  return hash_index(x, table_size(level), cfg_.primes);
}

std::size_t HashEncoding::offset(int level, std::uint64_t entry) const {
  return level_offsets_[static_cast<std::size_t>(level)] + static_cast<std::size_t>(entry) * cfg_.features_per_level;
}

Vec3 HashEncoding::normalize(const Vec3& world) const {
  const Vec3 extent = bounds_.sizes();
  Vec3 u;
  for (int a = 0; a < 3; ++a) u[a] = std::clamp((world[a] - bounds_.min()[a]) / extent[a], 0.0, 1.0);
  return u;
}

void HashEncoding::stencil_for(const Vec3& unit, std::uint64_t* index, double* weight) const {
  for (int l = 0; l < cfg_.levels; ++l) {
    const int res = resolution(l);
    std::array<std::uint64_t, 3> base{};
    Vec3 frac;
    for (int a = 0; a < 3; ++a) {
      const double pos = unit[a] * res;
      const double cell = std::min(std::floor(pos), static_cast<double>(res - 1));
      base[static_cast<std::size_t>(a)] = static_cast<std::uint64_t>(cell);
      frac[a] = pos - cell;
    }
    std::uint64_t* idx = index + static_cast<std::ptrdiff_t>(l) * HashStencil::kCorners;
    double* wt = weight + static_cast<std::ptrdiff_t>(l) * HashStencil::kCorners;
    for (int c = 0; c < HashStencil::kCorners; ++c) {
      std::array<std::uint64_t, 3> corner = base;
      double w = 1.0;
      for (int a = 0; a < 3; ++a) {
        const bool upper = (c >> a) & 1;
        corner[static_cast<std::size_t>(a)] += upper ? 1 : 0;
        w *= upper ? frac[a] : 1.0 - frac[a];
      }
      idx[c] = hash_index(corner, table_size(l), cfg_.primes);
      wt[c] = w;
    }
    if (cfg_.nearest_corner) {
      int best = 0;
      for (int a = 0; a < 3; ++a) best |= (frac[a] >= 0.5 ? 1 : 0) << a;
      for (int c = 0; c < HashStencil::kCorners; ++c) wt[c] = c == best ? 1.0 : 0.0;
    }
  }
}

Eigen::VectorXd HashEncoding::encode(const Vec3& query) const {
  return encode(std::span<const Vec3>(&query, 1)).col(0);
}

Eigen::MatrixXd HashEncoding::encode(std::span<const Vec3> queries, HashStencil* stencil) const {
  const int per_query = cfg_.levels * HashStencil::kCorners;
  const int f_dim = cfg_.features_per_level;
  HashStencil local;
  HashStencil& st = stencil ? *stencil : local;
  st.levels = cfg_.levels;
  st.index.resize(queries.size() * static_cast<std::size_t>(per_query));
  st.weight.resize(queries.size() * static_cast<std::size_t>(per_query));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(output_dim(), static_cast<Eigen::Index>(queries.size()));
  parallel_for(queries.size(), [&](std::size_t q) {
    std::uint64_t* idx = st.index.data() + q * static_cast<std::size_t>(per_query);
    double* wt = st.weight.data() + q * static_cast<std::size_t>(per_query);
    stencil_for(normalize(queries[q]), idx, wt);
    for (int l = 0; l < cfg_.levels; ++l) {
      for (int c = 0; c < HashStencil::kCorners; ++c) {
        const double w = wt[l * HashStencil::kCorners + c];
        if (w == 0.0) continue;
        const std::size_t off = offset(l, idx[l * HashStencil::kCorners + c]);
        for (int f = 0; f < f_dim; ++f) out(l * f_dim + f, static_cast<Eigen::Index>(q)) += w * params_[off + f];
      }
    }
  });
  return out;
}

void HashEncoding::backprop(const HashStencil& stencil, const Eigen::MatrixXd& d_out, std::span<double> grad) const {
  if (grad.size() != params_.size()) throw ShapeMismatch("hash backprop: gradient buffer size mismatch");
  if (d_out.rows() != output_dim()) throw ShapeMismatch("hash backprop: upstream gradient has wrong height");
  const int per_query = cfg_.levels * HashStencil::kCorners;
  const int f_dim = cfg_.features_per_level;
  for (Eigen::Index q = 0; q < d_out.cols(); ++q) {
    const std::uint64_t* idx = stencil.index.data() + q * per_query;
    const double* wt = stencil.weight.data() + q * per_query;
    for (int l = 0; l < cfg_.levels; ++l) {
      for (int c = 0; c < HashStencil::kCorners; ++c) {
        const double w = wt[l * HashStencil::kCorners + c];
        if (w == 0.0) continue;
        const std::size_t off = offset(l, idx[l * HashStencil::kCorners + c]);
        for (int f = 0; f < f_dim; ++f) grad[off + f] += w * d_out(l * f_dim + f, q);
      }
    }
  }
}

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("hash blob: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void write_f32_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

double read_f32_le(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("binary blob: truncated payload");
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return static_cast<double>(std::bit_cast<float>(bits));
}

void write_u64_le(std::ostream& out, std::uint64_t v) { put_u64(out, v); }
std::uint64_t read_u64_le(std::istream& in) { return get_u64(in); }

void HashEncoding::write(std::ostream& out) const {
  put_u64(out, static_cast<std::uint64_t>(cfg_.levels));
  for (std::uint64_t t : table_sizes_) put_u64(out, t);
  put_u64(out, static_cast<std::uint64_t>(cfg_.features_per_level));
  for (std::uint64_t p : cfg_.primes) put_u64(out, p);
  put_u64(out, static_cast<std::uint64_t>(cfg_.base_resolution));
  put_u64(out, std::bit_cast<std::uint64_t>(cfg_.growth));
  for (double p : params_) write_f32_le(out, p);
}

HashEncoding HashEncoding::read(std::istream& in, const Eigen::AlignedBox3d& bounds) {
  HashEncoding enc;
  enc.bounds_ = bounds;
  const std::uint64_t levels = get_u64(in);
  if (levels < 1 || levels > 64) throw Error("hash blob: implausible level count");
  enc.cfg_.levels = static_cast<int>(levels);
  enc.table_sizes_.resize(levels);
  for (auto& t : enc.table_sizes_) {
    t = get_u64(in);
    if (t == 0 || (t & (t - 1)) != 0) throw Error("hash blob: table sizes must be powers of two");
  }
  enc.cfg_.log2_table_size = std::countr_zero(enc.table_sizes_.front());
  enc.cfg_.features_per_level = static_cast<int>(get_u64(in));
  for (auto& p : enc.cfg_.primes) p = get_u64(in);
  enc.cfg_.base_resolution = static_cast<int>(get_u64(in));
  enc.cfg_.growth = std::bit_cast<double>(get_u64(in));
  enc.level_offsets_.assign(levels + 1, 0);
  for (std::size_t l = 0; l < levels; ++l)
    enc.level_offsets_[l + 1] = enc.level_offsets_[l] + enc.table_sizes_[l] * enc.cfg_.features_per_level;
  enc.params_.resize(enc.level_offsets_.back());
  for (double& p : enc.params_) p = read_f32_le(in);
  return enc;
}

}  // namespace edgefield
