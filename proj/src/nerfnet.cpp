#include "edgefield/nerfnet.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "edgefield/rng.hpp"

namespace edgefield {

void NerfNet::build_layout() {
  if (dims_.input_dim < 1 || dims_.cond_dim < 0 || dims_.dir_dim < 0 || dims_.width < 1 || dims_.hidden_layers < 1)
    throw ShapeMismatch("nerf: invalid dimensions");
  names_.clear();
  params_.clear();
  const int w = dims_.width;
  auto add = [&](std::string name, int rows, int cols) {
    names_.push_back(std::move(name));
    params_.push_back(Eigen::MatrixXd::Zero(rows, cols));
  };
  add("layer0.weight", w, dims_.input_dim);
  add("layer0.bias", w, 1);
  for (int l = 1; l < dims_.hidden_layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    add(p + ".weight", w, w);
    add(p + ".bias", w, 1);
    add(p + ".gamma.weight", w, dims_.cond_dim);
    add(p + ".gamma.bias", w, 1);
    add(p + ".beta.weight", w, dims_.cond_dim);
    add(p + ".beta.bias", w, 1);
  }
  add("sigma.weight", 1, w);
  add("sigma.bias", 1, 1);
  add("color.weight", 3, w + dims_.dir_dim);
  add("color.bias", 3, 1);
}

NerfNet NerfNet::identity_film(const NerfDims& dims) {
  NerfNet net;
  net.dims_ = dims;
  net.build_layout();
  for (std::size_t i = 0; i < net.params_.size(); ++i)
    if (net.names_[i].ends_with(".gamma.bias")) net.params_[i].setOnes();
  return net;
}

NerfNet::NerfNet(const NerfDims& dims, std::uint64_t seed) : dims_(dims) {
  build_layout();
  Rng rng(seed);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Eigen::MatrixXd& m = params_[i];
    const std::string& n = names_[i];
    if (n.ends_with(".gamma.bias")) {
      m.setOnes();
    } else if (n.ends_with(".weight")) {
      const bool film = n.find(".gamma.") != std::string::npos || n.find(".beta.") != std::string::npos;
      const double fan_in = std::max<double>(1.0, static_cast<double>(m.cols()));
      const double bound = (film ? 0.1 : 1.0) * std::sqrt(6.0 / fan_in);
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
    }
  }
}

Eigen::MatrixXd& NerfNet::param(const std::string& name) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return params_[i];
  throw InvalidArgument("nerf: no parameter named '" + name + "'");
}

const Eigen::MatrixXd& NerfNet::param(const std::string& name) const {
  return const_cast<NerfNet*>(this)->param(name);
}

std::size_t NerfNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& m : params_) n += static_cast<std::size_t>(m.size());
  return n;
}

std::vector<double> NerfNet::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& m : params_) out.insert(out.end(), m.data(), m.data() + m.size());
  return out;
}

void NerfNet::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeMismatch("nerf: flat parameter length mismatch");
  std::size_t off = 0;
  for (auto& m : params_) {
    std::copy_n(flat.data() + off, m.size(), m.data());
    off += static_cast<std::size_t>(m.size());
  }
}

NerfNet::Batch NerfNet::forward(const Eigen::MatrixXd& f_hash, const Eigen::MatrixXd& cond,
                                const Eigen::MatrixXd& dirs) const {
  if (f_hash.rows() != dims_.input_dim || cond.rows() != dims_.cond_dim || dirs.rows() != dims_.dir_dim ||
      cond.cols() != f_hash.cols() || dirs.cols() != f_hash.cols())
    throw ShapeMismatch("nerf forward: input shapes do not match the network dimensions");
  Batch b;
  Tape& t = b.tape;
  std::vector<NodeId> p(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) p[i] = t.parameter(names_[i], params_[i]);
  b.hash_in = t.input(f_hash, "hash");
  b.cond_in = t.input(cond, "condition");
  b.dir_in = t.input(dirs, "direction");

  std::size_t k = 0;
  NodeId h = t.relu(t.add_col(t.matmul(p[k], b.hash_in), p[k + 1]));
  k += 2;
  for (int l = 1; l < dims_.hidden_layers; ++l) {
    const NodeId pre = t.add_col(t.matmul(p[k], h), p[k + 1]);
    const NodeId gamma = t.add_col(t.matmul(p[k + 2], b.cond_in), p[k + 3]);
    const NodeId beta = t.add_col(t.matmul(p[k + 4], b.cond_in), p[k + 5]);
    h = t.relu(t.add(t.mul(gamma, pre), beta));
    k += 6;
  }
  b.sigma = t.clamp_max(t.softplus(t.add_col(t.matmul(p[k], h), p[k + 1])), kSigmaClamp);
  k += 2;
  b.color = t.sigmoid(t.add_col(t.matmul(p[k], t.concat_rows(h, b.dir_in)), p[k + 1]));
  return b;
}

NerfNet::Grad NerfNet::backward(const Batch& batch, const Eigen::MatrixXd& d_sigma,
                                const Eigen::MatrixXd& d_color) const {
  const std::array<Tape::Seed, 2> seeds{Tape::Seed{batch.sigma, d_sigma}, Tape::Seed{batch.color, d_color}};
  const auto g = batch.tape.backward(seeds);
  Grad out;
  out.params.reserve(params_.size());
  for (const auto& n : names_) out.params.push_back(g.parameter.at(n));
  out.d_hash = g.of(batch.tape, batch.hash_in);
  out.d_cond = g.of(batch.tape, batch.cond_in);
  return out;
}

void NerfNet::write(std::ostream& out) const {
  write_u64_le(out, static_cast<std::uint64_t>(dims_.input_dim));
  write_u64_le(out, static_cast<std::uint64_t>(dims_.cond_dim));
  write_u64_le(out, static_cast<std::uint64_t>(dims_.dir_dim));
  write_u64_le(out, static_cast<std::uint64_t>(dims_.width));
  write_u64_le(out, static_cast<std::uint64_t>(dims_.hidden_layers));
  for (const auto& m : params_)
    for (Eigen::Index i = 0; i < m.size(); ++i) write_f32_le(out, m.data()[i]);
}

NerfNet NerfNet::read(std::istream& in) {
  NerfDims d;
  auto field = [&in]() {
    const std::uint64_t v = read_u64_le(in);
    if (v > (1u << 20)) throw Error("nerf checkpoint: implausible dimension");
    return static_cast<int>(v);
  };
  d.input_dim = field();
  d.cond_dim = field();
  d.dir_dim = field();
  d.width = field();
  d.hidden_layers = field();
  NerfNet net;
  net.dims_ = d;
  net.build_layout();
  for (auto& m : net.params_)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = read_f32_le(in);
  return net;
}

std::vector<double> window_segments(int samples, double total_length) {
  if (samples < 2) throw InvalidArgument("window_segments: need at least two samples");
  if (!(total_length > 0.0)) throw InvalidArgument("window_segments: non-positive segment length");
  const double spacing = total_length / (samples - 1);
  std::vector<double> out(static_cast<std::size_t>(samples), spacing);
  out.front() = out.back() = 0.5 * spacing;
  return out;
}

RayComposite composite_ray(std::span<const double> sigma, std::span<const Vec3> colors,
                           std::span<const double> segments) {
  if (sigma.size() != colors.size() || sigma.size() != segments.size())
    throw ShapeMismatch("composite_ray: per-sample arrays differ in length");
  RayComposite out;
  out.transmittance.resize(sigma.size());
  out.weights.resize(sigma.size());
  double trans = 1.0;
  for (std::size_t k = 0; k < sigma.size(); ++k) {
    if (!(segments[k] > 0.0)) throw InvalidArgument("composite_ray: non-positive segment length");
    const double a = 1.0 - std::exp(-sigma[k] * segments[k]);
    out.transmittance[k] = trans;
    out.weights[k] = trans * a;
    out.color += out.weights[k] * colors[k];
    out.density += out.weights[k] * sigma[k];
    trans *= 1.0 - a;
  }
  out.alpha = 1.0 - trans;
  return out;
}

CompositeGrad composite_backprop(std::span<const double> sigma, std::span<const Vec3> colors,
                                 std::span<const double> segments, const RayComposite& comp, const Vec3& d_color,
                                 double d_alpha, double d_density) {
  const std::size_t n = sigma.size();
  CompositeGrad g;
  g.d_sigma.assign(n, 0.0);
  g.d_color.assign(n, Vec3::Zero());
  // behind = sum over later samples of their value times the opacity that
  // remains after the current one, so dL/da_k = T_k (u_k - behind_k).
  double behind = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double ek = std::exp(-sigma[k] * segments[k]);
    const double a = 1.0 - ek;
    const double u = d_color.dot(colors[k]) + d_density * sigma[k] + d_alpha;
    const double d_a = comp.transmittance[k] * (u - behind);
    g.d_sigma[k] = d_a * segments[k] * ek + d_density * comp.weights[k];
    g.d_color[k] = comp.weights[k] * d_color;
    behind = u * a + (1.0 - a) * behind;
  }
  return g;
}

namespace {

Eigen::MatrixXd stack(std::span<const RaySample> samples, int rows, auto get) {
  Eigen::MatrixXd m(rows, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = get(samples[k]);
  return m;
}

}  // namespace

RayTrace render_ray(std::span<const RaySample> samples, const HashEncoding& enc, const NerfNet& net) {
  if (samples.empty()) throw InvalidArgument("render_ray: no samples");
  RayTrace tr;
  tr.samples.assign(samples.begin(), samples.end());
  std::vector<Vec3> pos(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    pos[k] = samples[k].position;
    tr.segments.push_back(samples[k].segment_length);
    if (!(samples[k].segment_length > 0.0)) throw InvalidArgument("render_ray: non-positive segment length");
  }
  const Eigen::MatrixXd f_hash = enc.encode(pos, &tr.stencil);
  const auto& d = net.dims();
  const Eigen::MatrixXd cond = stack(samples, d.cond_dim, [](const RaySample& s) -> Eigen::VectorXd { return s.condition; });
  const Eigen::MatrixXd dirs = stack(samples, d.dir_dim, [](const RaySample& s) -> Eigen::VectorXd { return s.direction; });
  tr.batch = net.forward(f_hash, cond, dirs);
  const auto& sig = tr.batch.tape.value(tr.batch.sigma);
  const auto& col = tr.batch.tape.value(tr.batch.color);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    tr.sigma.push_back(sig(0, static_cast<Eigen::Index>(k)));
    tr.color.push_back(col.col(static_cast<Eigen::Index>(k)));
  }
  tr.result = composite_ray(tr.sigma, tr.color, tr.segments);
  return tr;
}

NerfOutput forward(const RaySample& sample, const HashEncoding& enc, const NerfNet& net) {
  const auto f_hash = enc.encode(sample.position);
  Eigen::MatrixXd cond = sample.condition;
  Eigen::MatrixXd dir = sample.direction;
  const auto b = net.forward(f_hash, cond, dir);
  return {b.tape.value(b.sigma)(0, 0), b.tape.value(b.color).col(0)};
}

RayGradients backprop_ray(const RayTrace* trace, const HashEncoding& enc, const NerfNet& net, const Vec3& d_color,
                          double d_alpha, double d_density) {
  if (trace == nullptr || trace->batch.tape.size() == 0) throw MissingTape("backprop_ray: no forward trace");
  const auto cg = composite_backprop(trace->sigma, trace->color, trace->segments, trace->result, d_color, d_alpha,
                                     d_density);
  const auto n = static_cast<Eigen::Index>(trace->sigma.size());
  Eigen::MatrixXd ds(1, n);
  Eigen::MatrixXd dc(3, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    ds(0, k) = cg.d_sigma[static_cast<std::size_t>(k)];
    dc.col(k) = cg.d_color[static_cast<std::size_t>(k)];
  }
  auto g = net.backward(trace->batch, ds, dc);
  RayGradients out;
  out.net = std::move(g.params);
  out.table.assign(enc.parameters().size(), 0.0);
  enc.backprop(trace->stencil, g.d_hash, out.table);
  out.condition = std::move(g.d_cond);
  return out;
}

}  // namespace edgefield
