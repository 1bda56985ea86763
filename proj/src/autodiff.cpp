#include "edgefield/autodiff.hpp"

#include <cmath>

namespace edgefield {

namespace {

const char* op_name(Tape::Op op) {
  switch (op) {
    case Tape::Op::Parameter: return "parameter";
    case Tape::Op::Input: return "input";
    case Tape::Op::MatMul: return "matmul";
    case Tape::Op::Add: return "add";
    case Tape::Op::Sub: return "sub";
    case Tape::Op::AddCol: return "add_col";
    case Tape::Op::Mul: return "mul";
    case Tape::Op::Scale: return "scale";
    case Tape::Op::Relu: return "relu";
    case Tape::Op::Sigmoid: return "sigmoid";
    case Tape::Op::Softplus: return "softplus";
    case Tape::Op::Exp: return "exp";
    case Tape::Op::Square: return "square";
    case Tape::Op::Sum: return "sum";
    case Tape::Op::ConcatRows: return "concat_rows";
    case Tape::Op::GatherCols: return "gather_cols";
    case Tape::Op::ClampMax: return "clamp_max";
  }
  return "?";
}

std::string shape(const Eigen::MatrixXd& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void accumulate(Eigen::MatrixXd& slot, const Eigen::MatrixXd& g) {
  if (slot.size() == 0)
    slot = g;
  else
    slot += g;
}

}  // namespace

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw InvalidArgument("tape: node id " + std::to_string(id) + " out of range");
  return nodes_[static_cast<std::size_t>(id)];
}

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::require_same_shape(NodeId a, NodeId b, const char* what) const {
  const auto& va = value(a);
  const auto& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols())
    throw ShapeMismatch(std::string("tape node ") + std::to_string(nodes_.size()) + " (" + what +
                        "): operands " + shape(va) + " and " + shape(vb));
}

NodeId Tape::parameter(const std::string& name, const Eigen::MatrixXd& value) {
  if (params_.count(name)) throw InvalidArgument("tape: duplicate parameter '" + name + "'");
  const NodeId id = push({Op::Parameter, -1, -1, 0.0, {}, name, value});
  params_[name] = id;
  return id;
}

NodeId Tape::input(const Eigen::MatrixXd& value, const std::string& label) {
  return push({Op::Input, -1, -1, 0.0, {}, label, value});
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  if (value(a).cols() != value(b).rows())
    throw ShapeMismatch("tape node " + std::to_string(nodes_.size()) + " (matmul): operands " + shape(value(a)) +
                        " and " + shape(value(b)));
  return push({Op::MatMul, a, b, 0.0, {}, {}, value(a) * value(b)});
}

NodeId Tape::add(NodeId a, NodeId b) {
  require_same_shape(a, b, "add");
  return push({Op::Add, a, b, 0.0, {}, {}, value(a) + value(b)});
}

NodeId Tape::sub(NodeId a, NodeId b) {
  require_same_shape(a, b, "sub");
  return push({Op::Sub, a, b, 0.0, {}, {}, value(a) - value(b)});
}

NodeId Tape::add_col(NodeId a, NodeId b) {
  if (value(b).cols() != 1 || value(b).rows() != value(a).rows())
    throw ShapeMismatch("tape node " + std::to_string(nodes_.size()) + " (add_col): operands " + shape(value(a)) +
                        " and " + shape(value(b)));
  Eigen::MatrixXd out = value(a).colwise() + value(b).col(0);
  return push({Op::AddCol, a, b, 0.0, {}, {}, std::move(out)});
}

NodeId Tape::mul(NodeId a, NodeId b) {
  require_same_shape(a, b, "mul");
  return push({Op::Mul, a, b, 0.0, {}, {}, value(a).cwiseProduct(value(b))});
}

NodeId Tape::scale(NodeId a, double s) { return push({Op::Scale, a, -1, s, {}, {}, value(a) * s}); }

NodeId Tape::relu(NodeId a) { return push({Op::Relu, a, -1, 0.0, {}, {}, value(a).cwiseMax(0.0)}); }

NodeId Tape::sigmoid(NodeId a) {
  return push({Op::Sigmoid, a, -1, 0.0, {}, {}, value(a).unaryExpr([](double x) { return edgefield::sigmoid(x); })});
}

NodeId Tape::softplus(NodeId a) {
  return push({Op::Softplus, a, -1, 0.0, {}, {}, value(a).unaryExpr([](double x) { return edgefield::softplus(x); })});
}

NodeId Tape::exp(NodeId a) { return push({Op::Exp, a, -1, 0.0, {}, {}, value(a).array().exp().matrix()}); }

NodeId Tape::square(NodeId a) { return push({Op::Square, a, -1, 0.0, {}, {}, value(a).array().square().matrix()}); }

NodeId Tape::sum(NodeId a) {
  Eigen::MatrixXd out(1, 1);
  out(0, 0) = value(a).sum();
  return push({Op::Sum, a, -1, 0.0, {}, {}, std::move(out)});
}

NodeId Tape::concat_rows(NodeId a, NodeId b) {
  if (value(a).cols() != value(b).cols())
    throw ShapeMismatch("tape node " + std::to_string(nodes_.size()) + " (concat_rows): operands " +
                        shape(value(a)) + " and " + shape(value(b)));
  Eigen::MatrixXd out(value(a).rows() + value(b).rows(), value(a).cols());
  out << value(a), value(b);
  return push({Op::ConcatRows, a, b, 0.0, {}, {}, std::move(out)});
}

NodeId Tape::gather_cols(NodeId a, std::vector<int> cols) {
  const auto& va = value(a);
  Eigen::MatrixXd out(va.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= va.cols())
      throw ShapeMismatch("tape node " + std::to_string(nodes_.size()) + " (gather_cols): column " +
                          std::to_string(cols[j]) + " outside " + shape(va));
    out.col(static_cast<Eigen::Index>(j)) = va.col(cols[j]);
  }
  return push({Op::GatherCols, a, -1, 0.0, std::move(cols), {}, std::move(out)});
}

NodeId Tape::clamp_max(NodeId a, double limit) {
  return push({Op::ClampMax, a, -1, limit, {}, {}, value(a).cwiseMin(limit)});
}

std::vector<std::string> Tape::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& [name, id] : params_) out.push_back(name);
  return out;
}

Eigen::MatrixXd Tape::Gradients::of(const Tape& tape, NodeId id) const {
  const auto& g = node.at(static_cast<std::size_t>(id));
  if (g.size() != 0) return g;
  const auto& v = tape.value(id);
  return Eigen::MatrixXd::Zero(v.rows(), v.cols());
}

Tape::Gradients Tape::backward(NodeId scalar_output) const {
  const Seed seed{scalar_output, Eigen::MatrixXd::Ones(1, 1)};
  return backward(std::span<const Seed>(&seed, 1));
}

Tape::Gradients Tape::backward(std::span<const Seed> seeds) const {
  Gradients out;
  out.node.resize(nodes_.size());
  for (const Seed& s : seeds) {
    const auto& v = value(s.node);
    if (s.grad.rows() != v.rows() || s.grad.cols() != v.cols())
      throw ShapeMismatch("tape node " + std::to_string(s.node) + " (" + op_name(node(s.node).op) + "): seed " +
                          shape(s.grad) + " does not match output " + shape(v));
    accumulate(out.node[static_cast<std::size_t>(s.node)], s.grad);
  }

  for (std::size_t i = nodes_.size(); i-- > 0;) {
    const Eigen::MatrixXd& g = out.node[i];
    if (g.size() == 0) continue;
    const Node& n = nodes_[i];
    auto slot = [&](NodeId id) -> Eigen::MatrixXd& { return out.node[static_cast<std::size_t>(id)]; };
    switch (n.op) {
      case Op::Parameter:
      case Op::Input:
        break;
      case Op::MatMul:
        accumulate(slot(n.a), g * value(n.b).transpose());
        accumulate(slot(n.b), value(n.a).transpose() * g);
        break;
      case Op::Add:
        accumulate(slot(n.a), g);
        accumulate(slot(n.b), g);
        break;
      case Op::Sub:
        accumulate(slot(n.a), g);
        accumulate(slot(n.b), -g);
        break;
      case Op::AddCol:
        accumulate(slot(n.a), g);
        accumulate(slot(n.b), g.rowwise().sum());
        break;
      case Op::Mul:
        accumulate(slot(n.a), g.cwiseProduct(value(n.b)));
        accumulate(slot(n.b), g.cwiseProduct(value(n.a)));
        break;
      case Op::Scale:
        accumulate(slot(n.a), g * n.scalar);
        break;
      case Op::Relu:
        accumulate(slot(n.a), (value(n.a).array() > 0.0).select(g.array(), 0.0).matrix());
        break;
      case Op::Sigmoid:
        accumulate(slot(n.a), (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
        break;
      case Op::Softplus:
        accumulate(slot(n.a), g.cwiseProduct(value(n.a).unaryExpr([](double x) { return edgefield::sigmoid(x); })));
        break;
      case Op::Exp:
        accumulate(slot(n.a), g.cwiseProduct(n.value));
        break;
      case Op::Square:
        accumulate(slot(n.a), 2.0 * g.cwiseProduct(value(n.a)));
        break;
      case Op::Sum:
        accumulate(slot(n.a), Eigen::MatrixXd::Constant(value(n.a).rows(), value(n.a).cols(), g(0, 0)));
        break;
      case Op::ConcatRows: {
        const auto ra = value(n.a).rows();
        accumulate(slot(n.a), g.topRows(ra));
        accumulate(slot(n.b), g.bottomRows(g.rows() - ra));
        break;
      }
      case Op::GatherCols: {
        Eigen::MatrixXd scattered = Eigen::MatrixXd::Zero(value(n.a).rows(), value(n.a).cols());
        for (std::size_t j = 0; j < n.index.size(); ++j) scattered.col(n.index[j]) += g.col(static_cast<Eigen::Index>(j));
        accumulate(slot(n.a), scattered);
        break;
      }
      case Op::ClampMax:
        accumulate(slot(n.a), (value(n.a).array() < n.scalar).select(g.array(), 0.0).matrix());
        break;
    }
  }

  for (const auto& [name, id] : params_) out.parameter[name] = out.of(*this, id);
  return out;
}

std::vector<double> fd_gradient(const ScalarClosure& f, std::span<const double> x, double h) {
  std::vector<double> work(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = work[i];
    work[i] = orig + h;
    const double fp = f(work);
    work[i] = orig - h;
    const double fm = f(work);
    work[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error("fd_check: closure returned a non-finite value at coordinate " + std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double fd_check(const ScalarClosure& f, std::span<const double> x, std::span<const double> analytic, double h) {
  if (analytic.size() != x.size()) throw ShapeMismatch("fd_check: gradient length differs from parameter length");
  const double f0 = f(x);
  if (!std::isfinite(f0)) throw Error("fd_check: closure returned a non-finite value");
  const auto numeric = fd_gradient(f, x, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i])));
  return worst;
}

}  // namespace edgefield
