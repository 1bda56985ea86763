#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "edgefield/common.hpp"

namespace edgefield {

using NodeId = int;

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, so the node list is always a topological order.
class Tape {
 public:
  enum class Op {
    Parameter,
    Input,
    MatMul,
    Add,
    Sub,
    AddCol,
    Mul,
    Scale,
    Relu,
    Sigmoid,
    Softplus,
    Exp,
    Square,
    Sum,
    ConcatRows,
    GatherCols,
    ClampMax,
  };

  struct Node {
    Op op;
    NodeId a = -1;
    NodeId b = -1;
    double scalar = 0.0;
    std::vector<int> index;
    std::string name;
    Eigen::MatrixXd value;
  };

  struct Seed {
    NodeId node;
    Eigen::MatrixXd grad;
  };

  struct Gradients {
    /// One entry per node; empty matrices mean "no gradient reached this node".
    std::vector<Eigen::MatrixXd> node;
    std::map<std::string, Eigen::MatrixXd> parameter;

    /// Gradient of node `id`, zero-filled to its shape when nothing reached it.
    Eigen::MatrixXd of(const Tape& tape, NodeId id) const;
  };

  /// Named trainable leaf. Names must be unique within a tape.
  NodeId parameter(const std::string& name, const Eigen::MatrixXd& value);
  /// Leaf whose gradient is reported per node only.
  NodeId input(const Eigen::MatrixXd& value, const std::string& label = "input");

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  /// a (r x n) plus column vector b (r x 1) broadcast over columns.
  NodeId add_col(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softplus(NodeId a);
  NodeId exp(NodeId a);
  NodeId square(NodeId a);
  /// 1 x 1 sum of all entries.
  NodeId sum(NodeId a);
  NodeId concat_rows(NodeId a, NodeId b);
  /// Columns of a selected by `cols`; the backward pass scatter-adds.
  NodeId gather_cols(NodeId a, std::vector<int> cols);
  NodeId clamp_max(NodeId a, double limit);

  const Eigen::MatrixXd& value(NodeId id) const { return node(id).value; }
  const Node& node(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> parameter_names() const;

  /// Seeds are accumulated into the listed nodes and propagated to the leaves.
  /// The tape itself is not modified, so repeated calls agree exactly.
  Gradients backward(std::span<const Seed> seeds) const;
  /// Convenience for a scalar (1 x 1) output with seed 1.
  Gradients backward(NodeId scalar_output) const;

 private:
  NodeId push(Node n);
  void require_same_shape(NodeId a, NodeId b, const char* what) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> params_;
};

using ScalarClosure = std::function<double(std::span<const double>)>;

/// Central-difference gradient of f at x.
std::vector<double> fd_gradient(const ScalarClosure& f, std::span<const double> x, double h = 1e-5);

/// Largest |g_ad - g_fd| / max(1, |g_fd|) over all coordinates. Throws when f
/// returns a non-finite value.
double fd_check(const ScalarClosure& f, std::span<const double> x, std::span<const double> analytic, double h = 1e-5);

}  // namespace edgefield
