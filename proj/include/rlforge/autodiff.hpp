// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlforge::ad {

using Shape = std::vector<std::size_t>;

// Dense row-major double array.
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(Shape s, double fill = 0.0);
  Array(Shape s, std::vector<double> values);

  static Array scalar(double v) { return Array({1}, {v}); }
  static Array vector(std::vector<double> values);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t rows() const;  // product of all but the last dimension
  std::size_t cols() const;  // last dimension

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool operator==(const Array&) const = default;
};

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(std::size_t node, std::string op);
  std::size_t node() const noexcept { return node_; }
  const std::string& op() const noexcept { return op_; }

 private:
  std::size_t node_;
  std::string op_;
};

enum class Op {
  Leaf,
  Add,
  Mul,
  MatMul,
  Exp,
  Log,
  Softmax,
  Sum,
  Mean,
  Gather,
  Clip,
  StopGradient,
  Lookup,
};

const char* op_name(Op op) noexcept;

// Handle to a node inside one Graph.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

struct GradientReport {
  std::map<std::string, Array> gradients;
  double max_rel_error = 0.0;  // populated by check_gradient only
};

/// Define-by-run computation graph.
///
/// Every operation is evaluated as it is appended, so values are available
/// immediately. Leaves may be rebound by name and the whole graph recomputed
/// with forward(), which is what the finite-difference checker uses.
/// A Graph is not thread-safe; distinct Graphs share nothing.
class Graph {
 public:
  Graph() = default;

  Var parameter(const std::string& name, Array value);  // trainable leaf
  Var input(const std::string& name, Array value);      // rebindable, not trained
  Var constant(Array value);

  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  // a·b, or a·bᵀ when transpose_b is set. Both operands must be 2-D.
  Var matmul(Var a, Var b, bool transpose_b = false);
  Var exp(Var a);
  Var log(Var a);
  Var softmax(Var a);  // over the last axis
  Var sum(Var a);
  Var mean(Var a);
  // 2-D a: picks a[r, idx[r]] -> [rows]. 1-D a: picks a[idx[k]] -> [k].
  Var gather(Var a, std::vector<std::size_t> idx);
  Var clip(Var a, double lo, double hi);
  Var stop_gradient(Var a);
  // Row lookup: table [R, d], idx[k] -> [k, d].
  Var lookup(Var table, std::vector<std::size_t> idx);

  // Compositions of the primitives above.
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var sub(Var a, Var b) { return add(a, neg(b)); }
  Var log_softmax(Var a) { return log(softmax(a)); }
  Var softplus(Var a) { return log(add_scalar(exp(a), 1.0)); }

  const Array& value(Var v) const;
  double scalar(Var v) const;

  void bind(const std::string& name, Array value);
  void forward();

  // Reverse accumulation from a scalar output. Parameters not reachable from
  // the output receive zero gradients.
  GradientReport gradient(Var output);
  // Gradient of the last gradient() output with respect to any node.
  const Array& grad(Var v) const;

  const Array& leaf(const std::string& name) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  bool has_parameter(const std::string& name) const;
  std::vector<std::string> parameter_names() const;

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<std::size_t> in;
    std::vector<std::size_t> idx;
    double lo = 0.0, hi = 0.0;
    bool flag = false;  // transpose_b for MatMul
    bool trainable = false;
    std::string name;
    Array value;
  };

  Var push(Node n);
  void compute(std::size_t id);
  void backward_node(std::size_t id, std::vector<Array>& grads) const;
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> leaves_;
  std::vector<Array> grads_;
};

// Largest elementwise relative error between the reverse-mode gradient of
// `output` with respect to `parameter` and central differences.
double check_gradient(Graph& g, Var output, const std::string& parameter, double step);

}  // namespace rlforge::ad
