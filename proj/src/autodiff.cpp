// SPDX-FileCopyrightText: Copyright (c) 2026 The rlforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "rlforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rlforge::ad {

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

Array::Array(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {
  for (auto d : shape)
    if (d == 0) throw ShapeError("zero-sized dimension in " + shape_str(shape));
}

Array::Array(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape))
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
}

Array Array::vector(std::vector<double> values) {
  Shape s{values.size()};
  return Array(std::move(s), std::move(values));
}

std::size_t Array::rows() const { return shape.size() <= 1 ? 1 : size() / shape.back(); }
std::size_t Array::cols() const { return shape.empty() ? 1 : shape.back(); }

NonFiniteError::NonFiniteError(std::size_t node, std::string op)
    : std::runtime_error("non-finite value produced by node " + std::to_string(node) + " (" + op + ")"),
      node_(node),
      op_(std::move(op)) {}

const char* op_name(Op op) noexcept {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Mul: return "mul";
    case Op::MatMul: return "matmul";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Softmax: return "softmax";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Gather: return "gather";
    case Op::Clip: return "clip";
    case Op::StopGradient: return "stop_gradient";
    case Op::Lookup: return "lookup";
  }
  return "?";
}

namespace {

enum class Bcast { Same, Scalar, Row };

Bcast broadcast_kind(const Array& a, const Array& b) {
  if (a.shape == b.shape) return Bcast::Same;
  if (b.size() == 1) return Bcast::Scalar;
  if (b.rank() == 1 && b.shape[0] == a.cols()) return Bcast::Row;
  throw ShapeError("incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
}

void check_finite(const Array& a, std::size_t id, Op op) {
  for (double v : a.data)
    if (!std::isfinite(v)) throw NonFiniteError(id, op_name(op));
}

// c (+)= a · b or a · bᵀ, a is [m,k].
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_b) {
  if (!trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = a[i * k + p];
        if (aip == 0.0) continue;
        const double* bp = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      const double* ai = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double* bj = b + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
        c[i * n + j] += s;
      }
    }
  }
}

// c += aᵀ · b, a is [k,m], b is [k,n].
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = ap[i];
      if (aip == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

}  // namespace

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  const std::size_t id = nodes_.size() - 1;
  try {
    compute(id);
  } catch (...) {
    nodes_.pop_back();
    throw;
  }
  return Var{id};
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("invalid graph variable");
  return nodes_[v.id];
}

Var Graph::parameter(const std::string& name, Array value) {
  if (leaves_.count(name)) throw std::invalid_argument("duplicate leaf name: " + name);
  Node n;
  n.name = name;
  n.trainable = true;
  n.value = std::move(value);
  Var v = push(std::move(n));
  leaves_[name] = v.id;
  return v;
}

Var Graph::input(const std::string& name, Array value) {
  if (leaves_.count(name)) throw std::invalid_argument("duplicate leaf name: " + name);
  Node n;
  n.name = name;
  n.value = std::move(value);
  Var v = push(std::move(n));
  leaves_[name] = v.id;
  return v;
}

Var Graph::constant(Array value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  node(a);
  node(b);
  if (nodes_[a.id].value.size() < nodes_[b.id].value.size()) std::swap(a, b);
  Node n;
  n.op = Op::Add;
  n.in = {a.id, b.id};
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  node(a);
  node(b);
  if (nodes_[a.id].value.size() < nodes_[b.id].value.size()) std::swap(a, b);
  Node n;
  n.op = Op::Mul;
  n.in = {a.id, b.id};
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b, bool transpose_b) {
  node(a);
  node(b);
  Node n;
  n.op = Op::MatMul;
  n.in = {a.id, b.id};
  n.flag = transpose_b;
  return push(std::move(n));
}

#define RLFORGE_UNARY(fn, kind)  \
  Var Graph::fn(Var a) {         \
    node(a);                     \
    Node n;                      \
    n.op = kind;                 \
    n.in = {a.id};               \
    return push(std::move(n));   \
  }

RLFORGE_UNARY(exp, Op::Exp)
RLFORGE_UNARY(log, Op::Log)
RLFORGE_UNARY(softmax, Op::Softmax)
RLFORGE_UNARY(sum, Op::Sum)
RLFORGE_UNARY(mean, Op::Mean)
RLFORGE_UNARY(stop_gradient, Op::StopGradient)
#undef RLFORGE_UNARY

Var Graph::gather(Var a, std::vector<std::size_t> idx) {
  node(a);
  Node n;
  n.op = Op::Gather;
  n.in = {a.id};
  n.idx = std::move(idx);
  return push(std::move(n));
}

Var Graph::clip(Var a, double lo, double hi) {
  node(a);
  if (!(lo <= hi)) throw std::invalid_argument("clip bounds out of order");
  Node n;
  n.op = Op::Clip;
  n.in = {a.id};
  n.lo = lo;
  n.hi = hi;
  return push(std::move(n));
}

Var Graph::lookup(Var table, std::vector<std::size_t> idx) {
  node(table);
  Node n;
  n.op = Op::Lookup;
  n.in = {table.id};
  n.idx = std::move(idx);
  return push(std::move(n));
}

Var Graph::scale(Var a, double c) { return mul(a, constant(Array::scalar(c))); }
Var Graph::add_scalar(Var a, double c) { return add(a, constant(Array::scalar(c))); }

const Array& Graph::value(Var v) const { return node(v).value; }

double Graph::scalar(Var v) const {
  const Array& a = value(v);
  if (a.size() != 1) throw ShapeError("expected a scalar, got " + shape_str(a.shape));
  return a[0];
}

bool Graph::has_parameter(const std::string& name) const {
  auto it = leaves_.find(name);
  return it != leaves_.end() && nodes_[it->second].trainable;
}

std::vector<std::string> Graph::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& [name, id] : leaves_)
    if (nodes_[id].trainable) out.push_back(name);
  return out;
}

void Graph::bind(const std::string& name, Array value) {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw std::invalid_argument("unknown leaf: " + name);
  Node& n = nodes_[it->second];
  if (n.value.shape != value.shape)
    throw ShapeError("binding " + name + ": expected " + shape_str(n.value.shape) + ", got " +
                     shape_str(value.shape));
  n.value = std::move(value);
}

void Graph::forward() {
  for (std::size_t i = 0; i < nodes_.size(); ++i) compute(i);
}

void Graph::compute(std::size_t id) {
  Node& n = nodes_[id];
  auto in = [&](std::size_t k) -> const Array& { return nodes_[n.in[k]].value; };
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
    case Op::Mul: {
      const Array& a = in(0);
      const Array& b = in(1);
      const Bcast kind = broadcast_kind(a, b);
      Array out(a.shape);
      const std::size_t cols = a.cols();
      const bool is_add = n.op == Op::Add;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double bv = kind == Bcast::Same ? b[i] : kind == Bcast::Scalar ? b[0] : b[i % cols];
        out[i] = is_add ? a[i] + bv : a[i] * bv;
      }
      n.value = std::move(out);
      break;
    }
    case Op::MatMul: {
      const Array& a = in(0);
      const Array& b = in(1);
      if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects 2-D operands");
      const std::size_t m = a.shape[0], k = a.shape[1];
      const std::size_t bk = n.flag ? b.shape[1] : b.shape[0];
      const std::size_t nn = n.flag ? b.shape[0] : b.shape[1];
      if (bk != k)
        throw ShapeError("matmul inner dimension mismatch " + shape_str(a.shape) + " x " +
                         shape_str(b.shape) + (n.flag ? "^T" : ""));
      Array out({m, nn});
      gemm(a.data.data(), b.data.data(), out.data.data(), m, k, nn, n.flag);
      n.value = std::move(out);
      break;
    }
    case Op::Exp: {
      Array out = in(0);
      for (double& v : out.data) v = std::exp(v);
      n.value = std::move(out);
      break;
    }
    case Op::Log: {
      Array out = in(0);
      for (double& v : out.data) v = std::log(v);
      n.value = std::move(out);
      break;
    }
    case Op::Softmax: {
      Array out = in(0);
      const std::size_t cols = out.cols();
      for (std::size_t r = 0; r < out.rows(); ++r) {
        double* row = out.data.data() + r * cols;
        const double mx = *std::max_element(row, row + cols);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) z += (row[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < cols; ++j) row[j] /= z;
      }
      n.value = std::move(out);
      break;
    }
    case Op::Sum:
    case Op::Mean: {
      const Array& a = in(0);
      double s = 0.0;
      for (double v : a.data) s += v;
      if (n.op == Op::Mean) s /= static_cast<double>(a.size());
      n.value = Array::scalar(s);
      break;
    }
    case Op::Gather: {
      const Array& a = in(0);
      Array out({std::max<std::size_t>(n.idx.size(), 1)});
      if (n.idx.empty()) throw ShapeError("gather with no indices");
      if (a.rank() == 2) {
        if (n.idx.size() != a.shape[0])
          throw ShapeError("gather: " + std::to_string(n.idx.size()) + " indices for " +
                           shape_str(a.shape));
        for (std::size_t r = 0; r < n.idx.size(); ++r) {
          if (n.idx[r] >= a.shape[1]) throw ShapeError("gather index out of range");
          out[r] = a.at(r, n.idx[r]);
        }
      } else if (a.rank() == 1) {
        for (std::size_t k = 0; k < n.idx.size(); ++k) {
          if (n.idx[k] >= a.size()) throw ShapeError("gather index out of range");
          out[k] = a[n.idx[k]];
        }
      } else {
        throw ShapeError("gather expects a 1-D or 2-D operand");
      }
      n.value = std::move(out);
      break;
    }
    case Op::Clip: {
      Array out = in(0);
      for (double& v : out.data) v = std::clamp(v, n.lo, n.hi);
      n.value = std::move(out);
      break;
    }
    case Op::StopGradient:
      n.value = in(0);
      break;
    case Op::Lookup: {
      const Array& t = in(0);
      if (t.rank() != 2) throw ShapeError("lookup expects a 2-D table");
      if (n.idx.empty()) throw ShapeError("lookup with no indices");
      const std::size_t d = t.shape[1];
      Array out({n.idx.size(), d});
      for (std::size_t k = 0; k < n.idx.size(); ++k) {
        if (n.idx[k] >= t.shape[0])
          throw ShapeError("lookup index " + std::to_string(n.idx[k]) + " out of range for " +
                           shape_str(t.shape));
        std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(n.idx[k] * d), d,
                    out.data.begin() + static_cast<std::ptrdiff_t>(k * d));
      }
      n.value = std::move(out);
      break;
    }
  }
  check_finite(n.value, id, n.op);
}

void Graph::backward_node(std::size_t id, std::vector<Array>& grads) const {
  const Node& n = nodes_[id];
  const Array& g = grads[id];
  auto acc = [&](std::size_t k) -> Array& {
    Array& ga = grads[n.in[k]];
    if (ga.data.empty()) ga = Array(nodes_[n.in[k]].value.shape, 0.0);
    return ga;
  };
  auto in = [&](std::size_t k) -> const Array& { return nodes_[n.in[k]].value; };
  auto is_const = [&](std::size_t k) {
    const Node& src = nodes_[n.in[k]];
    return src.op == Op::Leaf && !src.trainable && src.name.empty();
  };

  switch (n.op) {
    case Op::Leaf:
    case Op::StopGradient:
      break;
    case Op::Add:
    case Op::Mul: {
      const Array& a = in(0);
      const Array& b = in(1);
      const Bcast kind = broadcast_kind(a, b);
      const std::size_t cols = a.cols();
      const bool is_add = n.op == Op::Add;
      Array& ga = acc(0);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double bv = kind == Bcast::Same ? b[i] : kind == Bcast::Scalar ? b[0] : b[i % cols];
        ga[i] += is_add ? g[i] : g[i] * bv;
      }
      if (!is_const(1)) {
        Array& gb = acc(1);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double gi = is_add ? g[i] : g[i] * a[i];
          const std::size_t j = kind == Bcast::Same ? i : kind == Bcast::Scalar ? 0 : i % cols;
          gb[j] += gi;
        }
      }
      break;
    }
    case Op::MatMul: {
      const Array& a = in(0);
      const Array& b = in(1);
      const std::size_t m = a.shape[0], k = a.shape[1];
      const std::size_t nn = n.flag ? b.shape[0] : b.shape[1];
      if (!is_const(0)) {
        // gA = g · Bᵀ (or g · B when B was transposed)
        gemm(g.data.data(), b.data.data(), acc(0).data.data(), m, nn, k, !n.flag);
      }
      if (!is_const(1)) {
        if (n.flag)  // gB = gᵀ · A  [nn, k]
          gemm_tn(g.data.data(), a.data.data(), acc(1).data.data(), m, nn, k);
        else  // gB = Aᵀ · g  [k, nn]
          gemm_tn(a.data.data(), g.data.data(), acc(1).data.data(), m, k, nn);
      }
      break;
    }
    case Op::Exp: {
      Array& ga = acc(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
      break;
    }
    case Op::Log: {
      Array& ga = acc(0);
      const Array& a = in(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
      break;
    }
    case Op::Softmax: {
      Array& ga = acc(0);
      const Array& y = n.value;
      const std::size_t cols = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const std::size_t off = r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += g[off + j] * y[off + j];
        for (std::size_t j = 0; j < cols; ++j) ga[off + j] += y[off + j] * (g[off + j] - dot);
      }
      break;
    }
    case Op::Sum:
    case Op::Mean: {
      Array& ga = acc(0);
      const double s = n.op == Op::Mean ? g[0] / static_cast<double>(ga.size()) : g[0];
      for (double& v : ga.data) v += s;
      break;
    }
    case Op::Gather: {
      Array& ga = acc(0);
      if (ga.rank() == 2) {
        for (std::size_t r = 0; r < n.idx.size(); ++r) ga.at(r, n.idx[r]) += g[r];
      } else {
        for (std::size_t k = 0; k < n.idx.size(); ++k) ga[n.idx[k]] += g[k];
      }
      break;
    }
    case Op::Clip: {
      Array& ga = acc(0);
      const Array& a = in(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] >= n.lo && a[i] <= n.hi) ga[i] += g[i];
      break;
    }
    case Op::Lookup: {
      if (is_const(0)) break;
      Array& ga = acc(0);
      const std::size_t d = ga.shape[1];
      for (std::size_t k = 0; k < n.idx.size(); ++k) {
        double* dst = ga.data.data() + n.idx[k] * d;
        const double* src = g.data.data() + k * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
      break;
    }
  }
}

GradientReport Graph::gradient(Var output) {
  const Array& out = node(output).value;
  if (out.size() != 1) throw ShapeError("gradient requires a scalar output, got " + shape_str(out.shape));

  grads_.assign(nodes_.size(), Array{});
  grads_[output.id] = Array::scalar(1.0);
  for (std::size_t i = output.id + 1; i-- > 0;) {
    if (grads_[i].data.empty()) continue;
    backward_node(i, grads_);
  }

  GradientReport report;
  for (const auto& [name, id] : leaves_) {
    if (!nodes_[id].trainable) continue;
    if (grads_[id].data.empty()) grads_[id] = Array(nodes_[id].value.shape, 0.0);
    report.gradients[name] = grads_[id];
  }
  return report;
}

const Array& Graph::grad(Var v) const {
  if (v.id >= grads_.size()) throw std::logic_error("gradient() has not been called for this node");
  static const Array empty;
  return grads_[v.id].data.empty() ? empty : grads_[v.id];
}

const Array& Graph::leaf(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw std::invalid_argument("unknown leaf: " + name);
  return nodes_[it->second].value;
}

double check_gradient(Graph& g, Var output, const std::string& parameter, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  if (!g.has_parameter(parameter)) throw std::invalid_argument("unknown parameter: " + parameter);

  g.forward();
  const Array analytic = g.gradient(output).gradients.at(parameter);
  const Array base = g.leaf(parameter);

  double worst = 0.0;
  Array probe = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    probe[i] = base[i] + step;
    g.bind(parameter, probe);
    g.forward();
    const double up = g.scalar(output);
    probe[i] = base[i] - step;
    g.bind(parameter, probe);
    g.forward();
    const double down = g.scalar(output);
    probe[i] = base[i];

    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  g.bind(parameter, base);
  g.forward();
  return worst;
}

}  // namespace rlforge::ad
