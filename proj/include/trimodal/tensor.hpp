#pragma once

// Static-graph reverse-mode autodiff over dense double tensors.
//
// A Graph owns an append-only arena of nodes. Building an op validates
// shapes immediately; evaluation binds named inputs to concrete tensors and
// runs the whole arena in construction order (which is topological by
// construction). The same graph can be evaluated repeatedly with different
// bindings, which keeps finite-difference checking cheap.
//
// Primitive set: matmul (with transpose flags), add, sub, mul, exp, log,
// tanh, sigmoid, softmax / logsumexp / layernorm over the last axis, concat,
// slice, sum, mean, square, scale-by-constant. add/sub/mul broadcast a
// scalar, a row vector ({C} or {1,C} against {R,C}) or a column ({R,1}).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "trimodal/errors.hpp"

namespace trimodal {

// ---------------------------------------------------------------------------
// Tensor: shape + flat row-major data.

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d, bool rg = false)
      : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {}

  static Tensor zeros(std::vector<int> s, bool rg = false) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<std::size_t>(numel_of(t.shape)), 0.0);
    t.requires_grad = rg;
    return t;
  }
  static Tensor scalar(double v, bool rg = false) { return Tensor({1}, {v}, rg); }
  static Tensor row(std::vector<double> v, bool rg = false) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v), rg);
  }
  static Tensor matrix(int r, int c, std::vector<double> v, bool rg = false) {
    Tensor t({r, c}, std::move(v), rg);
    if (static_cast<std::int64_t>(t.data.size()) != static_cast<std::int64_t>(r) * c)
      throw ShapeError("matrix: data size does not match " + std::to_string(r) + "x" +
                       std::to_string(c));
    return t;
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  std::int64_t numel() const { return numel_of(shape); }

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Named input bindings for one evaluation.
using Bindings = std::map<std::string, Tensor>;

// ---------------------------------------------------------------------------
// Graph.

class Graph;

struct Value {
  Graph* graph = nullptr;
  int id = -1;
};

namespace detail {

enum class Op : std::uint8_t {
  Input,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Exp,
  Log,
  Tanh,
  Sigmoid,
  Softmax,
  LogSumExp,
  LayerNorm,
  Concat,
  Slice,
  Sum,
  Mean,
  Square,
  Scale,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Softmax: return "softmax";
    case Op::LogSumExp: return "logsumexp";
    case Op::LayerNorm: return "layernorm";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Square: return "square";
    case Op::Scale: return "scale";
  }
  return "?";
}

// How operand b of a broadcasting op maps onto the output grid.
enum class Bcast : std::uint8_t { Full, Scalar, Row, Col };

struct Node {
  Op op;
  int a = -1, b = -1;
  std::vector<int> shape;
  // Attributes (meaning depends on op).
  bool trans_a = false, trans_b = false;
  int axis = 0, start = 0, len = 0;
  double scalar = 0.0;
  Bcast ba = Bcast::Full, bb = Bcast::Full;
  bool requires_grad = false;  // Input only
  std::string name;            // Input only
  std::string scope;           // debug label, included in eval-time errors
  Tensor value;                // Constant only
};

}  // namespace detail

class Graph {
 public:
  // -- construction ---------------------------------------------------------

  Value input(const std::string& name, std::vector<int> shape, bool requires_grad = false) {
    if (name.empty()) throw ContractError("input: empty name");
    if (inputs_.count(name)) throw ContractError("input: duplicate name '" + name + "'");
    check_shape_valid(shape, "input '" + name + "'");
    detail::Node n;
    n.op = detail::Op::Input;
    n.shape = std::move(shape);
    n.requires_grad = requires_grad;
    n.name = name;
    int id = push(std::move(n));
    inputs_[name] = id;
    return {this, id};
  }

  Value constant(Tensor t) {
    check_shape_valid(t.shape, "constant");
    if (static_cast<std::int64_t>(t.data.size()) != t.numel())
      throw ShapeError("constant: data size does not match shape " + shape_str(t.shape));
    detail::Node n;
    n.op = detail::Op::Constant;
    n.shape = t.shape;
    n.value = std::move(t);
    return {this, push(std::move(n))};
  }
  Value constant_scalar(double v) { return constant(Tensor::scalar(v)); }
  Value constant_row(std::vector<double> v) { return constant(Tensor::row(std::move(v))); }
  Value constant_zeros(std::vector<int> shape) { return constant(Tensor::zeros(std::move(shape))); }

  void mark_output(const std::string& name, Value v) {
    own(v, "mark_output");
    outputs_.emplace_back(name, v.id);
  }

  // Scope label incorporated into evaluation-time error messages.
  void set_scope(std::string s) { scope_ = std::move(s); }

  // -- ops ------------------------------------------------------------------

  Value matmul(Value a, Value b, bool trans_a = false, bool trans_b = false) {
    own(a, "matmul");
    own(b, "matmul");
    const auto& sa = node(a.id).shape;
    const auto& sb = node(b.id).shape;
    if (sa.size() != 2 || sb.size() != 2)
      throw ShapeError("matmul: operands must be rank 2, got " + shape_str(sa) + " and " +
                       shape_str(sb));
    int m = trans_a ? sa[1] : sa[0];
    int k = trans_a ? sa[0] : sa[1];
    int k2 = trans_b ? sb[1] : sb[0];
    int nn = trans_b ? sb[0] : sb[1];
    if (k != k2)
      throw ShapeError("matmul: inner dims disagree, " + shape_str(sa) + (trans_a ? "^T" : "") +
                       " x " + shape_str(sb) + (trans_b ? "^T" : ""));
    detail::Node n;
    n.op = detail::Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.trans_a = trans_a;
    n.trans_b = trans_b;
    n.shape = {m, nn};
    return {this, push(std::move(n))};
  }

  Value add(Value a, Value b) { return binary(detail::Op::Add, a, b); }
  Value sub(Value a, Value b) { return binary(detail::Op::Sub, a, b); }
  Value mul(Value a, Value b) { return binary(detail::Op::Mul, a, b); }

  Value exp(Value a) { return unary(detail::Op::Exp, a); }
  Value log(Value a) { return unary(detail::Op::Log, a); }
  Value tanh(Value a) { return unary(detail::Op::Tanh, a); }
  Value sigmoid(Value a) { return unary(detail::Op::Sigmoid, a); }
  Value square(Value a) { return unary(detail::Op::Square, a); }

  Value scale(Value a, double c) {
    own(a, "scale");
    detail::Node n;
    n.op = detail::Op::Scale;
    n.a = a.id;
    n.scalar = c;
    n.shape = node(a.id).shape;
    return {this, push(std::move(n))};
  }

  Value softmax_rows(Value a) { return rowwise(detail::Op::Softmax, a, /*reduces=*/false); }
  Value logsumexp_rows(Value a) { return rowwise(detail::Op::LogSumExp, a, /*reduces=*/true); }
  Value layernorm_rows(Value a, double eps = 1e-5) {
    Value v = rowwise(detail::Op::LayerNorm, a, /*reduces=*/false);
    node(v.id).scalar = eps;
    return v;
  }

  Value concat(Value a, Value b, int axis) {
    own(a, "concat");
    own(b, "concat");
    const auto& sa = node(a.id).shape;
    const auto& sb = node(b.id).shape;
    if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
    if (sa.size() != sb.size())
      throw ShapeError("concat: rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
    detail::Node n;
    n.op = detail::Op::Concat;
    n.a = a.id;
    n.b = b.id;
    n.axis = axis;
    if (sa.size() == 1) {
      if (axis != 0) throw ShapeError("concat: axis 1 on rank-1 operands");
      n.shape = {sa[0] + sb[0]};
    } else if (sa.size() == 2) {
      if (axis == 0) {
        if (sa[1] != sb[1])
          throw ShapeError("concat: column counts differ, " + shape_str(sa) + " vs " +
                           shape_str(sb));
        n.shape = {sa[0] + sb[0], sa[1]};
      } else {
        if (sa[0] != sb[0])
          throw ShapeError("concat: row counts differ, " + shape_str(sa) + " vs " + shape_str(sb));
        n.shape = {sa[0], sa[1] + sb[1]};
      }
    } else {
      throw ShapeError("concat: rank > 2 unsupported, got " + shape_str(sa));
    }
    return {this, push(std::move(n))};
  }

  Value slice(Value a, int axis, int start, int len) {
    own(a, "slice");
    const auto& sa = node(a.id).shape;
    if (axis < 0 || axis >= static_cast<int>(sa.size()))
      throw ContractError("slice: axis " + std::to_string(axis) + " out of range for " +
                          shape_str(sa));
    if (len <= 0 || start < 0 || start + len > sa[static_cast<std::size_t>(axis)])
      throw ShapeError("slice: range [" + std::to_string(start) + "," +
                       std::to_string(start + len) + ") outside " + shape_str(sa) + " axis " +
                       std::to_string(axis));
    detail::Node n;
    n.op = detail::Op::Slice;
    n.a = a.id;
    n.axis = axis;
    n.start = start;
    n.len = len;
    n.shape = sa;
    n.shape[static_cast<std::size_t>(axis)] = len;
    return {this, push(std::move(n))};
  }

  Value sum(Value a) { return reduce(detail::Op::Sum, a); }
  Value mean(Value a) { return reduce(detail::Op::Mean, a); }

  // -- evaluation -----------------------------------------------------------

  // Runs every node. Values stay readable until the next forward().
  void forward(const Bindings& b) {
    ensure_buffers();
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) eval_node(i, b);
  }

  const std::vector<double>& value(Value v) const {
    own(v, "value");
    return val_[static_cast<std::size_t>(v.id)];
  }
  const std::vector<int>& shape(Value v) const {
    own(v, "shape");
    return node(v.id).shape;
  }
  double scalar_value(Value v) const {
    const auto& d = value(v);
    if (d.size() != 1) throw ContractError("scalar_value: node is not a scalar");
    return d[0];
  }

  Tensor tensor_of(Value v) const {
    own(v, "tensor_of");
    return Tensor(node(v.id).shape, val_[static_cast<std::size_t>(v.id)]);
  }

  // Forward pass returning every marked output by name.
  std::map<std::string, Tensor> evaluate(const Bindings& b) {
    forward(b);
    std::map<std::string, Tensor> out;
    for (const auto& [name, id] : outputs_)
      out[name] = Tensor(nodes_[static_cast<std::size_t>(id)].shape,
                         val_[static_cast<std::size_t>(id)]);
    return out;
  }

  struct GradientResult {
    double value = 0.0;                    // the differentiated scalar
    std::map<std::string, Tensor> grads;   // one entry per requires_grad input
    std::map<std::string, Tensor> outputs; // marked outputs, from the same pass
  };

  // Forward + reverse pass. `out` must be a scalar node. Inputs that do not
  // reach `out` get exact zero gradients.
  GradientResult gradient(Value out, const Bindings& b) {
    forward(b);
    GradientResult r;
    r.value = backward_from(out, r.grads);
    for (const auto& [name, id] : outputs_)
      r.outputs[name] = Tensor(nodes_[static_cast<std::size_t>(id)].shape,
                               val_[static_cast<std::size_t>(id)]);
    return r;
  }

  // Reverse pass over the values of the latest forward().
  double backward(Value out, std::map<std::string, Tensor>& grads) {
    return backward_from(out, grads);
  }

  const std::map<std::string, int>& input_ids() const { return inputs_; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  friend struct GradCheckAccess;

  std::vector<detail::Node> nodes_;
  std::vector<std::vector<double>> val_, grad_;
  std::map<std::string, int> inputs_;
  std::vector<std::pair<std::string, int>> outputs_;
  std::string scope_;
  bool buffers_ready_ = false;

  detail::Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const detail::Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  void own(Value v, const char* who) const {
    if (v.graph != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
      throw ContractError(std::string(who) + ": value does not belong to this graph");
  }

  static void check_shape_valid(const std::vector<int>& s, const std::string& what) {
    if (s.empty() || s.size() > 2) throw ShapeError(what + ": rank must be 1 or 2");
    for (int d : s)
      if (d <= 0) throw ShapeError(what + ": non-positive dim in " + shape_str(s));
  }

  int push(detail::Node n) {
    n.scope = scope_;
    nodes_.push_back(std::move(n));
    buffers_ready_ = false;
    return static_cast<int>(nodes_.size()) - 1;
  }

  Value unary(detail::Op op, Value a) {
    own(a, detail::op_name(op));
    detail::Node n;
    n.op = op;
    n.a = a.id;
    n.shape = node(a.id).shape;
    return {this, push(std::move(n))};
  }

  // Resolves the broadcast role of each operand and the output shape.
  Value binary(detail::Op op, Value a, Value b) {
    own(a, detail::op_name(op));
    own(b, detail::op_name(op));
    const auto& sa = node(a.id).shape;
    const auto& sb = node(b.id).shape;
    detail::Node n;
    n.op = op;
    n.a = a.id;
    n.b = b.id;
    auto fail = [&]() -> ShapeError {
      return ShapeError(std::string(detail::op_name(op)) + ": incompatible shapes " +
                        shape_str(sa) + " and " + shape_str(sb));
    };
    if (sa == sb) {
      n.shape = sa;
    } else if (Tensor::numel_of(sb) == 1) {
      n.shape = sa;
      n.bb = detail::Bcast::Scalar;
    } else if (Tensor::numel_of(sa) == 1) {
      n.shape = sb;
      n.ba = detail::Bcast::Scalar;
    } else if (sa.size() == 2 && is_row_of(sb, sa)) {
      n.shape = sa;
      n.bb = detail::Bcast::Row;
    } else if (sb.size() == 2 && is_row_of(sa, sb)) {
      n.shape = sb;
      n.ba = detail::Bcast::Row;
    } else if (sa.size() == 2 && sb.size() == 2 && sb[0] == sa[0] && sb[1] == 1) {
      n.shape = sa;
      n.bb = detail::Bcast::Col;
    } else if (sa.size() == 2 && sb.size() == 2 && sa[0] == sb[0] && sa[1] == 1) {
      n.shape = sb;
      n.ba = detail::Bcast::Col;
    } else {
      throw fail();
    }
    return {this, push(std::move(n))};
  }

  static bool is_row_of(const std::vector<int>& cand, const std::vector<int>& full) {
    if (cand.size() == 1) return cand[0] == full[1];
    return cand.size() == 2 && cand[0] == 1 && cand[1] == full[1];
  }

  Value rowwise(detail::Op op, Value a, bool reduces) {
    own(a, detail::op_name(op));
    const auto& sa = node(a.id).shape;
    detail::Node n;
    n.op = op;
    n.a = a.id;
    if (reduces)
      n.shape = sa.size() == 1 ? std::vector<int>{1} : std::vector<int>{sa[0]};
    else
      n.shape = sa;
    return {this, push(std::move(n))};
  }

  Value reduce(detail::Op op, Value a) {
    own(a, detail::op_name(op));
    detail::Node n;
    n.op = op;
    n.a = a.id;
    n.shape = {1};
    return {this, push(std::move(n))};
  }

  void ensure_buffers() {
    if (buffers_ready_) return;
    val_.resize(nodes_.size());
    grad_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      std::size_t n = static_cast<std::size_t>(Tensor::numel_of(nodes_[i].shape));
      val_[i].resize(n);
      grad_[i].resize(n);
    }
    buffers_ready_ = true;
  }

  [[noreturn]] void eval_fail(const detail::Node& n, const std::string& msg) const {
    std::string where = n.scope.empty() ? std::string() : " in " + n.scope;
    throw NumericError(std::string(detail::op_name(n.op)) + where + ": " + msg);
  }
  [[noreturn]] void domain_fail(const detail::Node& n, const std::string& msg) const {
    std::string where = n.scope.empty() ? std::string() : " in " + n.scope;
    throw DomainError(std::string(detail::op_name(n.op)) + where + ": " + msg);
  }

  // Row/col geometry of a node treated as a 2-D grid.
  static void grid(const std::vector<int>& s, int& rows, int& cols) {
    if (s.size() == 1) {
      rows = 1;
      cols = s[0];
    } else {
      rows = s[0];
      cols = s[1];
    }
  }

  static double read_bcast(const std::vector<double>& d, detail::Bcast k, int r, int c, int cols) {
    switch (k) {
      case detail::Bcast::Full: return d[static_cast<std::size_t>(r) * cols + c];
      case detail::Bcast::Scalar: return d[0];
      case detail::Bcast::Row: return d[static_cast<std::size_t>(c)];
      case detail::Bcast::Col: return d[static_cast<std::size_t>(r)];
    }
    return 0.0;
  }

  static void acc_bcast(std::vector<double>& g, detail::Bcast k, int r, int c, int cols,
                        double v) {
    switch (k) {
      case detail::Bcast::Full: g[static_cast<std::size_t>(r) * cols + c] += v; break;
      case detail::Bcast::Scalar: g[0] += v; break;
      case detail::Bcast::Row: g[static_cast<std::size_t>(c)] += v; break;
      case detail::Bcast::Col: g[static_cast<std::size_t>(r)] += v; break;
    }
  }

  // C(m,n) += A(m,k) * B(k,n), with optional operand transposes.
  static void matmul_acc(std::vector<double>& C, const std::vector<double>& A, bool ta,
                         const std::vector<double>& B, bool tb, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
      double* crow = C.data() + static_cast<std::size_t>(i) * n;
      for (int p = 0; p < k; ++p) {
        double a = ta ? A[static_cast<std::size_t>(p) * m + i]
                      : A[static_cast<std::size_t>(i) * k + p];
        if (a == 0.0) continue;
        if (!tb) {
          const double* brow = B.data() + static_cast<std::size_t>(p) * n;
          for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
        } else {
          const double* bcol = B.data() + p;
          for (int j = 0; j < n; ++j) crow[j] += a * bcol[static_cast<std::size_t>(j) * k];
        }
      }
    }
  }

  void eval_node(int id, const Bindings& bnd) {
    detail::Node& n = node(id);
    std::vector<double>& out = val_[static_cast<std::size_t>(id)];
    switch (n.op) {
      case detail::Op::Input: {
        auto it = bnd.find(n.name);
        if (it == bnd.end()) throw ContractError("evaluate: input '" + n.name + "' not bound");
        if (it->second.shape != n.shape)
          throw ShapeError("evaluate: input '" + n.name + "' bound with shape " +
                           shape_str(it->second.shape) + ", declared " + shape_str(n.shape));
        out = it->second.data;
        break;
      }
      case detail::Op::Constant:
        out = n.value.data;
        break;
      case detail::Op::MatMul: {
        const auto& sa = node(n.a).shape;
        int m = n.shape[0], nn = n.shape[1];
        int k = n.trans_a ? sa[0] : sa[1];
        std::fill(out.begin(), out.end(), 0.0);
        matmul_acc(out, val_[static_cast<std::size_t>(n.a)], n.trans_a,
                   val_[static_cast<std::size_t>(n.b)], n.trans_b, m, k, nn);
        break;
      }
      case detail::Op::Add:
      case detail::Op::Sub:
      case detail::Op::Mul: {
        int rows, cols;
        grid(n.shape, rows, cols);
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        const auto& B = val_[static_cast<std::size_t>(n.b)];
        std::size_t idx = 0;
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c, ++idx) {
            double x = read_bcast(A, n.ba, r, c, cols);
            double y = read_bcast(B, n.bb, r, c, cols);
            out[idx] = n.op == detail::Op::Add ? x + y
                     : n.op == detail::Op::Sub ? x - y
                                               : x * y;
          }
        break;
      }
      case detail::Op::Exp: {
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < out.size(); ++i) {
          out[i] = std::exp(A[i]);
          if (!std::isfinite(out[i])) eval_fail(n, "non-finite result");
        }
        break;
      }
      case detail::Op::Log: {
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < out.size(); ++i) {
          if (!(A[i] > 0.0)) domain_fail(n, "input not strictly positive");
          out[i] = std::log(A[i]);
        }
        break;
      }
      case detail::Op::Tanh: {
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(A[i]);
        break;
      }
      case detail::Op::Sigmoid: {
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-A[i]));
        break;
      }
      case detail::Op::Softmax: {
        int rows, cols;
        grid(node(n.a).shape, rows, cols);
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        for (int r = 0; r < rows; ++r) {
          const double* x = A.data() + static_cast<std::size_t>(r) * cols;
          double* y = out.data() + static_cast<std::size_t>(r) * cols;
          double mx = x[0];
          for (int c = 0; c < cols; ++c) {
            if (!std::isfinite(x[c])) domain_fail(n, "non-finite input");
            mx = std::max(mx, x[c]);
          }
          double s = 0.0;
          for (int c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            s += y[c];
          }
          for (int c = 0; c < cols; ++c) y[c] /= s;
        }
        break;
      }
      case detail::Op::LogSumExp: {
        int rows, cols;
        grid(node(n.a).shape, rows, cols);
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        for (int r = 0; r < rows; ++r) {
          const double* x = A.data() + static_cast<std::size_t>(r) * cols;
          double mx = x[0];
          for (int c = 0; c < cols; ++c) {
            if (!std::isfinite(x[c])) domain_fail(n, "non-finite input");
            mx = std::max(mx, x[c]);
          }
          double s = 0.0;
          for (int c = 0; c < cols; ++c) s += std::exp(x[c] - mx);
          out[static_cast<std::size_t>(r)] = mx + std::log(s);
        }
        break;
      }
      case detail::Op::LayerNorm: {
        int rows, cols;
        grid(node(n.a).shape, rows, cols);
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        aux_resize(id, static_cast<std::size_t>(rows));
        for (int r = 0; r < rows; ++r) {
          const double* x = A.data() + static_cast<std::size_t>(r) * cols;
          double* y = out.data() + static_cast<std::size_t>(r) * cols;
          double mu = 0.0;
          for (int c = 0; c < cols; ++c) mu += x[c];
          mu /= cols;
          double var = 0.0;
          for (int c = 0; c < cols; ++c) var += (x[c] - mu) * (x[c] - mu);
          var /= cols;
          double inv = 1.0 / std::sqrt(var + n.scalar);
          aux_[static_cast<std::size_t>(id)][static_cast<std::size_t>(r)] = inv;
          for (int c = 0; c < cols; ++c) y[c] = (x[c] - mu) * inv;
        }
        break;
      }
      case detail::Op::Concat: {
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        const auto& B = val_[static_cast<std::size_t>(n.b)];
        if (n.shape.size() == 1 || n.axis == 0) {
          std::copy(A.begin(), A.end(), out.begin());
          std::copy(B.begin(), B.end(), out.begin() + static_cast<std::ptrdiff_t>(A.size()));
        } else {
          int rows = n.shape[0], ca = node(n.a).shape[1], cb = node(n.b).shape[1];
          for (int r = 0; r < rows; ++r) {
            std::copy(A.begin() + static_cast<std::ptrdiff_t>(r) * ca,
                      A.begin() + static_cast<std::ptrdiff_t>(r + 1) * ca,
                      out.begin() + static_cast<std::ptrdiff_t>(r) * (ca + cb));
            std::copy(B.begin() + static_cast<std::ptrdiff_t>(r) * cb,
                      B.begin() + static_cast<std::ptrdiff_t>(r + 1) * cb,
                      out.begin() + static_cast<std::ptrdiff_t>(r) * (ca + cb) + ca);
          }
        }
        break;
      }
      case detail::Op::Slice: {
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        const auto& sa = node(n.a).shape;
        if (sa.size() == 1) {
          std::copy(A.begin() + n.start, A.begin() + n.start + n.len, out.begin());
        } else if (n.axis == 0) {
          std::copy(A.begin() + static_cast<std::ptrdiff_t>(n.start) * sa[1],
                    A.begin() + static_cast<std::ptrdiff_t>(n.start + n.len) * sa[1],
                    out.begin());
        } else {
          for (int r = 0; r < sa[0]; ++r)
            std::copy(A.begin() + static_cast<std::ptrdiff_t>(r) * sa[1] + n.start,
                      A.begin() + static_cast<std::ptrdiff_t>(r) * sa[1] + n.start + n.len,
                      out.begin() + static_cast<std::ptrdiff_t>(r) * n.len);
        }
        break;
      }
      case detail::Op::Sum:
      case detail::Op::Mean: {
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        double s = 0.0;
        for (double v : A) s += v;
        out[0] = n.op == detail::Op::Mean ? s / static_cast<double>(A.size()) : s;
        break;
      }
      case detail::Op::Square: {
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] * A[i];
        break;
      }
      case detail::Op::Scale: {
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = n.scalar * A[i];
        break;
      }
    }
  }

  std::vector<std::vector<double>> aux_;
  void aux_resize(int id, std::size_t n) {
    if (aux_.size() < nodes_.size()) aux_.resize(nodes_.size());
    aux_[static_cast<std::size_t>(id)].resize(n);
  }

  double backward_from(Value out, std::map<std::string, Tensor>& grads) {
    own(out, "backward");
    if (Tensor::numel_of(node(out.id).shape) != 1)
      throw ContractError("backward: target must be a scalar, got " +
                          shape_str(node(out.id).shape));
    for (auto& g : grad_) std::fill(g.begin(), g.end(), 0.0);
    grad_[static_cast<std::size_t>(out.id)][0] = 1.0;
    for (int id = out.id; id >= 0; --id) backward_node(id);
    grads.clear();
    for (const auto& [name, id] : inputs_) {
      const detail::Node& n = node(id);
      if (!n.requires_grad) continue;
      grads[name] = Tensor(n.shape, grad_[static_cast<std::size_t>(id)]);
    }
    return val_[static_cast<std::size_t>(out.id)][0];
  }

  void backward_node(int id) {
    const detail::Node& n = node(id);
    const std::vector<double>& g = grad_[static_cast<std::size_t>(id)];
    bool all_zero = true;
    for (double v : g)
      if (v != 0.0) {
        all_zero = false;
        break;
      }
    if (all_zero) return;
    switch (n.op) {
      case detail::Op::Input:
      case detail::Op::Constant:
        break;
      case detail::Op::MatMul: {
        // C = A' B' with A' = op_a(A), B' = op_b(B).
        // dA' = G B'^T, dB' = A'^T G; transpose flags route the accumulation.
        const auto& sa = node(n.a).shape;
        int m = n.shape[0], nn = n.shape[1];
        int k = n.trans_a ? sa[0] : sa[1];
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        auto& gb = grad_[static_cast<std::size_t>(n.b)];
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        const auto& B = val_[static_cast<std::size_t>(n.b)];
        // dA' = G * B'^T  (m x k); if trans_a, dA = (dA')^T.
        if (!n.trans_a) {
          matmul_acc(ga, g, false, B, !n.trans_b, m, nn, k);
        } else {
          std::vector<double> tmp(static_cast<std::size_t>(m) * k, 0.0);
          matmul_acc(tmp, g, false, B, !n.trans_b, m, nn, k);
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < k; ++j)
              ga[static_cast<std::size_t>(j) * m + i] += tmp[static_cast<std::size_t>(i) * k + j];
        }
        // dB' = A'^T * G  (k x nn); if trans_b, dB = (dB')^T.
        if (!n.trans_b) {
          matmul_acc(gb, A, !n.trans_a, g, false, k, m, nn);
        } else {
          std::vector<double> tmp(static_cast<std::size_t>(k) * nn, 0.0);
          matmul_acc(tmp, A, !n.trans_a, g, false, k, m, nn);
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < nn; ++j)
              gb[static_cast<std::size_t>(j) * k + i] += tmp[static_cast<std::size_t>(i) * nn + j];
        }
        break;
      }
      case detail::Op::Add:
      case detail::Op::Sub:
      case detail::Op::Mul: {
        int rows, cols;
        grid(n.shape, rows, cols);
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        auto& gb = grad_[static_cast<std::size_t>(n.b)];
        const auto& A = val_[static_cast<std::size_t>(n.a)];
        const auto& B = val_[static_cast<std::size_t>(n.b)];
        std::size_t idx = 0;
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c, ++idx) {
            double gv = g[idx];
            if (gv == 0.0) continue;
            if (n.op == detail::Op::Add) {
              acc_bcast(ga, n.ba, r, c, cols, gv);
              acc_bcast(gb, n.bb, r, c, cols, gv);
            } else if (n.op == detail::Op::Sub) {
              acc_bcast(ga, n.ba, r, c, cols, gv);
              acc_bcast(gb, n.bb, r, c, cols, -gv);
            } else {
              acc_bcast(ga, n.ba, r, c, cols, gv * read_bcast(B, n.bb, r, c, cols));
              acc_bcast(gb, n.bb, r, c, cols, gv * read_bcast(A, n.ba, r, c, cols));
            }
          }
        break;
      }
      case detail::Op::Exp: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        const auto& y = val_[static_cast<std::size_t>(id)];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        break;
      }
      case detail::Op::Log: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        const auto& x = val_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
        break;
      }
      case detail::Op::Tanh: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        const auto& y = val_[static_cast<std::size_t>(id)];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case detail::Op::Sigmoid: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        const auto& y = val_[static_cast<std::size_t>(id)];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case detail::Op::Softmax: {
        int rows, cols;
        grid(n.shape, rows, cols);
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        const auto& y = val_[static_cast<std::size_t>(id)];
        for (int r = 0; r < rows; ++r) {
          const double* yr = y.data() + static_cast<std::size_t>(r) * cols;
          const double* gr = g.data() + static_cast<std::size_t>(r) * cols;
          double dot = 0.0;
          for (int c = 0; c < cols; ++c) dot += gr[c] * yr[c];
          double* gar = ga.data() + static_cast<std::size_t>(r) * cols;
          for (int c = 0; c < cols; ++c) gar[c] += yr[c] * (gr[c] - dot);
        }
        break;
      }
      case detail::Op::LogSumExp: {
        int rows, cols;
        grid(node(n.a).shape, rows, cols);
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        const auto& x = val_[static_cast<std::size_t>(n.a)];
        const auto& y = val_[static_cast<std::size_t>(id)];
        for (int r = 0; r < rows; ++r) {
          double gr = g[static_cast<std::size_t>(r)];
          if (gr == 0.0) continue;
          const double* xr = x.data() + static_cast<std::size_t>(r) * cols;
          double* gar = ga.data() + static_cast<std::size_t>(r) * cols;
          double lr = y[static_cast<std::size_t>(r)];
          for (int c = 0; c < cols; ++c) gar[c] += gr * std::exp(xr[c] - lr);
        }
        break;
      }
      case detail::Op::LayerNorm: {
        int rows, cols;
        grid(n.shape, rows, cols);
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        const auto& y = val_[static_cast<std::size_t>(id)];
        for (int r = 0; r < rows; ++r) {
          const double* yr = y.data() + static_cast<std::size_t>(r) * cols;
          const double* gr = g.data() + static_cast<std::size_t>(r) * cols;
          double inv = aux_[static_cast<std::size_t>(id)][static_cast<std::size_t>(r)];
          double mg = 0.0, mgy = 0.0;
          for (int c = 0; c < cols; ++c) {
            mg += gr[c];
            mgy += gr[c] * yr[c];
          }
          mg /= cols;
          mgy /= cols;
          double* gar = ga.data() + static_cast<std::size_t>(r) * cols;
          for (int c = 0; c < cols; ++c) gar[c] += inv * (gr[c] - mg - yr[c] * mgy);
        }
        break;
      }
      case detail::Op::Concat: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        auto& gb = grad_[static_cast<std::size_t>(n.b)];
        if (n.shape.size() == 1 || n.axis == 0) {
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[ga.size() + i];
        } else {
          int rows = n.shape[0], ca = node(n.a).shape[1], cb = node(n.b).shape[1];
          for (int r = 0; r < rows; ++r) {
            const double* gr = g.data() + static_cast<std::size_t>(r) * (ca + cb);
            double* gar = ga.data() + static_cast<std::size_t>(r) * ca;
            double* gbr = gb.data() + static_cast<std::size_t>(r) * cb;
            for (int c = 0; c < ca; ++c) gar[c] += gr[c];
            for (int c = 0; c < cb; ++c) gbr[c] += gr[ca + c];
          }
        }
        break;
      }
      case detail::Op::Slice: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        const auto& sa = node(n.a).shape;
        if (sa.size() == 1) {
          for (int i = 0; i < n.len; ++i) ga[static_cast<std::size_t>(n.start + i)] += g[static_cast<std::size_t>(i)];
        } else if (n.axis == 0) {
          for (std::size_t i = 0; i < g.size(); ++i)
            ga[static_cast<std::size_t>(n.start) * sa[1] + i] += g[i];
        } else {
          for (int r = 0; r < sa[0]; ++r)
            for (int c = 0; c < n.len; ++c)
              ga[static_cast<std::size_t>(r) * sa[1] + n.start + c] +=
                  g[static_cast<std::size_t>(r) * n.len + c];
        }
        break;
      }
      case detail::Op::Sum: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      }
      case detail::Op::Mean: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        double v = g[0] / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += v;
        break;
      }
      case detail::Op::Square: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        const auto& x = val_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
        break;
      }
      case detail::Op::Scale: {
        auto& ga = grad_[static_cast<std::size_t>(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
        break;
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Free-function op sugar.

inline Value matmul(Value a, Value b, bool ta = false, bool tb = false) {
  return a.graph->matmul(a, b, ta, tb);
}
inline Value operator+(Value a, Value b) { return a.graph->add(a, b); }
inline Value operator-(Value a, Value b) { return a.graph->sub(a, b); }
inline Value operator*(Value a, Value b) { return a.graph->mul(a, b); }
inline Value exp(Value a) { return a.graph->exp(a); }
inline Value log(Value a) { return a.graph->log(a); }
inline Value tanh(Value a) { return a.graph->tanh(a); }
inline Value sigmoid(Value a) { return a.graph->sigmoid(a); }
inline Value square(Value a) { return a.graph->square(a); }
inline Value scale(Value a, double c) { return a.graph->scale(a, c); }
inline Value softmax_rows(Value a) { return a.graph->softmax_rows(a); }
inline Value logsumexp_rows(Value a) { return a.graph->logsumexp_rows(a); }
inline Value layernorm_rows(Value a, double eps = 1e-5) { return a.graph->layernorm_rows(a, eps); }
inline Value concat(Value a, Value b, int axis) { return a.graph->concat(a, b, axis); }
inline Value slice(Value a, int axis, int start, int len) {
  return a.graph->slice(a, axis, start, len);
}
inline Value sum(Value a) { return a.graph->sum(a); }
inline Value mean(Value a) { return a.graph->mean(a); }

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.

struct GradCheckEntry {
  std::string name;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  double h = 0.0, tol = 0.0;
  std::vector<GradCheckEntry> entries;
  bool pass = true;

  void print(std::ostream& os) const {
    for (const auto& e : entries) {
      os << (e.pass ? "ok  " : "FAIL") << "  " << e.name << "  max_rel_err=" << e.max_rel_err
         << "\n";
    }
    os << (pass ? "gradcheck passed" : "gradcheck FAILED") << " (h=" << h << ", tol=" << tol
       << ")\n";
  }
};

// Central differences on every requires_grad input against the reverse pass.
// Each input's relative error is its worst absolute deviation divided by the
// largest gradient magnitude in that tensor (analytic or numeric, floored at
// 1e-8). Judging a near-zero entry against its own magnitude is meaningless
// here: the difference quotient carries roundoff of order eps*|f|/(2h), which
// exceeds any tiny entry at small h no matter how correct the adjoint is. A
// wrong rule still surfaces, since it perturbs entries at the tensor's scale.
inline GradCheckReport gradcheck(Graph& g, Value out, const Bindings& bindings, double h = 1e-6,
                                 double tol = 1e-5) {
  GradCheckReport rep;
  rep.h = h;
  rep.tol = tol;
  auto res = g.gradient(out, bindings);
  Bindings work = bindings;
  for (const auto& [name, id] : g.input_ids()) {
    auto git = res.grads.find(name);
    if (git == res.grads.end()) continue;  // not requires_grad
    auto wit = work.find(name);
    if (wit == work.end()) continue;
    GradCheckEntry entry;
    entry.name = name;
    std::vector<double>& d = wit->second.data;
    double scale = 1e-8;
    for (std::size_t i = 0; i < d.size(); ++i) {
      double keep = d[i];
      d[i] = keep + h;
      g.forward(work);
      double fp = g.value(out)[0];
      d[i] = keep - h;
      g.forward(work);
      double fm = g.value(out)[0];
      d[i] = keep;
      double num = (fp - fm) / (2.0 * h);
      double ana = git->second.data[i];
      entry.max_abs_err = std::max(entry.max_abs_err, std::abs(ana - num));
      scale = std::max({scale, std::abs(ana), std::abs(num)});
    }
    entry.max_rel_err = entry.max_abs_err / scale;
    entry.pass = entry.max_rel_err <= tol;
    if (!entry.pass) rep.pass = false;
    rep.entries.push_back(std::move(entry));
  }
  return rep;
}

}  // namespace trimodal
