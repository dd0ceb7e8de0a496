#include "cgt/grad/tape.hpp"

#include <algorithm>
#include <cmath>

#include "cgt/errors.hpp"

namespace cgt::grad {

namespace {

std::string op_label(Primitive op) { return std::string(primitive_name(op)); }

[[noreturn]] void shape_error(Primitive op, const std::string& detail) {
  throw ShapeError(op_label(op) + ": " + detail);
}

void require_same(Primitive op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    shape_error(op, "operand shapes differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_rank(Primitive op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    shape_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_string(a.shape()));
  }
}

void require_arity(Primitive op, std::size_t got, std::size_t want) {
  if (got != want) {
    shape_error(op, "expected " + std::to_string(want) + " inputs, got " + std::to_string(got));
  }
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  const auto in = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = f(in[i]);
  return out;
}

// out[m x n] (+)= a[m x k] * b[k x n]
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void accumulate(Tensor& target, const Tensor& delta) {
  auto t = target.data();
  const auto d = delta.data();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += d[i];
}

}  // namespace

std::string_view primitive_name(Primitive p) noexcept {
  switch (p) {
    case Primitive::leaf: return "leaf";
    case Primitive::constant: return "constant";
    case Primitive::add: return "add";
    case Primitive::sub: return "sub";
    case Primitive::mul: return "mul";
    case Primitive::div: return "div";
    case Primitive::matmul: return "matmul";
    case Primitive::scale: return "scale";
    case Primitive::add_scalar: return "add_scalar";
    case Primitive::leaky_relu: return "leaky_relu";
    case Primitive::relu: return "relu";
    case Primitive::tanh: return "tanh";
    case Primitive::square: return "square";
    case Primitive::abs: return "abs";
    case Primitive::sqrt: return "sqrt";
    case Primitive::sum: return "sum";
    case Primitive::mean_rows: return "mean_rows";
    case Primitive::var_rows: return "var_rows";
    case Primitive::broadcast_rows: return "broadcast_rows";
    case Primitive::gather_rows: return "gather_rows";
    case Primitive::concat_rows: return "concat_rows";
    case Primitive::row_sum: return "row_sum";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->nodes_.at(id_).value; }

const Tensor& Gradients::of(const Parameter& p) const {
  auto it = grads_.find(&p);
  if (it == grads_.end()) throw IndexError("no gradient recorded for parameter '" + p.name + "'");
  return it->second;
}

Var Tape::param(Parameter& p) {
  if (auto it = leaves_.find(&p); it != leaves_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' holds non-finite values");
  TapeNode node;
  node.op = Primitive::leaf;
  node.value = p.value;
  node.param = &p;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  const NodeId id = nodes_.size() - 1;
  leaves_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("constant holds non-finite values");
  TapeNode node;
  node.op = Primitive::constant;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::apply(Primitive op, std::span<const Var> inputs, double scalar, std::vector<std::size_t> indices) {
  for (const Var& v : inputs) {
    if (&v.tape() != this) shape_error(op, "input recorded on a different tape");
  }
  TapeNode node;
  node.op = op;
  node.value = forward(op, inputs, scalar, indices);
  if (!node.value.all_finite()) throw NumericError(op_label(op) + ": produced non-finite values");
  node.scalar = scalar;
  if (recording_) {
    for (const Var& v : inputs) node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
    if (node.requires_grad) {
      node.parents.reserve(inputs.size());
      for (const Var& v : inputs) node.parents.push_back(v.id());
      node.indices = std::move(indices);
    }
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::forward(Primitive op, std::span<const Var> inputs, double scalar,
                     const std::vector<std::size_t>& indices) const {
  auto in = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i].id()].value; };
  switch (op) {
    case Primitive::leaf:
    case Primitive::constant:
      shape_error(op, "not an applicable primitive");
    case Primitive::add:
    case Primitive::sub:
    case Primitive::mul:
    case Primitive::div: {
      require_arity(op, inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require_same(op, a, b);
      Tensor out(a.shape());
      const auto x = a.data();
      const auto y = b.data();
      auto o = out.data();
      if (op == Primitive::add) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
      } else if (op == Primitive::sub) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
      } else if (op == Primitive::mul) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
      } else {
        for (std::size_t i = 0; i < o.size(); ++i) {
          if (y[i] == 0.0) throw DomainError("div: division by zero");
          o[i] = x[i] / y[i];
        }
      }
      return out;
    }
    case Primitive::matmul: {
      require_arity(op, inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require_rank(op, a, 2);
      require_rank(op, b, 2);
      if (a.cols() != b.rows()) {
        shape_error(op, "inner dimensions differ: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
      }
      Tensor out(Shape{a.rows(), b.cols()});
      matmul_into(a, b, out);
      return out;
    }
    case Primitive::scale:
      require_arity(op, inputs.size(), 1);
      return map_unary(in(0), [scalar](double v) { return v * scalar; });
    case Primitive::add_scalar:
      require_arity(op, inputs.size(), 1);
      return map_unary(in(0), [scalar](double v) { return v + scalar; });
    case Primitive::leaky_relu:
      require_arity(op, inputs.size(), 1);
      return map_unary(in(0), [scalar](double v) { return v > 0.0 ? v : scalar * v; });
    case Primitive::relu:
      require_arity(op, inputs.size(), 1);
      return map_unary(in(0), [](double v) { return v > 0.0 ? v : 0.0; });
    case Primitive::tanh:
      require_arity(op, inputs.size(), 1);
      return map_unary(in(0), [](double v) { return std::tanh(v); });
    case Primitive::square:
      require_arity(op, inputs.size(), 1);
      return map_unary(in(0), [](double v) { return v * v; });
    case Primitive::abs:
      require_arity(op, inputs.size(), 1);
      return map_unary(in(0), [](double v) { return std::fabs(v); });
    case Primitive::sqrt:
      require_arity(op, inputs.size(), 1);
      return map_unary(in(0), [](double v) {
        if (v < 0.0) throw DomainError("sqrt: negative input " + std::to_string(v));
        return std::sqrt(v);
      });
    case Primitive::sum: {
      require_arity(op, inputs.size(), 1);
      double acc = 0.0;
      for (double v : in(0).data()) acc += v;
      return Tensor::scalar(acc);
    }
    case Primitive::mean_rows:
    case Primitive::var_rows: {
      require_arity(op, inputs.size(), 1);
      const Tensor& a = in(0);
      require_rank(op, a, 2);
      const std::size_t b = a.rows(), c = a.cols();
      if (b == 0) shape_error(op, "empty batch");
      Tensor mean(Shape{c});
      for (std::size_t i = 0; i < b; ++i) {
        const auto r = a.row(i);
        for (std::size_t j = 0; j < c; ++j) mean[j] += r[j];
      }
      for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(b);
      if (op == Primitive::mean_rows) return mean;
      Tensor var(Shape{c});
      for (std::size_t i = 0; i < b; ++i) {
        const auto r = a.row(i);
        for (std::size_t j = 0; j < c; ++j) {
          const double d = r[j] - mean[j];
          var[j] += d * d;
        }
      }
      for (std::size_t j = 0; j < c; ++j) var[j] /= static_cast<double>(b);
      return var;
    }
    case Primitive::broadcast_rows: {
      require_arity(op, inputs.size(), 1);
      const Tensor& v = in(0);
      require_rank(op, v, 1);
      const std::size_t batch = indices.empty() ? 0 : indices[0];
      const std::size_t c = v.size();
      Tensor out(Shape{batch, c});
      for (std::size_t i = 0; i < batch; ++i) std::copy(v.data().begin(), v.data().end(), out.row(i).begin());
      return out;
    }
    case Primitive::gather_rows: {
      require_arity(op, inputs.size(), 1);
      const Tensor& t = in(0);
      require_rank(op, t, 2);
      const std::size_t c = t.cols();
      Tensor out(Shape{indices.size(), c});
      for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= t.rows()) {
          throw IndexError("gather_rows: row " + std::to_string(indices[i]) + " out of range for table " +
                           shape_string(t.shape()));
        }
        const auto src = t.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
      }
      return out;
    }
    case Primitive::concat_rows: {
      require_arity(op, inputs.size(), 2);
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      require_rank(op, a, 2);
      require_rank(op, b, 2);
      if (a.cols() != b.cols()) {
        shape_error(op, "column counts differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
      }
      std::vector<double> data(a.storage());
      data.insert(data.end(), b.storage().begin(), b.storage().end());
      return Tensor(Shape{a.rows() + b.rows(), a.cols()}, std::move(data));
    }
    case Primitive::row_sum: {
      require_arity(op, inputs.size(), 1);
      const Tensor& a = in(0);
      require_rank(op, a, 2);
      Tensor out(Shape{a.rows()});
      for (std::size_t i = 0; i < a.rows(); ++i) {
        double acc = 0.0;
        for (double v : a.row(i)) acc += v;
        out[i] = acc;
      }
      return out;
    }
  }
  shape_error(op, "unhandled primitive");
}

Gradients Tape::backward(Var loss, std::span<Parameter* const> wrt) {
  if (&loss.tape() != this) throw ShapeError("backward: loss recorded on a different tape");
  if (!recording_) throw ShapeError("backward: taping was not active");
  if (consumed_) throw ShapeError("backward: tape already consumed; reset() before reuse");
  TapeNode& root = nodes_.at(loss.id());
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_string(root.value.shape()));
  }
  for (auto& n : nodes_) n.adjoint = Tensor(Shape{0});
  root.adjoint = Tensor(root.value.shape(), 1.0);

  for (NodeId id = loss.id() + 1; id-- > 0;) {
    TapeNode& n = nodes_[id];
    for (NodeId p : n.parents) {
      if (p >= id) throw ShapeError("backward: cycle detected at node " + std::to_string(id));
    }
    if (n.adjoint.size() == 0 && n.value.size() != 0) continue;
    propagate(id);
  }

  Gradients grads;
  for (Parameter* p : wrt) {
    auto it = leaves_.find(p);
    if (it != leaves_.end() && nodes_[it->second].adjoint.size() == p->value.size() &&
        nodes_[it->second].adjoint.same_shape(p->value)) {
      grads.set(*p, nodes_[it->second].adjoint);
    } else {
      grads.set(*p, Tensor(p->value.shape()));
    }
  }
  consumed_ = true;
  return grads;
}

void Tape::propagate(NodeId id) {
  const TapeNode& n = nodes_[id];
  if (n.parents.empty()) return;
  const Tensor& g = n.adjoint;

  auto adj = [&](std::size_t i) -> Tensor& {
    TapeNode& p = nodes_[n.parents[i]];
    if (!p.adjoint.same_shape(p.value)) p.adjoint = Tensor(p.value.shape());
    return p.adjoint;
  };
  auto val = [&](std::size_t i) -> const Tensor& { return nodes_[n.parents[i]].value; };
  auto needs = [&](std::size_t i) { return nodes_[n.parents[i]].requires_grad; };

  switch (n.op) {
    case Primitive::leaf:
    case Primitive::constant:
      return;
    case Primitive::add:
      if (needs(0)) accumulate(adj(0), g);
      if (needs(1)) accumulate(adj(1), g);
      return;
    case Primitive::sub: {
      if (needs(0)) accumulate(adj(0), g);
      if (needs(1)) {
        auto b = adj(1).data();
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= g[i];
      }
      return;
    }
    case Primitive::mul: {
      const auto x = val(0).data();
      const auto y = val(1).data();
      if (needs(0)) {
        auto a = adj(0).data();
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i] * y[i];
      }
      if (needs(1)) {
        auto b = adj(1).data();
        for (std::size_t i = 0; i < b.size(); ++i) b[i] += g[i] * x[i];
      }
      return;
    }
    case Primitive::div: {
      const auto x = val(0).data();
      const auto y = val(1).data();
      if (needs(0)) {
        auto a = adj(0).data();
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i] / y[i];
      }
      if (needs(1)) {
        auto b = adj(1).data();
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= g[i] * x[i] / (y[i] * y[i]);
      }
      return;
    }
    case Primitive::matmul: {
      const Tensor& a = val(0);
      const Tensor& b = val(1);
      const std::size_t m = a.rows(), k = a.cols(), cols = b.cols();
      const double* pa = a.data().data();
      const double* pb = b.data().data();
      const double* pg = g.data().data();
      if (needs(0)) {
        // dA = dC * B^T
        double* da = adj(0).data().data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = pg + i * cols;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = pb + p * cols;
            double acc = 0.0;
            for (std::size_t j = 0; j < cols; ++j) acc += grow[j] * brow[j];
            da[i * k + p] += acc;
          }
        }
      }
      if (needs(1)) {
        // dB = A^T * dC
        double* db = adj(1).data().data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = pg + i * cols;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            double* dbrow = db + p * cols;
            for (std::size_t j = 0; j < cols; ++j) dbrow[j] += av * grow[j];
          }
        }
      }
      return;
    }
    case Primitive::scale: {
      auto a = adj(0).data();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i] * n.scalar;
      return;
    }
    case Primitive::add_scalar:
      accumulate(adj(0), g);
      return;
    case Primitive::leaky_relu: {
      const auto x = val(0).data();
      auto a = adj(0).data();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += x[i] > 0.0 ? g[i] : n.scalar * g[i];
      return;
    }
    case Primitive::relu: {
      const auto x = val(0).data();
      auto a = adj(0).data();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += x[i] > 0.0 ? g[i] : 0.0;
      return;
    }
    case Primitive::tanh: {
      const auto y = n.value.data();
      auto a = adj(0).data();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    }
    case Primitive::square: {
      const auto x = val(0).data();
      auto a = adj(0).data();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += 2.0 * x[i] * g[i];
      return;
    }
    case Primitive::abs: {
      // Subgradient 0 at the kink.
      const auto x = val(0).data();
      auto a = adj(0).data();
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (x[i] > 0.0) a[i] += g[i];
        else if (x[i] < 0.0) a[i] -= g[i];
      }
      return;
    }
    case Primitive::sqrt: {
      const auto y = n.value.data();
      auto a = adj(0).data();
      for (std::size_t i = 0; i < a.size(); ++i) {
        if (y[i] == 0.0) throw DomainError("sqrt: derivative undefined at 0");
        a[i] += g[i] * 0.5 / y[i];
      }
      return;
    }
    case Primitive::sum: {
      const double s = g[0];
      for (double& v : adj(0).data()) v += s;
      return;
    }
    case Primitive::mean_rows: {
      Tensor& a = adj(0);
      const std::size_t b = a.rows(), c = a.cols();
      const double inv = 1.0 / static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i) {
        auto r = a.row(i);
        for (std::size_t j = 0; j < c; ++j) r[j] += g[j] * inv;
      }
      return;
    }
    case Primitive::var_rows: {
      // d var_j / d x_ij = 2 (x_ij - mean_j) / B
      const Tensor& x = val(0);
      Tensor& a = adj(0);
      const std::size_t b = x.rows(), c = x.cols();
      std::vector<double> mean(c, 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        const auto r = x.row(i);
        for (std::size_t j = 0; j < c; ++j) mean[j] += r[j];
      }
      for (double& m : mean) m /= static_cast<double>(b);
      const double k = 2.0 / static_cast<double>(b);
      for (std::size_t i = 0; i < b; ++i) {
        const auto r = x.row(i);
        auto ar = a.row(i);
        for (std::size_t j = 0; j < c; ++j) ar[j] += k * (r[j] - mean[j]) * g[j];
      }
      return;
    }
    case Primitive::broadcast_rows: {
      auto a = adj(0).data();
      const std::size_t c = a.size();
      const std::size_t b = g.rows();
      for (std::size_t i = 0; i < b; ++i) {
        const auto r = g.row(i);
        for (std::size_t j = 0; j < c; ++j) a[j] += r[j];
      }
      return;
    }
    case Primitive::gather_rows: {
      Tensor& a = adj(0);
      for (std::size_t i = 0; i < n.indices.size(); ++i) {
        auto dst = a.row(n.indices[i]);
        const auto src = g.row(i);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
      return;
    }
    case Primitive::concat_rows: {
      const std::size_t split = val(0).size();
      if (needs(0)) {
        Tensor& a = adj(0);
        for (std::size_t i = 0; i < split; ++i) a[i] += g[i];
      }
      if (needs(1)) {
        Tensor& b = adj(1);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] += g[split + i];
      }
      return;
    }
    case Primitive::row_sum: {
      Tensor& a = adj(0);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (double& v : a.row(i)) v += g[i];
      }
      return;
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  leaves_.clear();
  consumed_ = false;
}

namespace {
Var unary(Primitive op, Var a, double scalar = 0.0, std::vector<std::size_t> indices = {}) {
  const Var in[] = {a};
  return a.tape().apply(op, in, scalar, std::move(indices));
}
Var binary(Primitive op, Var a, Var b) {
  const Var in[] = {a, b};
  return a.tape().apply(op, in);
}
}  // namespace

Var add(Var a, Var b) { return binary(Primitive::add, a, b); }
Var sub(Var a, Var b) { return binary(Primitive::sub, a, b); }
Var mul(Var a, Var b) { return binary(Primitive::mul, a, b); }
Var div(Var a, Var b) { return binary(Primitive::div, a, b); }
Var matmul(Var a, Var b) { return binary(Primitive::matmul, a, b); }
Var scale(Var a, double c) { return unary(Primitive::scale, a, c); }
Var add_scalar(Var a, double c) { return unary(Primitive::add_scalar, a, c); }
Var leaky_relu(Var a, double slope) { return unary(Primitive::leaky_relu, a, slope); }
Var relu(Var a) { return unary(Primitive::relu, a); }
Var tanh(Var a) { return unary(Primitive::tanh, a); }
Var square(Var a) { return unary(Primitive::square, a); }
Var abs(Var a) { return unary(Primitive::abs, a); }
Var sqrt(Var a) { return unary(Primitive::sqrt, a); }
Var sum(Var a) { return unary(Primitive::sum, a); }
Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}
Var mean_rows(Var a) { return unary(Primitive::mean_rows, a); }
Var var_rows(Var a) { return unary(Primitive::var_rows, a); }
Var broadcast_rows(Var row, std::size_t batch) { return unary(Primitive::broadcast_rows, row, 0.0, {batch}); }
Var gather_rows(Var table, std::span<const std::size_t> rows) {
  return unary(Primitive::gather_rows, table, 0.0, std::vector<std::size_t>(rows.begin(), rows.end()));
}
Var concat_rows(Var top, Var bottom) { return binary(Primitive::concat_rows, top, bottom); }
Var row_sum(Var a) { return unary(Primitive::row_sum, a); }

}  // namespace cgt::grad
