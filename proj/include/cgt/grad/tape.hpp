#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cgt/grad/tensor.hpp"

namespace cgt::grad {

/// A named trainable array. Tapes reference parameters by address, so a
/// Parameter must outlive every tape that recorded it.
struct Parameter {
  std::string name;
  Tensor value;
};

enum class Primitive {
  leaf,
  constant,
  add,
  sub,
  mul,
  div,
  matmul,
  scale,
  add_scalar,
  leaky_relu,
  relu,
  tanh,
  square,
  abs,
  sqrt,
  sum,
  mean_rows,
  var_rows,
  broadcast_rows,
  gather_rows,
  concat_rows,
  row_sum,
};

std::string_view primitive_name(Primitive p) noexcept;

using NodeId = std::size_t;

struct TapeNode {
  Primitive op = Primitive::constant;
  std::vector<NodeId> parents;
  Tensor value;
  Tensor adjoint;  // empty shape until backward reaches the node
  double scalar = 0.0;
  std::vector<std::size_t> indices;
  Parameter* param = nullptr;
  bool requires_grad = false;
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  NodeId id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Gradients keyed by parameter. Parameters unreachable from the loss map to
/// zero tensors of their own shape.
class Gradients {
 public:
  const Tensor& of(const Parameter& p) const;
  bool contains(const Parameter& p) const { return grads_.contains(&p); }
  void set(const Parameter& p, Tensor g) { grads_[&p] = std::move(g); }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  std::unordered_map<const Parameter*, Tensor> grads_;
};

/// Single-threaded reverse-mode tape. Nodes are appended in evaluation order,
/// so parent ids are always smaller than child ids.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  /// Leaf for a parameter. Repeated calls with the same parameter return the
  /// same node, so shared parameters accumulate gradient from every use.
  Var param(Parameter& p);
  Var constant(Tensor value);

  Var apply(Primitive op, std::span<const Var> inputs, double scalar = 0.0,
            std::vector<std::size_t> indices = {});

  const TapeNode& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Every parameter passed in `wrt` gets
  /// an entry (zero if unreachable). The tape is consumed afterwards.
  Gradients backward(Var loss, std::span<Parameter* const> wrt);

  void reset();

 private:
  friend class Var;
  Tensor forward(Primitive op, std::span<const Var> inputs, double scalar,
                 const std::vector<std::size_t>& indices) const;
  void propagate(NodeId id);

  bool recording_;
  bool consumed_ = false;
  std::deque<TapeNode> nodes_;  // stable references across appends
  std::unordered_map<const Parameter*, NodeId> leaves_;
};

// Primitive wrappers. All inputs must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var matmul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var leaky_relu(Var a, double slope = 0.2);
Var relu(Var a);
Var tanh(Var a);
Var square(Var a);
Var abs(Var a);
Var sqrt(Var a);
Var sum(Var a);
Var mean(Var a);  // sum scaled by 1/size
Var mean_rows(Var a);
Var var_rows(Var a);
Var broadcast_rows(Var row, std::size_t batch);
Var gather_rows(Var table, std::span<const std::size_t> rows);
Var concat_rows(Var top, Var bottom);
Var row_sum(Var a);

}  // namespace cgt::grad
