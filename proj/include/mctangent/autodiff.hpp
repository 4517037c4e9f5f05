#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// A Tape records every operation in creation order; node ids therefore form a
// DAG in topological order and backward() visits each node once, in reverse.
// Tapes are single-threaded. Independent tapes may run concurrently.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mctangent/tensor.hpp"

namespace mct::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind {
  Leaf,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Scale,
  Relu,
  AddColumn,
  Mse,
  Sum,
  Concat,
  Slice,
  Custom,
};

/// Vector-Jacobian product of a custom op: maps the upstream adjoint to one
/// adjoint per input (same order and shapes as the inputs).
using VjpFn = std::function<std::vector<Tensor>(const Tensor& upstream)>;

/// Gradients of a scalar with respect to a requested list of leaves.
class Gradients {
 public:
  Gradients() = default;
  Gradients(std::vector<std::size_t> ids, std::vector<Tensor> grads)
      : ids_(std::move(ids)), grads_(std::move(grads)) {}

  const Tensor& of(const Var& v) const;
  std::size_t size() const noexcept { return grads_.size(); }
  const Tensor& operator[](std::size_t i) const { return grads_[i]; }
  std::vector<Tensor>& tensors() noexcept { return grads_; }
  const std::vector<Tensor>& tensors() const noexcept { return grads_; }

 private:
  std::vector<std::size_t> ids_;
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input (network parameters, probe inputs).
  Var leaf(Tensor value);
  /// Input that never receives a gradient (data, noise).
  Var constant(Tensor value);
  /// Op with a caller-supplied backward rule.
  Var custom(std::vector<Var> inputs, Tensor value, VjpFn vjp);

  /// Reverse sweep from a scalar loss. Throws ContractError for non-scalars.
  Gradients backward(const Var& loss, std::span<const Var> wrt) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  void reset() { nodes_.clear(); }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }

  // Used by the free-function ops below.
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, double scalar = 0.0,
             std::size_t extra = 0);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    double scalar = 0.0;     // Scale factor
    std::size_t extra = 0;   // Slice begin row
    bool needs_grad = false;
    VjpFn vjp;
  };

  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
};

// Every op below is recorded on the tape of its operands.

/// [m x k] * [k x n]; a rank-1 right operand is treated as a column.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Elementwise product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// max(0, x); the subgradient at 0 is 0.
Var relu(const Var& a);
/// Adds a length-m vector to every column of an [m x n] matrix (or to a length-m vector).
Var add_column(const Var& m, const Var& bias);
/// Mean of squared entries, a scalar.
Var mse(const Var& a);
Var sum(const Var& a);
/// Stacks along axis 0. All parts share the trailing dimensions.
Var concat(std::span<const Var> parts);
/// Rows [begin, end) along axis 0.
Var slice(const Var& a, std::size_t begin, std::size_t end);

}  // namespace mct::ad
