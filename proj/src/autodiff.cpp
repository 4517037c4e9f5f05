#include "mctangent/autodiff.hpp"

#include <algorithm>
#include <optional>

#include "mctangent/errors.hpp"

namespace mct::ad {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("value() on an empty Var");
  return tape_->value(id_);
}

const Tensor& Gradients::of(const Var& v) const {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == v.id()) return grads_[i];
  throw ContractError("no gradient recorded for node " + std::to_string(v.id()));
}

void Tape::check_owned(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{OpKind::Leaf, {}, std::move(value), 0.0, 0, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::Constant, {}, std::move(value), 0.0, 0, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, double scalar,
                 std::size_t extra) {
  bool needs = false;
  for (auto id : inputs) needs = needs || nodes_[id].needs_grad;
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), scalar, extra, needs, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::custom(std::vector<Var> inputs, Tensor value, VjpFn vjp) {
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const auto& v : inputs) {
    check_owned(v);
    ids.push_back(v.id());
  }
  Var out = record(OpKind::Custom, std::move(ids), std::move(value));
  nodes_.back().vjp = std::move(vjp);
  return out;
}

namespace {

void accumulate(std::optional<Tensor>& slot, const Tensor& g) {
  if (!slot) {
    slot = g;
    return;
  }
  auto dst = slot->data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor& slot_for(std::optional<Tensor>& slot, const Shape& shape) {
  if (!slot) slot = Tensor(shape);
  return *slot;
}

}  // namespace

Gradients Tape::backward(const Var& loss, std::span<const Var> wrt) const {
  check_owned(loss);
  for (const auto& v : wrt) check_owned(v);
  if (loss.value().size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(loss.value().shape()));
  }

  std::vector<std::optional<Tensor>> adj(loss.id() + 1);
  adj[loss.id()] = Tensor(loss.value().shape(), 1.0);
  std::vector<bool> keep(loss.id() + 1, false);
  for (const auto& v : wrt)
    if (v.id() < keep.size()) keep[v.id()] = true;

  for (std::size_t idx = loss.id() + 1; idx-- > 0;) {
    const Node& node = nodes_[idx];
    if (!adj[idx] || !node.needs_grad) continue;
    const Tensor& g = *adj[idx];
    auto gd = g.data();
    auto input_needs = [&](std::size_t k) { return nodes_[node.inputs[k]].needs_grad; };

    switch (node.kind) {
      case OpKind::Leaf:
      case OpKind::Constant:
        break;
      case OpKind::MatMul: {
        const Tensor& a = nodes_[node.inputs[0]].value;
        const Tensor& b = nodes_[node.inputs[1]].value;
        const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
        if (input_needs(0)) {
          Tensor& da = slot_for(adj[node.inputs[0]], a.shape());
          kernels::matmul_a_bt_acc(gd, b.data(), da.data(), m, n, k);
        }
        if (input_needs(1)) {
          Tensor& db = slot_for(adj[node.inputs[1]], b.shape());
          kernels::matmul_at_b_acc(a.data(), gd, db.data(), m, k, n);
        }
        break;
      }
      case OpKind::Add:
      case OpKind::Sub: {
        if (input_needs(0)) accumulate(adj[node.inputs[0]], g);
        if (input_needs(1)) {
          Tensor& db = slot_for(adj[node.inputs[1]], g.shape());
          auto d = db.data();
          const double sign = node.kind == OpKind::Add ? 1.0 : -1.0;
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += sign * gd[i];
        }
        break;
      }
      case OpKind::Mul: {
        const Tensor& a = nodes_[node.inputs[0]].value;
        const Tensor& b = nodes_[node.inputs[1]].value;
        if (input_needs(0)) {
          auto d = slot_for(adj[node.inputs[0]], a.shape()).data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i] * b[i];
        }
        if (input_needs(1)) {
          auto d = slot_for(adj[node.inputs[1]], b.shape()).data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[i] * a[i];
        }
        break;
      }
      case OpKind::Scale: {
        auto d = slot_for(adj[node.inputs[0]], g.shape()).data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += node.scalar * gd[i];
        break;
      }
      case OpKind::Relu: {
        const Tensor& x = nodes_[node.inputs[0]].value;
        auto d = slot_for(adj[node.inputs[0]], x.shape()).data();
        for (std::size_t i = 0; i < d.size(); ++i)
          if (x[i] > 0.0) d[i] += gd[i];
        break;
      }
      case OpKind::AddColumn: {
        if (input_needs(0)) accumulate(adj[node.inputs[0]], g);
        if (input_needs(1)) {
          const Tensor& bias = nodes_[node.inputs[1]].value;
          auto d = slot_for(adj[node.inputs[1]], bias.shape()).data();
          const std::size_t rows = g.rows(), cols = g.cols();
          for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) acc += gd[r * cols + c];
            d[r] += acc;
          }
        }
        break;
      }
      case OpKind::Mse: {
        const Tensor& a = nodes_[node.inputs[0]].value;
        auto d = slot_for(adj[node.inputs[0]], a.shape()).data();
        const double f = 2.0 * gd[0] / static_cast<double>(a.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += f * a[i];
        break;
      }
      case OpKind::Sum: {
        const Tensor& a = nodes_[node.inputs[0]].value;
        auto d = slot_for(adj[node.inputs[0]], a.shape()).data();
        for (auto& x : d) x += gd[0];
        break;
      }
      case OpKind::Concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
          const Tensor& part = nodes_[node.inputs[k]].value;
          if (input_needs(k)) {
            auto d = slot_for(adj[node.inputs[k]], part.shape()).data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[offset + i];
          }
          offset += part.size();
        }
        break;
      }
      case OpKind::Slice: {
        const Tensor& a = nodes_[node.inputs[0]].value;
        auto d = slot_for(adj[node.inputs[0]], a.shape()).data();
        const std::size_t row = a.size() / a.rows();
        const std::size_t start = node.extra * row;
        for (std::size_t i = 0; i < gd.size(); ++i) d[start + i] += gd[i];
        break;
      }
      case OpKind::Custom: {
        std::vector<Tensor> parts = node.vjp(g);
        if (parts.size() != node.inputs.size()) {
          throw ContractError("custom op returned wrong number of adjoints");
        }
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (!input_needs(k)) continue;
          if (parts[k].shape() != nodes_[node.inputs[k]].value.shape()) {
            throw DimensionError("custom op adjoint shape mismatch");
          }
          accumulate(adj[node.inputs[k]], parts[k]);
        }
        break;
      }
    }
    // Intermediate adjoints are no longer needed once propagated.
    if (!keep[idx]) adj[idx].reset();
  }

  std::vector<std::size_t> ids;
  std::vector<Tensor> grads;
  for (const auto& v : wrt) {
    ids.push_back(v.id());
    if (v.id() < adj.size() && adj[v.id()]) {
      grads.push_back(*adj[v.id()]);
    } else {
      grads.emplace_back(v.value().shape());
    }
  }
  return Gradients(std::move(ids), std::move(grads));
}

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ContractError("operation on an empty Var");
  return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape() || !a.valid()) throw ContractError("operands live on different tapes");
  return *a.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.record(OpKind::MatMul, {a.id(), b.id()}, mct::matmul(a.value(), b.value()));
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += b.value()[i];
  return t.record(OpKind::Add, {a.id(), b.id()}, std::move(out));
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] -= b.value()[i];
  return t.record(OpKind::Sub, {a.id(), b.id()}, std::move(out));
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= b.value()[i];
  return t.record(OpKind::Mul, {a.id(), b.id()}, std::move(out));
}

Var scale(const Var& a, double s) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (auto& x : out.data()) x *= s;
  return t.record(OpKind::Scale, {a.id()}, std::move(out), s);
}

Var relu(const Var& a) {
  Tape& t = tape_of(a);
  Tensor out = a.value();
  for (auto& x : out.data()) x = x > 0.0 ? x : 0.0;
  return t.record(OpKind::Relu, {a.id()}, std::move(out));
}

Var add_column(const Var& m, const Var& bias) {
  Tape& t = tape_of(m, bias);
  const Tensor& mv = m.value();
  const Tensor& bv = bias.value();
  if (bv.rank() != 1 || mv.rank() < 1 || mv.rank() > 2 || mv.rows() != bv.size()) {
    throw DimensionError("add_column: " + shape_string(mv.shape()) + " + " +
                         shape_string(bv.shape()));
  }
  Tensor out = mv;
  const std::size_t rows = mv.rows(), cols = mv.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[r];
  return t.record(OpKind::AddColumn, {m.id(), bias.id()}, std::move(out));
}

Var mse(const Var& a) {
  Tape& t = tape_of(a);
  const Tensor& v = a.value();
  if (v.size() == 0) throw ContractError("mse of an empty tensor");
  double acc = 0.0;
  for (double x : v.data()) acc += x * x;
  return t.record(OpKind::Mse, {a.id()}, Tensor::scalar(acc / static_cast<double>(v.size())));
}

Var sum(const Var& a) {
  Tape& t = tape_of(a);
  double acc = 0.0;
  for (double x : a.value().data()) acc += x;
  return t.record(OpKind::Sum, {a.id()}, Tensor::scalar(acc));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat of nothing");
  Tape& t = tape_of(parts[0]);
  const Shape& first = parts[0].shape();
  if (first.empty()) throw DimensionError("concat of scalars");
  Shape tail(first.begin() + 1, first.end());
  std::size_t rows = 0;
  std::vector<double> data;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    tape_of(parts[0], p);
    const Shape& s = p.shape();
    if (s.empty() || Shape(s.begin() + 1, s.end()) != tail) {
      throw DimensionError("concat: incompatible part " + shape_string(s));
    }
    rows += s[0];
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    ids.push_back(p.id());
  }
  Shape out_shape = tail;
  out_shape.insert(out_shape.begin(), rows);
  return t.record(OpKind::Concat, std::move(ids), Tensor(std::move(out_shape), std::move(data)));
}

Var slice(const Var& a, std::size_t begin, std::size_t end) {
  Tape& t = tape_of(a);
  const Tensor& v = a.value();
  if (v.rank() == 0 || begin > end || end > v.rows()) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + shape_string(v.shape()));
  }
  const std::size_t row = v.size() / v.rows();
  Shape s = v.shape();
  s[0] = end - begin;
  std::vector<double> data(v.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                           v.data().begin() + static_cast<std::ptrdiff_t>(end * row));
  return t.record(OpKind::Slice, {a.id()}, Tensor(std::move(s), std::move(data)), 0.0, begin);
}

}  // namespace mct::ad
