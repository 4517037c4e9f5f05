#include "mctangent/network.hpp"

#include "mctangent/errors.hpp"
#include "mctangent/rng.hpp"

namespace mct {

std::string_view architecture_name(Architecture a) noexcept {
  return a == Architecture::Linear ? "linear" : "mlp";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "linear") return Architecture::Linear;
  if (name == "mlp") return Architecture::Mlp;
  throw ValidationError("unknown architecture '" + std::string(name) + "'");
}

std::string_view mode_name(NetMode m) noexcept { return m == NetMode::Tangent ? "tangent" : "direct"; }

NetMode parse_mode(std::string_view name) {
  if (name == "tangent") return NetMode::Tangent;
  if (name == "direct") return NetMode::Direct;
  throw ValidationError("unknown network mode '" + std::string(name) + "'");
}

TangentNetwork::TangentNetwork(Architecture arch, NetMode mode, std::size_t n, std::size_t hidden, bool use_bias)
    : arch_(arch), mode_(mode), n_(n), hidden_(arch == Architecture::Linear ? 0 : hidden), use_bias_(use_bias) {
  if (n == 0) throw ValidationError("network input size must be positive");
  if (arch == Architecture::Linear) {
    params_ = {Tensor({n, n}), Tensor({n})};
  } else {
    if (hidden == 0) throw ValidationError("MLP hidden width must be positive");
    params_ = {Tensor({hidden, n}), Tensor({hidden}), Tensor({n, hidden}), Tensor({n})};
  }
}

TangentNetwork TangentNetwork::init(const InitSpec& spec, Architecture arch, NetMode mode, std::size_t n,
                                    std::size_t hidden, bool use_bias) {
  if (spec.weight_std < 0.0) throw ValidationError("init weight std must be non-negative");
  TangentNetwork net(arch, mode, n, hidden, use_bias);
  Rng rng = Rng::stream(spec.seed, "init");
  for (std::size_t i = 0; i < net.params_.size(); ++i) {
    auto& p = net.params_[i];
    if (p.rank() == 2) {
      rng.fill_normal(p.data(), spec.weight_std);
    } else {
      for (double& x : p.data()) x = use_bias ? spec.bias : 0.0;
    }
  }
  return net;
}

std::vector<std::string> TangentNetwork::param_names() const {
  if (arch_ == Architecture::Linear) return {"W", "b"};
  return {"W1", "b1", "W2", "b2"};
}

std::size_t TangentNetwork::parameter_count() const noexcept {
  std::size_t c = 0;
  for (const auto& p : params_) c += p.size();
  return c;
}

bool TangentNetwork::all_finite() const noexcept {
  for (const auto& p : params_)
    if (!p.all_finite()) return false;
  return true;
}

Tensor TangentNetwork::forward_batch(const Tensor& u) const {
  if (u.rows() != n_) {
    throw DimensionError("network expects input of length " + std::to_string(n_) + ", got " + shape_string(u.shape()));
  }
  const std::size_t b = u.cols();
  auto affine = [&](const Tensor& w, const Tensor& bias, const Tensor& x) {
    Tensor out({w.rows(), b});
    kernels::matmul(w.data(), x.data(), out.data(), w.rows(), w.cols(), b);
    if (use_bias_)
      for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < b; ++c) out[r * b + c] += bias[r];
    return out;
  };
  Tensor x = u.rank() == 1 ? u.reshaped({n_, 1}) : u;
  if (arch_ == Architecture::Linear) {
    Tensor out = affine(params_[0], params_[1], x);
    return u.rank() == 1 ? out.reshaped({n_}) : out;
  }
  Tensor hid = affine(params_[0], params_[1], x);
  for (double& v : hid.data()) v = v > 0.0 ? v : 0.0;
  Tensor out = affine(params_[2], params_[3], hid);
  return u.rank() == 1 ? out.reshaped({n_}) : out;
}

Field TangentNetwork::forward(std::span<const double> u) const {
  Tensor x({u.size()}, std::vector<double>(u.begin(), u.end()));
  return forward_batch(x).storage();
}

ad::Var TangentNetwork::forward(std::span<const ad::Var> vars, const ad::Var& u) const {
  if (vars.size() != params_.size()) throw ContractError("network forward needs one Var per parameter");
  if (u.value().rows() != n_) {
    throw DimensionError("network expects input of length " + std::to_string(n_) + ", got " +
                         shape_string(u.shape()));
  }
  auto affine = [&](const ad::Var& w, const ad::Var& b, const ad::Var& x) {
    ad::Var y = ad::matmul(w, x);
    return use_bias_ ? ad::add_column(y, b) : y;
  };
  if (arch_ == Architecture::Linear) return affine(vars[0], vars[1], u);
  return affine(vars[2], vars[3], ad::relu(affine(vars[0], vars[1], u)));
}

Tensor TangentNetwork::jacobian(std::span<const double> u) const {
  if (u.size() != n_) throw DimensionError("jacobian: input length mismatch");
  if (arch_ == Architecture::Linear) return params_[0];
  const Tensor& w1 = params_[0];
  const Tensor& b1 = params_[1];
  const Tensor& w2 = params_[2];
  Tensor pre({hidden_});
  kernels::matmul(w1.data(), u, pre.data(), hidden_, n_, 1);
  // W2 diag(active) W1 with inactive hidden units dropped.
  Tensor masked({n_, hidden_});
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = 0; k < hidden_; ++k)
      if (pre[k] + (use_bias_ ? b1[k] : 0.0) > 0.0) masked.at(r, k) = w2.at(r, k);
  Tensor j({n_, n_});
  kernels::matmul(masked.data(), w1.data(), j.data(), n_, hidden_, n_);
  return j;
}

Field TangentNetwork::direct_step(std::span<const double> u) const {
  if (mode_ != NetMode::Direct) throw ContractError("direct_step called on a tangent-mode network");
  return forward(u);
}

}  // namespace mct
