#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mctangent/autodiff.hpp"
#include "mctangent/field.hpp"
#include "mctangent/tensor.hpp"

namespace mct {

enum class Architecture { Linear, Mlp };
/// Tangent: the net approximates G(u). Direct: the net maps u^i to u^{i+1}.
enum class NetMode { Tangent, Direct };

std::string_view architecture_name(Architecture a) noexcept;
Architecture parse_architecture(std::string_view name);
std::string_view mode_name(NetMode m) noexcept;
NetMode parse_mode(std::string_view name);

struct InitSpec {
  double weight_std = 0.1;
  double bias = 0.0;
  std::uint64_t seed = 0;
};

/// Linear: Psi(u) = W u + b with params {W [n x n], b [n]}.
/// Mlp: Psi(u) = W2 relu(W1 u + b1) + b2 with params {W1 [H x n], b1 [H], W2 [n x H], b2 [n]}.
/// With use_bias false the bias tensors stay zero and are skipped in forward.
class TangentNetwork {
 public:
  TangentNetwork() = default;
  TangentNetwork(Architecture arch, NetMode mode, std::size_t n, std::size_t hidden, bool use_bias = true);

  static TangentNetwork init(const InitSpec& spec, Architecture arch, NetMode mode, std::size_t n,
                             std::size_t hidden = 0, bool use_bias = true);

  Architecture architecture() const noexcept { return arch_; }
  NetMode mode() const noexcept { return mode_; }
  std::size_t input_size() const noexcept { return n_; }
  std::size_t hidden() const noexcept { return hidden_; }
  bool use_bias() const noexcept { return use_bias_; }

  std::vector<Tensor>& params() noexcept { return params_; }
  const std::vector<Tensor>& params() const noexcept { return params_; }
  std::vector<std::string> param_names() const;
  std::size_t parameter_count() const noexcept;
  bool all_finite() const noexcept;

  Field forward(std::span<const double> u) const;
  /// Columns of `u` ([n x B]) are independent inputs.
  Tensor forward_batch(const Tensor& u) const;
  /// Tape-recorded forward; `vars` are tape handles of params() in order and
  /// `u` is [n] or [n x B].
  ad::Var forward(std::span<const ad::Var> vars, const ad::Var& u) const;

  /// Exact d Psi / d u at u.
  Tensor jacobian(std::span<const double> u) const;
  /// Next state for a direct-mode net.
  Field direct_step(std::span<const double> u) const;

  friend bool operator==(const TangentNetwork&, const TangentNetwork&) = default;

 private:
  Architecture arch_ = Architecture::Linear;
  NetMode mode_ = NetMode::Tangent;
  std::size_t n_ = 0;
  std::size_t hidden_ = 0;
  bool use_bias_ = true;
  std::vector<Tensor> params_;
};

}  // namespace mct
