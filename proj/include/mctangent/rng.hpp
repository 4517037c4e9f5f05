#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mct {

/// Counter-based generator: output i is a bijective mix of (key, i), so
/// streams can be split by key without sharing state. Normal deviates use
/// Box-Muller, which keeps sequences identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t key = 0) : key_(mix(key ^ 0x6a09e667f3bcc909ULL)) {}

  /// Independent named stream, e.g. Rng::stream(seed, "noise").
  static Rng stream(std::uint64_t seed, std::string_view name);

  /// Child stream keyed by an index (sample id, epoch, draw number, ...).
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform in (0, 1].
  double uniform();
  double normal();
  void fill_normal(std::span<double> out, double stddev = 1.0);

  std::uint64_t key() const noexcept { return key_; }

  static std::uint64_t mix(std::uint64_t x) noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Fisher-Yates shuffle of [0, n) driven by `rng`.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

}  // namespace mct
