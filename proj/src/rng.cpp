#include "mctangent/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

namespace mct {

std::uint64_t Rng::mix(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::stream(std::uint64_t seed, std::string_view name) {
  // FNV-1a over the stream name
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return Rng(mix(seed) ^ h);
}

Rng Rng::split(std::uint64_t index) const {
  Rng child(0);
  child.key_ = mix(key_ ^ mix(index + 0x3c6ef372fe94f82bULL));
  return child;
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t c = counter_++;
  return mix(key_ ^ mix(c));
}

double Rng::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

void Rng::fill_normal(std::span<double> out, double stddev) {
  for (auto& x : out) x = stddev * normal();
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

}  // namespace mct
