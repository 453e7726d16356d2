#include "tofu/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace tofu {

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

ParseError::ParseError(const std::string& what, std::size_t byte_offset)
    : FormatError(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
      offset_(byte_offset) {}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(seed);
  for (auto t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

std::uint64_t name_tag(std::string_view name) noexcept {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Real uniform(RngStream& rng, Real lo, Real hi) {
  // 53 random mantissa bits -> [0, 1)
  const Real u = static_cast<Real>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

std::size_t uniform_index(RngStream& rng, std::size_t n) {
  if (n == 0) throw ArgumentError("uniform_index: empty range");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % n);
}

Real standard_normal(RngStream& rng) {
  Real u1;
  do {
    u1 = uniform(rng, 0.0, 1.0);
  } while (u1 <= 0.0);
  const Real u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Real gamma_variate(RngStream& rng, Real shape) {
  if (!(shape > 0.0)) throw ArgumentError("gamma_variate: shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and rescale.
    Real u;
    do {
      u = uniform(rng, 0.0, 1.0);
    } while (u <= 0.0);
    return gamma_variate(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const Real d = shape - 1.0 / 3.0;
  const Real c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    Real x, v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const Real u = uniform(rng, 0.0, 1.0);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<Real> dirichlet(RngStream& rng, std::size_t k, Real concentration) {
  std::vector<Real> p(k);
  Real total = 0.0;
  for (auto& v : p) {
    v = gamma_variate(rng, concentration);
    total += v;
  }
  if (total <= 0.0) {
    // Every component underflowed (tiny concentration); put all mass on one.
    std::fill(p.begin(), p.end(), 0.0);
    p[uniform_index(rng, k)] = 1.0;
    return p;
  }
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace tofu
