#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tofu {

// Every numeric routine in the project computes in this type.
using Real = double;

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or layout shapes that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Violated preconditions on arguments (ranges, emptiness, sizes).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Malformed files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// A parse failure at a known position in a binary stream.
class ParseError : public FormatError {
 public:
  ParseError(const std::string& what, std::size_t byte_offset);
  std::size_t byte_offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

using RngStream = std::mt19937_64;

// SplitMix64 finalizer; the basis of all seed derivation.
std::uint64_t mix64(std::uint64_t x) noexcept;

// Derives a child seed from a parent seed and an ordered list of tags.
// Distinct tag sequences give independent streams; the result depends
// only on the values, never on call order or thread.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept;

// Stable 64-bit hash of a stream name, used as a tag.
std::uint64_t name_tag(std::string_view name) noexcept;

inline RngStream make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  return RngStream(derive_seed(seed, tags));
}

// Uniform real in [lo, hi) drawn from the raw engine output so that values
// are identical across standard library implementations.
Real uniform(RngStream& rng, Real lo, Real hi);

// Uniform integer in [0, n).
std::size_t uniform_index(RngStream& rng, std::size_t n);

// Fisher-Yates shuffle on top of uniform_index (std::shuffle is not
// specified bit-for-bit across implementations).
template <class T>
void shuffle(std::vector<T>& items, RngStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(items[i - 1], items[j]);
  }
}

// Standard normal via Box-Muller on uniform().
Real standard_normal(RngStream& rng);

// Gamma(shape, 1) via Marsaglia-Tsang.
Real gamma_variate(RngStream& rng, Real shape);

// One draw from a symmetric Dirichlet(concentration * 1_k).
std::vector<Real> dirichlet(RngStream& rng, std::size_t k, Real concentration);

}  // namespace tofu
