#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace opsplit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector/matrix shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A parameter outside its admissible range (η ≤ 0, p ∉ (0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine that could not produce an answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Child seed `index` of `parent`. Stable across platforms and thread counts.
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return mix_seed(mix_seed(parent) ^ mix_seed(index + 0x632BE59BD9B4E019ULL));
}

}  // namespace opsplit
