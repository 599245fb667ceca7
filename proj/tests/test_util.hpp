#pragma once

#include <random>

#include "opsplit/experiments.hpp"

namespace testutil {

using opsplit::Index;
using opsplit::Matrix;
using opsplit::Vector;

inline Matrix gaussian(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix a(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) a(r, c) = n(rng);
  }
  return a;
}

inline Vector gaussian(std::mt19937_64& rng, Index n) { return gaussian(rng, n, 1).col(0); }

inline opsplit::StackedState stacked(std::mt19937_64& rng, Index users, Index dim) {
  return opsplit::StackedState(users, dim, gaussian(rng, users * dim));
}

inline opsplit::WeightVector random_weights(std::mt19937_64& rng, Index m) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> w(static_cast<std::size_t>(m));
  double total = 0.0;
  for (auto& x : w) total += (x = u(rng));
  for (auto& x : w) x /= total;
  // Push the rounding residue into the last entry so the sum is exact.
  double rest = 1.0;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) rest -= w[i];
  w.back() = rest;
  return opsplit::WeightVector(w);
}

/// Small least-squares problem with oracles attached.
inline opsplit::FederatedProblem small_ls(std::uint64_t seed, Index users = 4, Index dim = 3,
                                          Index samples = 8, double shift = 0.5) {
  opsplit::GenSpec spec;
  spec.kind = opsplit::LeastSquaresSpec{users, dim, samples, 0.25, shift};
  spec.seed = seed;
  return opsplit::gen_least_squares(spec);
}

/// Desk-scale least squares (10 users, d = 20, 200 rows each).
inline opsplit::FederatedProblem desk_ls(std::uint64_t seed = 1) {
  opsplit::GenSpec spec;
  spec.kind = opsplit::LeastSquaresSpec{};
  spec.seed = seed;
  return opsplit::gen_least_squares(spec);
}

inline double rel_diff(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

}  // namespace testutil
