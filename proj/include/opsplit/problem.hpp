#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "opsplit/consensus.hpp"
#include "opsplit/losses.hpp"

namespace opsplit {

/// Minimiser and minimum of the Moreau-regularised objective at one η.
struct RegularizedSolution {
  double eta = 0.0;
  Vector solution;
  double optimum = 0.0;
};

/// m user losses sharing a dimension, with weights λ and cached oracles.
class FederatedProblem {
 public:
  FederatedProblem(std::vector<UserLoss> users, WeightVector weights);

  Index users() const { return static_cast<Index>(users_.size()); }
  Index dim() const { return dim_; }
  const UserLoss& user(Index i) const { return users_[static_cast<std::size_t>(i)]; }
  const std::vector<UserLoss>& losses() const { return users_; }
  const WeightVector& weights() const { return weights_; }

  bool all_quadratic() const;
  bool all_logistic() const;

  /// f(w) = Σ λ_i f_i(w).
  double objective(const Vector& w) const;
  Vector objective_gradient(const Vector& w) const;
  /// f̃(w) = Σ λ_i env_η f_i(w), each prox evaluated with `spec` or the
  /// loss default.
  double regularized_objective(const Vector& w, double eta,
                               const std::optional<ProxSolverSpec>& spec = {}) const;
  /// ∇f̃(w) = Σ λ_i (w − prox_η f_i(w))/η.
  Vector regularized_gradient(const Vector& w, double eta,
                              const std::optional<ProxSolverSpec>& spec = {}) const;

  std::optional<Vector> true_solution;
  std::optional<double> true_optimum;
  std::optional<RegularizedSolution> regularized;
  std::uint64_t seed = 0;
  std::string provenance;

 private:
  std::vector<UserLoss> users_;
  WeightVector weights_;
  Index dim_ = 0;
};

}  // namespace opsplit
