#pragma once

#include <span>
#include <vector>

#include "opsplit/common.hpp"

namespace opsplit {

/// Point of the product space R^{dm}: m user blocks of dimension d, stored
/// block-major in one contiguous vector.
class StackedState {
 public:
  StackedState() = default;
  StackedState(Index users, Index dim);
  StackedState(Index users, Index dim, Vector flat);

  /// Every block set to `block`.
  static StackedState replicate(Index users, const Vector& block);

  Index users() const { return users_; }
  Index dim() const { return dim_; }

  auto block(Index i) { return flat_.segment(i * dim_, dim_); }
  auto block(Index i) const { return flat_.segment(i * dim_, dim_); }

  Vector& flat() { return flat_; }
  const Vector& flat() const { return flat_; }

  bool same_shape(const StackedState& other) const {
    return users_ == other.users_ && dim_ == other.dim_;
  }

  StackedState& operator+=(const StackedState& o);
  StackedState& operator-=(const StackedState& o);
  StackedState& operator*=(double s);

  friend StackedState operator+(StackedState a, const StackedState& b) { return a += b; }
  friend StackedState operator-(StackedState a, const StackedState& b) { return a -= b; }
  friend StackedState operator*(double s, StackedState a) { return a *= s; }

  bool operator==(const StackedState& o) const {
    return same_shape(o) && flat_ == o.flat_;
  }

 private:
  Index users_ = 0;
  Index dim_ = 0;
  Vector flat_;
};

/// Nonnegative user weights λ summing to one (within 1e-12).
class WeightVector {
 public:
  explicit WeightVector(std::vector<double> weights);
  static WeightVector uniform(Index users);

  Index size() const { return static_cast<Index>(weights_.size()); }
  double operator[](Index i) const { return weights_[static_cast<std::size_t>(i)]; }
  std::span<const double> values() const { return weights_; }

 private:
  std::vector<double> weights_;
};

/// ⟨x, z⟩_λ = Σ_i λ_i x_iᵀ z_i.
double weighted_inner(const StackedState& x, const StackedState& z,
                      const WeightVector& weights);

/// ‖x‖_λ.
double weighted_norm(const StackedState& x, const WeightVector& weights);

/// w̄ = Σ_i λ_i x_i, summed in ascending user order.
Vector consensus_mean(const StackedState& x, const WeightVector& weights);

/// Mean over the users flagged in `present` with weights renormalised to the
/// present set. Throws DomainError when no user is present.
Vector partial_consensus_mean(const StackedState& x, const WeightVector& weights,
                              const std::vector<bool>& present);

/// P_H x: every block replaced by w̄.
StackedState project_consensus(const StackedState& x, const WeightVector& weights);

/// R_H x: block i replaced by 2w̄ − x_i.
StackedState reflect_consensus(const StackedState& x, const WeightVector& weights);

/// ‖Σ_i λ_i x_i‖₂; zero iff x ∈ H⊥.
double complement_residual(const StackedState& x, const WeightVector& weights);

}  // namespace opsplit
