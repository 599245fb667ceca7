#include "opsplit/problem.hpp"

#include <algorithm>

namespace opsplit {

FederatedProblem::FederatedProblem(std::vector<UserLoss> users,
                                   WeightVector weights)
    : users_(std::move(users)), weights_(std::move(weights)) {
  if (users_.empty()) throw DimensionError("problem: need at least one user");
  if (weights_.size() != static_cast<Index>(users_.size())) {
    throw DimensionError("problem: " + std::to_string(users_.size()) +
                         " users but " + std::to_string(weights_.size()) +
                         " weights");
  }
  dim_ = users_.front().dim();
  for (const auto& u : users_) {
    if (u.dim() != dim_) {
      throw DimensionError("problem: users disagree on dimension (" +
                           std::to_string(dim_) + " vs " +
                           std::to_string(u.dim()) + ")");
    }
  }
}

bool FederatedProblem::all_quadratic() const {
  return std::all_of(users_.begin(), users_.end(), [](const UserLoss& u) {
    return u.get_if<QuadraticLoss>() != nullptr;
  });
}

bool FederatedProblem::all_logistic() const {
  return std::all_of(users_.begin(), users_.end(), [](const UserLoss& u) {
    return u.get_if<LogisticLoss>() != nullptr;
  });
}

double FederatedProblem::objective(const Vector& w) const {
  double total = 0.0;
  for (Index i = 0; i < users(); ++i) total += weights_[i] * value(user(i), w);
  return total;
}

Vector FederatedProblem::objective_gradient(const Vector& w) const {
  Vector g = Vector::Zero(dim_);
  for (Index i = 0; i < users(); ++i) g += weights_[i] * gradient(user(i), w);
  return g;
}

double FederatedProblem::regularized_objective(
    const Vector& w, double eta, const std::optional<ProxSolverSpec>& spec) const {
  double total = 0.0;
  for (Index i = 0; i < users(); ++i) {
    const auto& loss = user(i);
    total += weights_[i] *
             envelope_value(loss, w, eta, spec.value_or(default_prox_spec(loss)));
  }
  return total;
}

Vector FederatedProblem::regularized_gradient(
    const Vector& w, double eta, const std::optional<ProxSolverSpec>& spec) const {
  Vector g = Vector::Zero(dim_);
  for (Index i = 0; i < users(); ++i) {
    const auto& loss = user(i);
    g += weights_[i] * (w - prox(loss, w, eta, spec.value_or(default_prox_spec(loss))));
  }
  return g / eta;
}

}  // namespace opsplit
