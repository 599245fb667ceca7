#include "opsplit/anderson.hpp"

#include <cmath>

namespace opsplit {

void AndersonConfig::validate() const {
  if (tau < 0) throw DomainError("anderson: tau must be >= 0");
  if (ridge && !(*ridge >= 0.0)) throw DomainError("anderson: ridge must be >= 0");
  if (!(svd_tol > 0.0)) throw DomainError("anderson: svd_tol must be > 0");
}

AndersonMemory::AndersonMemory(int tau) : tau_(tau) {
  if (tau < 0) throw DomainError("anderson: tau must be >= 0");
}

void AndersonMemory::push(const Vector& input, const Vector& mapped) {
  if (input.size() != mapped.size()) {
    throw DimensionError("anderson: input and mapped state differ in length");
  }
  if (!inputs_.empty() && inputs_.front().size() != input.size()) {
    throw DimensionError("anderson: state length changed between pushes");
  }
  inputs_.push_back(input);
  mapped_.push_back(mapped);
  while (static_cast<int>(inputs_.size()) > tau_ + 1) {
    inputs_.pop_front();
    mapped_.pop_front();
  }
}

void AndersonMemory::clear() {
  inputs_.clear();
  mapped_.clear();
}

Matrix AndersonMemory::residuals() const {
  if (inputs_.empty()) return {};
  Matrix r(inputs_.front().size(), columns());
  for (Index j = 0; j < columns(); ++j) {
    r.col(j) = inputs_[static_cast<std::size_t>(j)] - mapped_[static_cast<std::size_t>(j)];
  }
  return r;
}

Matrix AndersonMemory::mapped() const {
  if (mapped_.empty()) return {};
  Matrix t(mapped_.front().size(), columns());
  for (Index j = 0; j < columns(); ++j) t.col(j) = mapped_[static_cast<std::size_t>(j)];
  return t;
}

AndersonWeights anderson_weights(const AndersonMemory& memory,
                                 std::optional<double> ridge, double svd_tol) {
  if (memory.empty()) throw DomainError("anderson: memory is empty");
  const Index cols = memory.columns();
  if (cols == 1) return {Vector::Ones(1), false};

  const Matrix r = memory.residuals();
  Matrix gram = r.transpose() * r;
  const double ridge_value = ridge.value_or(1e-10 * gram.trace() / static_cast<double>(cols));
  if (ridge_value > 0.0) gram.diagonal().array() += ridge_value;

  Eigen::JacobiSVD<Matrix> svd(gram, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& sigma = svd.singularValues();
  const double cutoff = svd_tol * (sigma.size() > 0 ? sigma(0) : 0.0);
  Vector inv_sigma = Vector::Zero(sigma.size());
  for (Index j = 0; j < sigma.size(); ++j) {
    if (sigma(j) > cutoff && sigma(j) > 0.0) inv_sigma(j) = 1.0 / sigma(j);
  }
  const Vector ones = Vector::Ones(cols);
  const Vector g_pinv_ones =
      svd.matrixV() * (inv_sigma.asDiagonal() * (svd.matrixU().transpose() * ones));
  const double denom = ones.dot(g_pinv_ones);

  AndersonWeights out;
  if (!(std::abs(denom) >= 1e-14) || !std::isfinite(denom)) {
    out.degenerate = true;
  } else {
    out.pi = g_pinv_ones / denom;
    out.degenerate = !out.pi.allFinite();
  }
  if (out.degenerate) {
    out.pi = Vector::Zero(cols);
    out.pi(cols - 1) = 1.0;
  }
  return out;
}

AcceleratedStep accelerated_step(const AndersonMemory& memory,
                                 const AndersonConfig& config) {
  config.validate();
  if (memory.empty()) throw DomainError("anderson: memory is empty");
  const auto weights = anderson_weights(memory, config.ridge, config.svd_tol);
  const Matrix t = memory.mapped();
  AcceleratedStep step;
  step.weights = weights.pi;
  step.fell_back = weights.degenerate;
  if (weights.degenerate || memory.columns() == 1) {
    step.state = t.col(t.cols() - 1);
  } else {
    step.state = t * weights.pi;
  }
  return step;
}

}  // namespace opsplit
