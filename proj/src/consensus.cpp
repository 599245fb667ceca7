#include "opsplit/consensus.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace opsplit {
namespace {

void check_weights(const StackedState& x, const WeightVector& weights,
                   const char* op) {
  if (x.users() != weights.size()) {
    std::ostringstream os;
    os << op << ": state has " << x.users() << " blocks but " << weights.size()
       << " weights";
    throw DimensionError(os.str());
  }
}

void check_pair(const StackedState& x, const StackedState& z, const char* op) {
  if (!x.same_shape(z)) {
    std::ostringstream os;
    os << op << ": shape " << x.users() << "x" << x.dim() << " vs "
       << z.users() << "x" << z.dim();
    throw DimensionError(os.str());
  }
}

}  // namespace

StackedState::StackedState(Index users, Index dim)
    : StackedState(users, dim, Vector::Zero(users * dim)) {}

StackedState::StackedState(Index users, Index dim, Vector flat)
    : users_(users), dim_(dim), flat_(std::move(flat)) {
  if (users < 1 || dim < 1) {
    throw DimensionError("stacked state: need at least one user and one dimension");
  }
  if (flat_.size() != users * dim) {
    throw DimensionError("stacked state: payload length does not match users*dim");
  }
}

StackedState StackedState::replicate(Index users, const Vector& block) {
  StackedState s(users, block.size());
  for (Index i = 0; i < users; ++i) s.block(i) = block;
  return s;
}

StackedState& StackedState::operator+=(const StackedState& o) {
  check_pair(*this, o, "operator+=");
  flat_ += o.flat_;
  return *this;
}

StackedState& StackedState::operator-=(const StackedState& o) {
  check_pair(*this, o, "operator-=");
  flat_ -= o.flat_;
  return *this;
}

StackedState& StackedState::operator*=(double s) {
  flat_ *= s;
  return *this;
}

WeightVector::WeightVector(std::vector<double> weights)
    : weights_(std::move(weights)) {
  if (weights_.empty()) throw DimensionError("weights: need at least one user");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw DomainError("weights: every weight must be finite and nonnegative");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "weights: must sum to 1, got " << total;
    throw DomainError(os.str());
  }
}

WeightVector WeightVector::uniform(Index users) {
  if (users < 1) throw DimensionError("weights: need at least one user");
  return WeightVector(std::vector<double>(static_cast<std::size_t>(users),
                                          1.0 / static_cast<double>(users)));
}

double weighted_inner(const StackedState& x, const StackedState& z,
                      const WeightVector& weights) {
  check_pair(x, z, "weighted_inner");
  check_weights(x, weights, "weighted_inner");
  double total = 0.0;
  for (Index i = 0; i < x.users(); ++i) {
    total += weights[i] * x.block(i).dot(z.block(i));
  }
  return total;
}

double weighted_norm(const StackedState& x, const WeightVector& weights) {
  return std::sqrt(weighted_inner(x, x, weights));
}

Vector consensus_mean(const StackedState& x, const WeightVector& weights) {
  check_weights(x, weights, "consensus_mean");
  Vector mean = Vector::Zero(x.dim());
  for (Index i = 0; i < x.users(); ++i) mean += weights[i] * x.block(i);
  return mean;
}

Vector partial_consensus_mean(const StackedState& x, const WeightVector& weights,
                              const std::vector<bool>& present) {
  check_weights(x, weights, "partial_consensus_mean");
  if (static_cast<Index>(present.size()) != x.users()) {
    throw DimensionError("partial_consensus_mean: mask length mismatch");
  }
  double mass = 0.0;
  for (Index i = 0; i < x.users(); ++i) {
    if (present[static_cast<std::size_t>(i)]) mass += weights[i];
  }
  if (!(mass > 0.0)) {
    throw DomainError("partial_consensus_mean: present users carry no weight");
  }
  Vector mean = Vector::Zero(x.dim());
  for (Index i = 0; i < x.users(); ++i) {
    if (present[static_cast<std::size_t>(i)]) {
      mean += (weights[i] / mass) * x.block(i);
    }
  }
  return mean;
}

StackedState project_consensus(const StackedState& x, const WeightVector& weights) {
  return StackedState::replicate(x.users(), consensus_mean(x, weights));
}

StackedState reflect_consensus(const StackedState& x, const WeightVector& weights) {
  const Vector twice_mean = 2.0 * consensus_mean(x, weights);
  StackedState out(x.users(), x.dim());
  for (Index i = 0; i < x.users(); ++i) out.block(i) = twice_mean - x.block(i);
  return out;
}

double complement_residual(const StackedState& x, const WeightVector& weights) {
  return consensus_mean(x, weights).norm();
}

}  // namespace opsplit
