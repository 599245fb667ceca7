#include "opsplit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace opsplit {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_dim(const UserLoss& loss, const Vector& w, const char* op) {
  if (w.size() != loss.dim()) {
    std::ostringstream os;
    os << op << ": expected dimension " << loss.dim() << ", got " << w.size();
    throw DimensionError(os.str());
  }
}

void check_eta(double eta, const char* op) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    std::ostringstream os;
    os << op << ": eta must be positive and finite, got " << eta;
    throw DomainError(os.str());
  }
}

// log(1 + exp(x)) without overflow.
double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// 1 / (1 + exp(−x)).
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector logistic_rows_gradient(const LogisticLoss& l, const Vector& w,
                              Index begin, Index end) {
  const Index rows = end - begin;
  const auto block = l.A.middleRows(begin, rows);
  const Vector margins = block * w;
  Vector coeff(rows);
  for (Index j = 0; j < rows; ++j) {
    const double y = l.y(begin + j);
    coeff(j) = -y * sigmoid(-y * margins(j));
  }
  return block.transpose() * coeff;
}

Vector closed_form_prox(const UserLoss& loss, const Vector& w, double eta) {
  return std::visit(
      Overloaded{
          [&](const QuadraticLoss& q) -> Vector {
            // (I + ηAᵀA)x = w + ηAᵀb, diagonalised by the cached eigenbasis.
            const Vector rhs = w + eta * q.atb;
            Vector coords = q.eigvecs.transpose() * rhs;
            coords.array() /= (1.0 + eta * q.eigvals.array());
            return q.eigvecs * coords;
          },
          [&](const LogisticLoss&) -> Vector {
            throw DomainError(
                "prox: logistic loss has no closed form; use GradientDescent");
          },
          [&](const ScalarShiftedQuadratic& s) -> Vector {
            Vector out(1);
            out(0) = (w(0) + eta * s.curvature * s.center) /
                     (1.0 + eta * s.curvature);
            return out;
          },
          [&](const AbsoluteDeviation& a) -> Vector {
            const Vector diff = w - a.anchor;
            const double r = diff.norm();
            if (r <= eta) return a.anchor;
            return a.anchor + (1.0 - eta / r) * diff;
          },
          [&](const NegPartQuadratic&) -> Vector {
            Vector out(1);
            out(0) = w(0) >= 0.0 ? w(0) : w(0) / (1.0 + eta);
            return out;
          }},
      loss.payload());
}

Vector iterative_prox(const UserLoss& loss, const Vector& w, double eta,
                      const ProxSolverSpec& spec) {
  const double step = spec.inner_step_size.value_or(
      1.0 / (loss.smoothness() + 1.0 / eta));
  Vector x = w;
  for (int s = 0; s < spec.inner_steps; ++s) {
    x -= step * (gradient(loss, x) + (x - w) / eta);
  }
  return x;
}

}  // namespace

UserLoss UserLoss::quadratic(Matrix A, Vector b) {
  if (A.rows() != b.size()) {
    throw DimensionError("quadratic loss: A has " + std::to_string(A.rows()) +
                         " rows but b has " + std::to_string(b.size()));
  }
  if (A.cols() < 1) throw DimensionError("quadratic loss: A has no columns");
  QuadraticLoss q;
  q.gram = A.transpose() * A;
  q.atb = A.transpose() * b;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(q.gram);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("quadratic loss: eigendecomposition failed");
  }
  q.eigvecs = eig.eigenvectors();
  q.eigvals = eig.eigenvalues().cwiseMax(0.0);
  q.A = std::move(A);
  q.b = std::move(b);
  return UserLoss(std::move(q));
}

UserLoss UserLoss::logistic(Matrix A, Vector y, double reg_weight) {
  if (A.rows() != y.size()) {
    throw DimensionError("logistic loss: A has " + std::to_string(A.rows()) +
                         " rows but y has " + std::to_string(y.size()));
  }
  if (A.cols() < 1) throw DimensionError("logistic loss: A has no columns");
  if (!(reg_weight >= 0.0)) {
    throw DomainError("logistic loss: reg_weight must be >= 0");
  }
  for (Index j = 0; j < y.size(); ++j) {
    if (y(j) != 1.0 && y(j) != -1.0) {
      throw DomainError("logistic loss: labels must be +1 or -1");
    }
  }
  return UserLoss(LogisticLoss{std::move(A), std::move(y), reg_weight});
}

UserLoss UserLoss::scalar_shifted_quadratic(double curvature, double center) {
  if (!(curvature > 0.0)) {
    throw DomainError("scalar shifted quadratic: curvature must be > 0");
  }
  return UserLoss(ScalarShiftedQuadratic{curvature, center});
}

UserLoss UserLoss::absolute_deviation(Vector anchor) {
  if (anchor.size() < 1) throw DimensionError("absolute deviation: empty anchor");
  return UserLoss(AbsoluteDeviation{std::move(anchor)});
}

UserLoss UserLoss::neg_part_quadratic() { return UserLoss(NegPartQuadratic{}); }

Index UserLoss::dim() const {
  return std::visit(Overloaded{[](const QuadraticLoss& q) { return q.A.cols(); },
                               [](const LogisticLoss& l) { return l.A.cols(); },
                               [](const ScalarShiftedQuadratic&) { return Index{1}; },
                               [](const AbsoluteDeviation& a) { return a.anchor.size(); },
                               [](const NegPartQuadratic&) { return Index{1}; }},
                    payload());
}

Index UserLoss::samples() const {
  return std::visit(Overloaded{[](const QuadraticLoss& q) { return q.A.rows(); },
                               [](const LogisticLoss& l) { return l.A.rows(); },
                               [](const auto&) { return Index{1}; }},
                    payload());
}

bool UserLoss::has_closed_form_prox() const {
  return !std::holds_alternative<LogisticLoss>(payload());
}

bool UserLoss::is_smooth() const {
  return !std::holds_alternative<AbsoluteDeviation>(payload());
}

double UserLoss::smoothness() const {
  return std::visit(
      Overloaded{[](const QuadraticLoss& q) { return q.eigvals.maxCoeff(); },
                 [](const LogisticLoss& l) {
                   return 0.25 * l.A.squaredNorm() + l.reg_weight;
                 },
                 [](const ScalarShiftedQuadratic& s) { return s.curvature; },
                 [](const AbsoluteDeviation&) { return 0.0; },
                 [](const NegPartQuadratic&) { return 1.0; }},
      payload());
}

const char* UserLoss::kind_name() const {
  return std::visit(
      Overloaded{[](const QuadraticLoss&) { return "quadratic"; },
                 [](const LogisticLoss&) { return "logistic"; },
                 [](const ScalarShiftedQuadratic&) { return "scalar_shifted_quadratic"; },
                 [](const AbsoluteDeviation&) { return "absolute_deviation"; },
                 [](const NegPartQuadratic&) { return "neg_part_quadratic"; }},
      payload());
}

void ProxSolverSpec::validate() const {
  if (mode == Mode::GradientDescent) {
    if (inner_steps < 1) throw DomainError("prox solver: inner_steps must be >= 1");
    if (inner_step_size && !(*inner_step_size > 0.0)) {
      throw DomainError("prox solver: inner_step_size must be > 0");
    }
  }
}

ProxSolverSpec default_prox_spec(const UserLoss& loss) {
  return loss.has_closed_form_prox() ? ProxSolverSpec::closed_form()
                                     : ProxSolverSpec::gradient_descent();
}

double value(const UserLoss& loss, const Vector& w) {
  check_dim(loss, w, "value");
  return std::visit(
      Overloaded{
          [&](const QuadraticLoss& q) {
            return 0.5 * (q.A * w - q.b).squaredNorm();
          },
          [&](const LogisticLoss& l) {
            const Vector margins = l.A * w;
            double total = 0.0;
            for (Index j = 0; j < margins.size(); ++j) {
              total += softplus(-l.y(j) * margins(j));
            }
            return total + 0.5 * l.reg_weight * w.squaredNorm();
          },
          [&](const ScalarShiftedQuadratic& s) {
            const double d = w(0) - s.center;
            return 0.5 * s.curvature * d * d;
          },
          [&](const AbsoluteDeviation& a) { return (w - a.anchor).norm(); },
          [&](const NegPartQuadratic&) {
            const double neg = std::min(w(0), 0.0);
            return 0.5 * neg * neg;
          }},
      loss.payload());
}

Vector gradient(const UserLoss& loss, const Vector& w) {
  check_dim(loss, w, "gradient");
  return std::visit(
      Overloaded{
          [&](const QuadraticLoss& q) -> Vector { return q.gram * w - q.atb; },
          [&](const LogisticLoss& l) -> Vector {
            return logistic_rows_gradient(l, w, 0, l.A.rows()) + l.reg_weight * w;
          },
          [&](const ScalarShiftedQuadratic& s) -> Vector {
            Vector g(1);
            g(0) = s.curvature * (w(0) - s.center);
            return g;
          },
          [&](const AbsoluteDeviation& a) -> Vector {
            const Vector diff = w - a.anchor;
            const double r = diff.norm();
            if (r == 0.0) return Vector::Zero(w.size());
            return diff / r;
          },
          [&](const NegPartQuadratic&) -> Vector {
            Vector g(1);
            g(0) = std::min(w(0), 0.0);
            return g;
          }},
      loss.payload());
}

Vector batch_gradient(const UserLoss& loss, const Vector& w, Index row_begin,
                      Index row_end) {
  check_dim(loss, w, "batch_gradient");
  const Index n = loss.samples();
  if (row_begin < 0 || row_end > n || row_begin >= row_end) {
    throw DimensionError("batch_gradient: invalid row range");
  }
  const double scale = static_cast<double>(n) / static_cast<double>(row_end - row_begin);
  return std::visit(
      Overloaded{
          [&](const QuadraticLoss& q) -> Vector {
            const Index rows = row_end - row_begin;
            const auto block = q.A.middleRows(row_begin, rows);
            return scale * (block.transpose() *
                            (block * w - q.b.segment(row_begin, rows)));
          },
          [&](const LogisticLoss& l) -> Vector {
            return scale * logistic_rows_gradient(l, w, row_begin, row_end) +
                   l.reg_weight * w;
          },
          [&](const auto&) -> Vector { return gradient(loss, w); }},
      loss.payload());
}

Vector prox(const UserLoss& loss, const Vector& w, double eta,
            const ProxSolverSpec& spec) {
  check_dim(loss, w, "prox");
  check_eta(eta, "prox");
  spec.validate();
  if (spec.mode == ProxSolverSpec::Mode::ClosedForm) {
    return closed_form_prox(loss, w, eta);
  }
  return iterative_prox(loss, w, eta, spec);
}

Vector reflector(const UserLoss& loss, const Vector& w, double eta,
                 const ProxSolverSpec& spec) {
  return 2.0 * prox(loss, w, eta, spec) - w;
}

double envelope_value(const UserLoss& loss, const Vector& w, double eta,
                      const ProxSolverSpec& spec) {
  const Vector p = prox(loss, w, eta, spec);
  return value(loss, p) + (p - w).squaredNorm() / (2.0 * eta);
}

MinibatchCursor::MinibatchCursor(Index rows, Index batch_size,
                                 std::uint64_t seed)
    : rows_(rows), batch_size_(batch_size), engine_(seed) {
  if (batch_size < 1 || batch_size > rows) {
    throw DomainError("minibatch: batch size must lie in [1, " +
                      std::to_string(rows) + "], got " +
                      std::to_string(batch_size));
  }
  order_.resize(static_cast<std::size_t>((rows + batch_size - 1) / batch_size));
  reshuffle();
}

void MinibatchCursor::reshuffle() {
  std::iota(order_.begin(), order_.end(), Index{0});
  std::shuffle(order_.begin(), order_.end(), engine_);
  position_ = 0;
  ++epochs_;
}

std::pair<Index, Index> MinibatchCursor::next() {
  if (position_ == order_.size()) reshuffle();
  const Index batch = order_[position_++];
  const Index begin = batch * batch_size_;
  return {begin, std::min(begin + batch_size_, rows_)};
}

Vector grad_step_k(const UserLoss& loss, const Vector& w, double eta, int k,
                   MinibatchCursor* batches) {
  check_dim(loss, w, "grad_step_k");
  check_eta(eta, "grad_step_k");
  if (k < 1) throw DomainError("grad_step_k: k must be >= 1");
  Vector x = w;
  for (int s = 0; s < k; ++s) {
    if (batches != nullptr) {
      const auto [begin, end] = batches->next();
      x -= eta * batch_gradient(loss, x, begin, end);
    } else {
      x -= eta * gradient(loss, x);
    }
  }
  return x;
}

}  // namespace opsplit
