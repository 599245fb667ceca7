#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include "opsplit/common.hpp"

namespace opsplit {

/// f(w) = ½‖Aw − b‖². The Gram matrix, Aᵀb and the eigendecomposition of
/// AᵀA are cached at construction.
struct QuadraticLoss {
  Matrix A;
  Vector b;
  Matrix gram;      // AᵀA
  Vector atb;       // Aᵀb
  Matrix eigvecs;   // AᵀA = V diag(λ) Vᵀ
  Vector eigvals;   // ascending
};

/// f(w) = Σ_j log(1 + exp(−y_j a_jᵀw)) + reg_weight·‖w‖²/2, y_j ∈ {−1, +1}.
struct LogisticLoss {
  Matrix A;
  Vector y;
  double reg_weight = 0.0;
};

/// f(w) = (a/2)(w − c)², d = 1.
struct ScalarShiftedQuadratic {
  double curvature = 1.0;
  double center = 0.0;
};

/// f(w) = ‖w − c‖₂. 1-Lipschitz, nonsmooth at c.
struct AbsoluteDeviation {
  Vector anchor;
};

/// f(w) = ½((−w)₊)², d = 1. Its reflector at η = 1 is w ↦ (w)₊.
struct NegPartQuadratic {};

/// One user's objective. Immutable after construction; copies share the
/// payload.
class UserLoss {
 public:
  using Payload = std::variant<QuadraticLoss, LogisticLoss,
                               ScalarShiftedQuadratic, AbsoluteDeviation,
                               NegPartQuadratic>;

  static UserLoss quadratic(Matrix A, Vector b);
  static UserLoss logistic(Matrix A, Vector y, double reg_weight);
  static UserLoss scalar_shifted_quadratic(double curvature, double center);
  static UserLoss absolute_deviation(Vector anchor);
  static UserLoss neg_part_quadratic();

  const Payload& payload() const { return *payload_; }

  template <class T>
  const T* get_if() const {
    return std::get_if<T>(payload_.get());
  }

  Index dim() const;
  /// Number of data rows (1 for the analytic losses).
  Index samples() const;
  bool has_closed_form_prox() const;
  bool is_smooth() const;
  /// Upper bound on the gradient Lipschitz constant. Logistic uses the
  /// conservative ¼‖A‖²_F + reg_weight; AbsoluteDeviation reports 0.
  double smoothness() const;
  /// Name used in problem files and diagnostics.
  const char* kind_name() const;

 private:
  explicit UserLoss(Payload p)
      : payload_(std::make_shared<const Payload>(std::move(p))) {}
  std::shared_ptr<const Payload> payload_;
};

/// How the proximal map is evaluated.
struct ProxSolverSpec {
  enum class Mode { ClosedForm, GradientDescent };

  Mode mode = Mode::ClosedForm;
  int inner_steps = 100;
  /// Absent: 1/(L + 1/η), L = UserLoss::smoothness().
  std::optional<double> inner_step_size;

  static ProxSolverSpec closed_form() { return {}; }
  static ProxSolverSpec gradient_descent(
      int steps = 100, std::optional<double> step = std::nullopt) {
    return {Mode::GradientDescent, steps, step};
  }

  void validate() const;
};

/// ClosedForm where one exists, otherwise 100 inner gradient steps.
ProxSolverSpec default_prox_spec(const UserLoss& loss);

double value(const UserLoss& loss, const Vector& w);

/// ∇f(w); at the kink of AbsoluteDeviation (w = c) the zero subgradient.
Vector gradient(const UserLoss& loss, const Vector& w);

/// Gradient of the rows [row_begin, row_end) of a sum-form loss, rescaled by
/// n/(row_end − row_begin). The logistic ridge term is added in full.
/// Analytic losses ignore the range and return the full gradient.
Vector batch_gradient(const UserLoss& loss, const Vector& w, Index row_begin,
                      Index row_end);

/// argmin_x ‖x − w‖²/(2η) + f(x).
Vector prox(const UserLoss& loss, const Vector& w, double eta,
            const ProxSolverSpec& spec);
inline Vector prox(const UserLoss& loss, const Vector& w, double eta) {
  return prox(loss, w, eta, default_prox_spec(loss));
}

/// 2·prox(w) − w.
Vector reflector(const UserLoss& loss, const Vector& w, double eta,
                 const ProxSolverSpec& spec);
inline Vector reflector(const UserLoss& loss, const Vector& w, double eta) {
  return reflector(loss, w, eta, default_prox_spec(loss));
}

/// Moreau envelope f(p) + ‖p − w‖²/(2η), p = prox(w).
double envelope_value(const UserLoss& loss, const Vector& w, double eta,
                      const ProxSolverSpec& spec);
inline double envelope_value(const UserLoss& loss, const Vector& w,
                             double eta) {
  return envelope_value(loss, w, eta, default_prox_spec(loss));
}

/// Fixed contiguous minibatches of a user's rows, visited in an order that is
/// reshuffled at the start of every epoch.
class MinibatchCursor {
 public:
  MinibatchCursor(Index rows, Index batch_size, std::uint64_t seed);

  /// Next batch as a half-open row range.
  std::pair<Index, Index> next();

  Index batch_size() const { return batch_size_; }
  Index batch_count() const { return static_cast<Index>(order_.size()); }
  std::uint64_t epochs_started() const { return epochs_; }

 private:
  void reshuffle();

  Index rows_;
  Index batch_size_;
  std::mt19937_64 engine_;
  std::vector<Index> order_;
  std::size_t position_ = 0;
  std::uint64_t epochs_ = 0;
};

/// k explicit gradient steps w ← w − η∇f(w); with a cursor each step uses the
/// next minibatch gradient instead.
Vector grad_step_k(const UserLoss& loss, const Vector& w, double eta, int k,
                   MinibatchCursor* batches = nullptr);

}  // namespace opsplit
