#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "opsplit/problem.hpp"
#include "opsplit/schedule.hpp"
#include "opsplit/scheme.hpp"

namespace opsplit {

/// b_i = A_i(w⋆ + δ·u_i) + ε_i with A_i, w⋆ standard normal, u_i a random
/// unit direction and ε_i ~ N(0, σ²I).
struct LeastSquaresSpec {
  Index users = 10;
  Index dim = 20;
  Index samples = 200;
  double noise_variance = 0.25;
  double heterogeneity_shift = 0.0;
};

/// Labels y = ±1 with P{y = 1} = sigmoid(aᵀw₀), w₀ = truth_scale·N(0, I).
/// Each user carries the ridge ‖w‖²/(2·m·n_i).
struct LogisticSpec {
  Index users = 5;
  Index dim = 20;
  Index samples = 200;
  double truth_scale = 1.0;
};

struct GenSpec {
  std::variant<LeastSquaresSpec, LogisticSpec> kind;
  std::uint64_t seed = 0;

  void validate() const;
};

FederatedProblem gen_least_squares(const GenSpec& spec);
FederatedProblem gen_logistic(const GenSpec& spec);
/// Dispatches on spec.kind.
FederatedProblem generate(const GenSpec& spec);

/// Minimiser of Σλ_i ½‖A_i w − b_i‖² from the normal equations.
Vector solve_global_ls(const FederatedProblem& problem);

/// Gradient descent with backtracking on Σλ_i f_i until ‖∇f‖ ≤ tol.
Vector oracle_logistic(const FederatedProblem& problem, double tol = 1e-10,
                       const std::optional<Vector>& start = std::nullopt);

/// Limit point of FedAvg with k local steps at constant η on quadratic users:
/// (Σλ_i S_i Q_i)⁻¹ Σλ_i S_i A_iᵀb_i with S_i = (1/k)Σ_{j<k}(I − ηQ_i)^j.
Vector fedavg_fixed_point(const FederatedProblem& problem, double eta, int k);

/// fedavg_fixed_point with S_i replaced by I − (η(k−1)/2)·Q_i.
Vector taylor_fixed_point(const FederatedProblem& problem, double eta_k_minus_1);

/// (1/m) Σ_i ‖∇f_i(w⋆)‖².
double heterogeneity_measure(const FederatedProblem& problem);

/// Minimiser of Σλ_i env_η f_i. Closed form for quadratic users; otherwise
/// the FedProx map is iterated (with Anderson extrapolation) until
/// ‖∇f̃‖ ≤ tol.
RegularizedSolution solve_regularized(const FederatedProblem& problem, double eta,
                                      double tol = 1e-11);

/// Fills true_solution/true_optimum from the matching oracle.
void attach_oracles(FederatedProblem& problem);

/// Users f₊ = ½(w + 1)² and f₋ = ½(w − 1)², with f₋ doubled when `doubled`
/// (then the minimiser of f₊ + 2f₋ is 1/3). Uniform weights.
FederatedProblem scalar_tightness_problem(bool doubled);

/// m copies of ½((−w)₊)². Writes a warning to `warnings` when η is not the
/// constant 1, where the reflector stops being idempotent.
FederatedProblem neg_part_problem(Index users, const Schedule& eta, std::ostream& warnings);

struct RoundMetrics {
  std::int64_t round = 0;
  double objective = 0.0;
  double gap = 0.0;
  double regularized_gap = 0.0;
  double consensus_residual = 0.0;
  double eta = 0.0;
  double wall_ms = 0.0;
  bool accelerated = false;

  // Present only when the scheme keeps an ergodic average.
  std::optional<double> ergodic_objective;
  std::optional<double> ergodic_gap;

  bool operator==(const RoundMetrics&) const = default;
};

/// Metrics at the consensus point P_H(w) of `state`. regularized_gap is NaN
/// unless problem.regularized matches a constant η of `params`; gap is NaN
/// without a known optimum.
RoundMetrics compute_metrics(const IterateState& state, const FederatedProblem& problem,
                             const SchemeParams& params);

std::string csv_header();
/// One CSV row (no newline). When the ergodic fields are set they replace
/// objective and gap.
std::string format_csv_row(const RoundMetrics& m);
RoundMetrics parse_csv_row(std::string_view line);

/// Plain-text container; every float is written in hexadecimal so a read
/// gives back the exact bits.
void write_problem(std::ostream& out, const FederatedProblem& problem);
FederatedProblem read_problem(std::istream& in);

}  // namespace opsplit
