#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "opsplit/anderson.hpp"
#include "opsplit/consensus.hpp"
#include "opsplit/losses.hpp"
#include "opsplit/problem.hpp"
#include "opsplit/schedule.hpp"

namespace opsplit {

/// What each user computes on its block u_i in the first half of a round.
struct LocalSolver {
  enum class Kind { ExactProx, IterativeProx, GradK };

  Kind kind = Kind::ExactProx;
  ProxSolverSpec prox_spec;   // IterativeProx only
  int k = 1;                  // GradK only
  std::optional<Index> batch; // GradK only; minibatch size B

  static LocalSolver exact_prox() { return {}; }
  static LocalSolver iterative_prox(ProxSolverSpec spec) {
    return {Kind::IterativeProx, spec, 1, std::nullopt};
  }
  static LocalSolver grad_k(int k, std::optional<Index> batch = std::nullopt) {
    return {Kind::GradK, {}, k, batch};
  }

  bool uses_prox() const { return kind != Kind::GradK; }
};

/// Parameters of the grand iteration
///   z = (1−α)u + α·Local(u)
///   w = (1−β)z + β·P_H(z)
///   u ← (1−γ)u + γ·w
struct SchemeParams {
  Schedule alpha = Schedule::constant(1.0);
  Schedule beta = Schedule::constant(1.0);
  Schedule gamma = Schedule::constant(1.0);
  Schedule eta = Schedule::constant(1.0);
  LocalSolver local;
  /// Probability that a user takes part in a round.
  double participation = 1.0;
  std::optional<AndersonConfig> anderson;
  bool ergodic_average = false;

  /// Static checks. Per-round ranges are checked when schedules are evaluated.
  void validate() const;
  /// Throws DomainError when a batch size exceeds some user's sample count.
  void validate_against(const FederatedProblem& problem) const;
};

enum class Preset { FedAvg, FedProx, FedSplit, FedPi, FedRP, ReflectGrad, ReflectProx };

Preset parse_preset(std::string_view name);
std::string_view preset_name(Preset p);

/// Table of (α, β, γ, local solver) for each named algorithm.
/// `k` is only consulted by FedAvg and ReflectGrad.
SchemeParams preset(Preset p, int k, Schedule eta);

struct IterateState {
  StackedState u;
  StackedState z;
  StackedState w;
  /// Consensus point used in the last projection step.
  Vector consensus_point;
  StackedState ergodic_numerator;
  double ergodic_denominator = 0.0;
  std::int64_t round = 0;

  /// All blocks (u, z, w) set to `start`.
  static IterateState initial(const FederatedProblem& problem, const Vector& start);
  static IterateState initial(const StackedState& start);
};

/// Random streams of one run: a sampler for participation and one minibatch
/// cursor per user, all derived from a single seed by user index.
class StochasticContext {
 public:
  StochasticContext(std::uint64_t seed, const FederatedProblem& problem,
                    const SchemeParams& params);

  std::mt19937_64& sampler() { return sampler_; }
  MinibatchCursor* cursor(Index user);
  std::uint64_t empty_redraws() const { return empty_redraws_; }
  void add_empty_redraws(std::uint64_t n) { empty_redraws_ += n; }
  /// Users that took part in the most recent round.
  const std::vector<Index>& last_sample() const { return last_sample_; }
  void set_last_sample(std::vector<Index> s) { last_sample_ = std::move(s); }

 private:
  std::mt19937_64 sampler_;
  std::vector<MinibatchCursor> cursors_;
  std::uint64_t empty_redraws_ = 0;
  std::vector<Index> last_sample_;
};

/// Each of the m users included independently with probability p; empty draws
/// are rejected and redrawn. `redraws`, when given, is incremented per
/// rejected draw. p = 1 consumes no randomness.
std::vector<Index> sample_users(Index users, double p, std::mt19937_64& rng,
                                std::uint64_t* redraws = nullptr);

/// Local(u_i) for one user under the given solver at step size eta.
Vector local_update(const UserLoss& loss, const Vector& u, double eta,
                    const LocalSolver& local, MinibatchCursor* cursor);

/// One round of the grand scheme at t = state.round + 1. Users sampled out
/// keep z_i and the projection averages present users only, with weights
/// renormalised over the present set.
IterateState round(const IterateState& state, const FederatedProblem& problem,
                   const SchemeParams& params, StochasticContext& ctx);

/// FedPi with an explicit server-side dual variable u ∈ H⊥.
struct DualState {
  StackedState w;
  StackedState u;
  StackedState z;

  static DualState initial(const FederatedProblem& problem, const Vector& start);
};

/// z ← prox_η f(w + u); w ← P_H(z − u); u ← u + w − z.
DualState fedpi_expanded_round(const DualState& state,
                               const FederatedProblem& problem, double eta);

/// (Σ_{s≤t} η_s w_s)/(Σ_{s≤t} η_s).
StackedState ergodic_average(const IterateState& state);

/// Runs the scheme round by round, applying Anderson acceleration when
/// configured.
class Simulator {
 public:
  Simulator(const FederatedProblem& problem, SchemeParams params,
            std::uint64_t seed, const Vector& start);
  Simulator(const FederatedProblem& problem, SchemeParams params,
            std::uint64_t seed, const StackedState& start);

  void step();

  const IterateState& state() const { return state_; }
  const SchemeParams& params() const { return params_; }
  const FederatedProblem& problem() const { return *problem_; }
  StochasticContext& context() { return ctx_; }

  double last_eta() const { return last_eta_; }
  bool last_step_accelerated() const { return last_accelerated_; }
  std::uint64_t anderson_fallbacks() const { return fallbacks_; }
  const std::optional<AndersonWeights>& last_weights() const { return last_weights_; }

  /// P_H(w) of the current state, or of the ergodic average when enabled and
  /// `ergodic` is true.
  Vector model(bool ergodic = false) const;

 private:
  void accelerate_on_u(const IterateState& before, IterateState& after);
  void accelerate_on_projected(const IterateState& before, IterateState& after);

  const FederatedProblem* problem_;
  SchemeParams params_;
  StochasticContext ctx_;
  IterateState state_;
  std::optional<AndersonMemory> memory_;
  std::deque<StackedState> w_history_;
  std::deque<StackedState> z_history_;
  double last_eta_ = 0.0;
  bool last_accelerated_ = false;
  std::uint64_t fallbacks_ = 0;
  std::optional<AndersonWeights> last_weights_;
};

}  // namespace opsplit
