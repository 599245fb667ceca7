#include "opsplit/scheme.hpp"

#include <cmath>
#include <sstream>

namespace opsplit {
namespace {

struct RoundCoefficients {
  double alpha;
  double beta;
  double gamma;
  double eta;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

RoundCoefficients evaluate(const SchemeParams& params, std::int64_t t) {
  RoundCoefficients c{params.alpha.at(t), params.beta.at(t), params.gamma.at(t),
                      params.eta.at(t)};
  if (!(c.eta > 0.0) || !std::isfinite(c.eta)) {
    throw DomainError("round " + std::to_string(t) + ": eta_t = " + fmt(c.eta) +
                      " is not positive");
  }
  if (params.anderson && params.anderson->tau > 0) {
    // T is nonexpansive only inside these ranges.
    if (c.alpha > 2.0 || c.beta > 2.0 || c.gamma > 1.0) {
      throw DomainError("round " + std::to_string(t) + ": (alpha, beta, gamma) = (" +
                        fmt(c.alpha) + ", " + fmt(c.beta) + ", " + fmt(c.gamma) +
                        ") outside [0,2]x[0,2]x[0,1] with acceleration enabled");
    }
  }
  return c;
}

}  // namespace

void SchemeParams::validate() const {
  if (!(participation > 0.0 && participation <= 1.0)) {
    throw DomainError("participation must lie in (0,1], got " + fmt(participation));
  }
  switch (local.kind) {
    case LocalSolver::Kind::GradK:
      if (local.k < 1) throw DomainError("local solver: k must be >= 1");
      if (local.batch && *local.batch < 1) {
        throw DomainError("local solver: batch size must be >= 1");
      }
      break;
    case LocalSolver::Kind::IterativeProx:
      local.prox_spec.validate();
      if (local.prox_spec.mode != ProxSolverSpec::Mode::GradientDescent) {
        throw DomainError("local solver: iterative prox needs GradientDescent mode");
      }
      break;
    case LocalSolver::Kind::ExactProx:
      break;
  }
  if (anderson) anderson->validate();
}

void SchemeParams::validate_against(const FederatedProblem& problem) const {
  validate();
  if (local.kind == LocalSolver::Kind::GradK && local.batch) {
    for (Index i = 0; i < problem.users(); ++i) {
      if (*local.batch > problem.user(i).samples()) {
        throw DomainError("local solver: batch size " + std::to_string(*local.batch) +
                          " exceeds user " + std::to_string(i) + "'s " +
                          std::to_string(problem.user(i).samples()) + " samples");
      }
    }
  }
}

Preset parse_preset(std::string_view name) {
  if (name == "FedAvg") return Preset::FedAvg;
  if (name == "FedProx") return Preset::FedProx;
  if (name == "FedSplit") return Preset::FedSplit;
  if (name == "FedPi") return Preset::FedPi;
  if (name == "FedRP") return Preset::FedRP;
  if (name == "ReflectGrad") return Preset::ReflectGrad;
  if (name == "ReflectProx") return Preset::ReflectProx;
  throw DomainError("unknown preset '" + std::string(name) +
                    "' (expected FedAvg, FedProx, FedSplit, FedPi, FedRP, "
                    "ReflectGrad or ReflectProx)");
}

std::string_view preset_name(Preset p) {
  switch (p) {
    case Preset::FedAvg: return "FedAvg";
    case Preset::FedProx: return "FedProx";
    case Preset::FedSplit: return "FedSplit";
    case Preset::FedPi: return "FedPi";
    case Preset::FedRP: return "FedRP";
    case Preset::ReflectGrad: return "ReflectGrad";
    case Preset::ReflectProx: return "ReflectProx";
  }
  return "?";
}

SchemeParams preset(Preset p, int k, Schedule eta) {
  if (k < 1) throw DomainError("preset: k must be >= 1");
  SchemeParams params;
  params.eta = eta;
  auto set = [&](double a, double b, double g, LocalSolver local) {
    params.alpha = Schedule::constant(a);
    params.beta = Schedule::constant(b);
    params.gamma = Schedule::constant(g);
    params.local = local;
  };
  switch (p) {
    case Preset::FedAvg: set(1, 1, 1, LocalSolver::grad_k(k)); break;
    case Preset::FedProx: set(1, 1, 1, LocalSolver::exact_prox()); break;
    case Preset::FedSplit: set(2, 2, 1, LocalSolver::exact_prox()); break;
    case Preset::FedPi: set(2, 2, 0.5, LocalSolver::exact_prox()); break;
    case Preset::FedRP: set(2, 1, 1, LocalSolver::exact_prox()); break;
    case Preset::ReflectGrad: set(1, 2, 1, LocalSolver::grad_k(k)); break;
    case Preset::ReflectProx: set(1, 2, 1, LocalSolver::exact_prox()); break;
  }
  return params;
}

IterateState IterateState::initial(const FederatedProblem& problem, const Vector& start) {
  if (start.size() != problem.dim()) {
    throw DimensionError("initial state: start has dimension " +
                         std::to_string(start.size()) + ", problem has " +
                         std::to_string(problem.dim()));
  }
  auto s = initial(StackedState::replicate(problem.users(), start));
  s.consensus_point = start;
  return s;
}

IterateState IterateState::initial(const StackedState& start) {
  IterateState s;
  s.u = start;
  s.z = start;
  s.w = start;
  s.consensus_point = Vector::Zero(start.dim());
  s.ergodic_numerator = StackedState(start.users(), start.dim());
  return s;
}

StochasticContext::StochasticContext(std::uint64_t seed,
                                     const FederatedProblem& problem,
                                     const SchemeParams& params)
    : sampler_(derive_seed(seed, 0)) {
  if (params.local.kind == LocalSolver::Kind::GradK && params.local.batch) {
    cursors_.reserve(static_cast<std::size_t>(problem.users()));
    for (Index i = 0; i < problem.users(); ++i) {
      cursors_.emplace_back(problem.user(i).samples(), *params.local.batch,
                            derive_seed(seed, static_cast<std::uint64_t>(i) + 1));
    }
  }
}

MinibatchCursor* StochasticContext::cursor(Index user) {
  if (cursors_.empty()) return nullptr;
  return &cursors_.at(static_cast<std::size_t>(user));
}

std::vector<Index> sample_users(Index users, double p, std::mt19937_64& rng,
                                std::uint64_t* redraws) {
  if (!(p > 0.0 && p <= 1.0)) {
    throw DomainError("sample_users: p must lie in (0,1], got " + fmt(p));
  }
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(users));
  if (p == 1.0) {
    for (Index i = 0; i < users; ++i) chosen.push_back(i);
    return chosen;
  }
  std::bernoulli_distribution coin(p);
  while (true) {
    chosen.clear();
    for (Index i = 0; i < users; ++i) {
      if (coin(rng)) chosen.push_back(i);
    }
    if (!chosen.empty()) return chosen;
    if (redraws != nullptr) ++*redraws;
  }
}

Vector local_update(const UserLoss& loss, const Vector& u, double eta,
                    const LocalSolver& local, MinibatchCursor* cursor) {
  switch (local.kind) {
    case LocalSolver::Kind::ExactProx: return prox(loss, u, eta);
    case LocalSolver::Kind::IterativeProx: return prox(loss, u, eta, local.prox_spec);
    case LocalSolver::Kind::GradK: return grad_step_k(loss, u, eta, local.k, cursor);
  }
  return u;
}

IterateState round(const IterateState& state, const FederatedProblem& problem,
                   const SchemeParams& params, StochasticContext& ctx) {
  if (state.u.users() != problem.users() || state.u.dim() != problem.dim() ||
      !state.u.same_shape(state.z) || !state.u.same_shape(state.w)) {
    throw DimensionError("round: state shape does not match the problem");
  }
  const std::int64_t t = state.round + 1;
  const auto c = evaluate(params, t);
  const Index m = problem.users();

  std::uint64_t redraws = 0;
  auto sample = sample_users(m, params.participation, ctx.sampler(), &redraws);
  ctx.add_empty_redraws(redraws);
  std::vector<bool> present(static_cast<std::size_t>(m), false);
  for (Index i : sample) present[static_cast<std::size_t>(i)] = true;
  const bool everyone = static_cast<Index>(sample.size()) == m;

  IterateState next;
  next.round = t;
  next.z = state.z;
  for (Index i : sample) {
    const Vector ui = state.u.block(i);
    const Vector local = local_update(problem.user(i), ui, c.eta, params.local, ctx.cursor(i));
    next.z.block(i) = (1.0 - c.alpha) * ui + c.alpha * local;
  }
  ctx.set_last_sample(std::move(sample));

  next.consensus_point = everyone
                             ? consensus_mean(next.z, problem.weights())
                             : partial_consensus_mean(next.z, problem.weights(), present);

  next.w = StackedState(m, problem.dim());
  next.u = StackedState(m, problem.dim());
  for (Index i = 0; i < m; ++i) {
    next.w.block(i) = (1.0 - c.beta) * next.z.block(i) + c.beta * next.consensus_point;
    next.u.block(i) = (1.0 - c.gamma) * state.u.block(i) + c.gamma * next.w.block(i);
  }

  next.ergodic_numerator = state.ergodic_numerator;
  next.ergodic_denominator = state.ergodic_denominator;
  if (params.ergodic_average) {
    next.ergodic_numerator.flat() += c.eta * next.w.flat();
    next.ergodic_denominator += c.eta;
  }
  return next;
}

DualState DualState::initial(const FederatedProblem& problem, const Vector& start) {
  if (start.size() != problem.dim()) {
    throw DimensionError("dual state: start dimension mismatch");
  }
  DualState s;
  s.w = StackedState::replicate(problem.users(), start);
  s.u = StackedState(problem.users(), problem.dim());
  s.z = s.w;
  return s;
}

DualState fedpi_expanded_round(const DualState& state,
                               const FederatedProblem& problem, double eta) {
  if (state.w.users() != problem.users() || state.w.dim() != problem.dim() ||
      !state.w.same_shape(state.u)) {
    throw DimensionError("fedpi_expanded_round: state shape does not match the problem");
  }
  DualState next;
  next.z = StackedState(problem.users(), problem.dim());
  for (Index i = 0; i < problem.users(); ++i) {
    next.z.block(i) = prox(problem.user(i), state.w.block(i) + state.u.block(i), eta);
  }
  next.w = project_consensus(next.z - state.u, problem.weights());
  next.u = state.u + next.w - next.z;
  return next;
}

StackedState ergodic_average(const IterateState& state) {
  if (!(state.ergodic_denominator > 0.0)) {
    throw DomainError("ergodic_average: no weighted iterates accumulated");
  }
  return (1.0 / state.ergodic_denominator) * state.ergodic_numerator;
}

Simulator::Simulator(const FederatedProblem& problem, SchemeParams params,
                     std::uint64_t seed, const Vector& start)
    : problem_(&problem),
      params_(std::move(params)),
      ctx_(seed, problem, params_),
      state_(IterateState::initial(problem, start)) {
  params_.validate_against(problem);
  if (params_.anderson && params_.anderson->tau > 0) {
    memory_.emplace(params_.anderson->tau);
  }
}

Simulator::Simulator(const FederatedProblem& problem, SchemeParams params,
                     std::uint64_t seed, const StackedState& start)
    : problem_(&problem),
      params_(std::move(params)),
      ctx_(seed, problem, params_),
      state_(IterateState::initial(start)) {
  params_.validate_against(problem);
  state_.consensus_point = consensus_mean(start, problem.weights());
  if (params_.anderson && params_.anderson->tau > 0) {
    memory_.emplace(params_.anderson->tau);
  }
}

void Simulator::step() {
  IterateState next = round(state_, *problem_, params_, ctx_);
  last_eta_ = params_.eta.at(next.round);
  last_accelerated_ = false;
  last_weights_.reset();
  if (memory_) {
    if (params_.anderson->mode == AndersonMode::OnU) {
      accelerate_on_u(state_, next);
    } else {
      accelerate_on_projected(state_, next);
    }
  }
  state_ = std::move(next);
}

void Simulator::accelerate_on_u(const IterateState& before, IterateState& after) {
  memory_->push(before.u.flat(), after.u.flat());
  w_history_.push_back(after.w);
  z_history_.push_back(after.z);
  while (static_cast<Index>(w_history_.size()) > memory_->columns()) {
    w_history_.pop_front();
    z_history_.pop_front();
  }
  if (memory_->columns() < 2) return;

  const auto step = accelerated_step(*memory_, *params_.anderson);
  last_weights_ = AndersonWeights{step.weights, step.fell_back};
  if (step.fell_back) {
    ++fallbacks_;
    return;
  }
  const StackedState plain_w = after.w;
  after.u.flat() = step.state;
  after.w = StackedState(after.w.users(), after.w.dim());
  after.z = StackedState(after.z.users(), after.z.dim());
  for (std::size_t j = 0; j < w_history_.size(); ++j) {
    const double pj = step.weights(static_cast<Index>(j));
    after.w.flat() += pj * w_history_[j].flat();
    after.z.flat() += pj * z_history_[j].flat();
  }
  after.consensus_point = consensus_mean(after.w, problem_->weights());
  if (params_.ergodic_average) {
    after.ergodic_numerator.flat() += last_eta_ * (after.w.flat() - plain_w.flat());
  }
  last_accelerated_ = true;
}

void Simulator::accelerate_on_projected(const IterateState& before, IterateState& after) {
  memory_->push(before.consensus_point, after.consensus_point);
  if (memory_->columns() < 2) return;

  const auto step = accelerated_step(*memory_, *params_.anderson);
  last_weights_ = AndersonWeights{step.weights, step.fell_back};
  if (step.fell_back) {
    ++fallbacks_;
    return;
  }
  const std::int64_t t = after.round;
  const double beta = params_.beta.at(t);
  const double gamma = params_.gamma.at(t);
  const StackedState plain_w = after.w;
  for (Index i = 0; i < after.w.users(); ++i) {
    after.w.block(i) = (1.0 - beta) * after.z.block(i) + beta * step.state;
    after.u.block(i) = (1.0 - gamma) * before.u.block(i) + gamma * after.w.block(i);
  }
  after.consensus_point = step.state;
  if (params_.ergodic_average) {
    after.ergodic_numerator.flat() += last_eta_ * (after.w.flat() - plain_w.flat());
  }
  last_accelerated_ = true;
}

Vector Simulator::model(bool ergodic) const {
  if (ergodic && params_.ergodic_average && state_.ergodic_denominator > 0.0) {
    return consensus_mean(ergodic_average(state_), problem_->weights());
  }
  return consensus_mean(state_.w, problem_->weights());
}

}  // namespace opsplit
