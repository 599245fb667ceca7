#include "opsplit/experiments.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "opsplit/anderson.hpp"

namespace opsplit {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const QuadraticLoss& as_quadratic(const FederatedProblem& problem, Index i,
                                  const char* who) {
  const auto* q = problem.user(i).get_if<QuadraticLoss>();
  if (q == nullptr) {
    throw DomainError(std::string(who) + ": user " + std::to_string(i) +
                      " is " + problem.user(i).kind_name() + ", not quadratic");
  }
  return *q;
}

Vector solve_spd_or_throw(const Matrix& M, const Vector& rhs, const char* who) {
  Eigen::FullPivLU<Matrix> lu(M);
  if (!lu.isInvertible()) {
    throw NumericalError(std::string(who) + ": assembled matrix is singular");
  }
  return lu.solve(rhs);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix logistic_hessian(const LogisticLoss& l, const Vector& w) {
  const Vector margins = l.A * w;
  Vector curv(margins.size());
  for (Index j = 0; j < margins.size(); ++j) {
    const double s = sigmoid(margins(j));
    curv(j) = s * (1.0 - s);
  }
  Matrix h = l.A.transpose() * curv.asDiagonal() * l.A;
  h.diagonal().array() += l.reg_weight;
  return h;
}

// Minimises Σλ_i f_i(p_i) + (1/2η)Σλ_i‖p_i − p̄‖² over the stacked p by damped
// Newton. At the optimum p_i = prox_η f_i(p̄) and p̄ minimises the envelope sum.
RegularizedSolution regularized_logistic(const FederatedProblem& problem, double eta,
                                         double tol) {
  const Index m = problem.users();
  const Index d = problem.dim();
  const auto& lambda = problem.weights();
  Vector p(m * d);
  const Vector start = problem.true_solution.value_or(Vector::Zero(d));
  for (Index i = 0; i < m; ++i) p.segment(i * d, d) = start;

  auto mean = [&](const Vector& x) {
    Vector bar = Vector::Zero(d);
    for (Index i = 0; i < m; ++i) bar += lambda[i] * x.segment(i * d, d);
    return bar;
  };
  auto phi = [&](const Vector& x) {
    const Vector bar = mean(x);
    double total = 0.0;
    for (Index i = 0; i < m; ++i) {
      const Vector pi = x.segment(i * d, d);
      total += lambda[i] * (value(problem.user(i), pi) + (pi - bar).squaredNorm() / (2.0 * eta));
    }
    return total;
  };

  for (int iter = 0; iter < 200; ++iter) {
    const Vector bar = mean(p);
    Vector g(m * d);
    Matrix h = Matrix::Zero(m * d, m * d);
    for (Index i = 0; i < m; ++i) {
      const Vector pi = p.segment(i * d, d);
      const auto& l = *problem.user(i).get_if<LogisticLoss>();
      g.segment(i * d, d) = lambda[i] * (gradient(problem.user(i), pi) + (pi - bar) / eta);
      h.block(i * d, i * d, d, d) = lambda[i] * logistic_hessian(l, pi);
      h.block(i * d, i * d, d, d).diagonal().array() += lambda[i] / eta;
      for (Index j = 0; j < m; ++j) {
        h.block(i * d, j * d, d, d).diagonal().array() -= lambda[i] * lambda[j] / eta;
      }
    }
    // Stationarity of each block in its own scale: ∇f_i(p_i) + (p_i − p̄)/η.
    double worst = 0.0;
    for (Index i = 0; i < m; ++i) {
      if (lambda[i] > 0.0) worst = std::max(worst, g.segment(i * d, d).norm() / lambda[i]);
    }
    if (worst <= tol) break;
    const Vector step = h.ldlt().solve(-g);
    const double f0 = phi(p);
    const double slope = g.dot(step);
    double s = 1.0;
    while (s > 1e-12 && phi(p + s * step) > f0 + 1e-4 * s * slope) s *= 0.5;
    p += s * step;
  }

  RegularizedSolution out;
  out.eta = eta;
  out.solution = mean(p);
  out.optimum = phi(p);
  return out;
}

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double read_double(std::istream& in, const char* what) {
  std::string tok;
  if (!(in >> tok)) throw Error(std::string("problem file: missing ") + what);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) {
    throw Error(std::string("problem file: bad number '") + tok + "' for " + what);
  }
  return v;
}

std::string read_word(std::istream& in, const char* what) {
  std::string tok;
  if (!(in >> tok)) throw Error(std::string("problem file: missing ") + what);
  return tok;
}

void expect_word(std::istream& in, const std::string& word) {
  const auto got = read_word(in, word.c_str());
  if (got != word) {
    throw Error("problem file: expected '" + word + "', found '" + got + "'");
  }
}

Index read_index(std::istream& in, const char* what) {
  const auto tok = read_word(in, what);
  Index v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0) {
    throw Error("problem file: bad count '" + tok + "' for " + what);
  }
  return v;
}

void write_vector(std::ostream& out, const Vector& v) {
  for (Index j = 0; j < v.size(); ++j) out << (j ? " " : "") << hex(v(j));
  out << '\n';
}

void write_matrix(std::ostream& out, const Matrix& a) {
  for (Index r = 0; r < a.rows(); ++r) write_vector(out, a.row(r).transpose());
}

Vector read_vector(std::istream& in, Index n, const char* what) {
  Vector v(n);
  for (Index j = 0; j < n; ++j) v(j) = read_double(in, what);
  return v;
}

Matrix read_matrix(std::istream& in, Index rows, Index cols, const char* what) {
  Matrix a(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) a(r, c) = read_double(in, what);
  }
  return a;
}

}  // namespace

void GenSpec::validate() const {
  std::visit(
      [](const auto& s) {
        if (s.users < 1 || s.dim < 1 || s.samples < 1) {
          throw DomainError("generator: users, dim and samples must all be >= 1");
        }
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, LeastSquaresSpec>) {
          if (!(s.noise_variance >= 0.0)) {
            throw DomainError("generator: noise_variance must be >= 0");
          }
          if (!(s.heterogeneity_shift >= 0.0)) {
            throw DomainError("generator: heterogeneity_shift must be >= 0");
          }
        } else {
          if (!(s.truth_scale >= 0.0)) throw DomainError("generator: truth_scale must be >= 0");
        }
      },
      kind);
}

FederatedProblem gen_least_squares(const GenSpec& spec) {
  const auto* s = std::get_if<LeastSquaresSpec>(&spec.kind);
  if (s == nullptr) throw DomainError("gen_least_squares: spec is not least squares");
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = std::sqrt(s->noise_variance);

  Vector truth(s->dim);
  for (Index j = 0; j < s->dim; ++j) truth(j) = normal(rng);

  std::vector<UserLoss> users;
  users.reserve(static_cast<std::size_t>(s->users));
  for (Index i = 0; i < s->users; ++i) {
    Matrix A(s->samples, s->dim);
    for (Index r = 0; r < s->samples; ++r) {
      for (Index c = 0; c < s->dim; ++c) A(r, c) = normal(rng);
    }
    Vector dir(s->dim);
    for (Index j = 0; j < s->dim; ++j) dir(j) = normal(rng);
    const double norm = dir.norm();
    if (norm > 0.0) dir /= norm;
    Vector noise(s->samples);
    for (Index r = 0; r < s->samples; ++r) noise(r) = sigma * normal(rng);
    Vector b = A * (truth + s->heterogeneity_shift * dir) + noise;
    users.push_back(UserLoss::quadratic(std::move(A), std::move(b)));
  }

  FederatedProblem problem(std::move(users), WeightVector::uniform(s->users));
  problem.seed = spec.seed;
  std::ostringstream prov;
  prov << "least_squares m=" << s->users << " d=" << s->dim << " n=" << s->samples
       << " noise_variance=" << g17(s->noise_variance)
       << " shift=" << g17(s->heterogeneity_shift) << " seed=" << spec.seed;
  problem.provenance = prov.str();
  attach_oracles(problem);
  return problem;
}

FederatedProblem gen_logistic(const GenSpec& spec) {
  const auto* s = std::get_if<LogisticSpec>(&spec.kind);
  if (s == nullptr) throw DomainError("gen_logistic: spec is not logistic");
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Vector truth(s->dim);
  for (Index j = 0; j < s->dim; ++j) truth(j) = s->truth_scale * normal(rng);
  const double reg = 1.0 / (static_cast<double>(s->users) * static_cast<double>(s->samples));

  std::vector<UserLoss> users;
  users.reserve(static_cast<std::size_t>(s->users));
  for (Index i = 0; i < s->users; ++i) {
    Matrix A(s->samples, s->dim);
    for (Index r = 0; r < s->samples; ++r) {
      for (Index c = 0; c < s->dim; ++c) A(r, c) = normal(rng);
    }
    Vector y(s->samples);
    for (Index r = 0; r < s->samples; ++r) {
      const double p = sigmoid(A.row(r).dot(truth));
      y(r) = uniform(rng) < p ? 1.0 : -1.0;
    }
    users.push_back(UserLoss::logistic(std::move(A), std::move(y), reg));
  }

  FederatedProblem problem(std::move(users), WeightVector::uniform(s->users));
  problem.seed = spec.seed;
  std::ostringstream prov;
  prov << "logistic m=" << s->users << " d=" << s->dim << " n=" << s->samples
       << " truth_scale=" << g17(s->truth_scale) << " seed=" << spec.seed;
  problem.provenance = prov.str();
  attach_oracles(problem);
  return problem;
}

FederatedProblem generate(const GenSpec& spec) {
  if (std::holds_alternative<LeastSquaresSpec>(spec.kind)) return gen_least_squares(spec);
  return gen_logistic(spec);
}

Vector solve_global_ls(const FederatedProblem& problem) {
  const Index d = problem.dim();
  Matrix normal = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (Index i = 0; i < problem.users(); ++i) {
    const auto& q = as_quadratic(problem, i, "solve_global_ls");
    normal += problem.weights()[i] * q.gram;
    rhs += problem.weights()[i] * q.atb;
  }
  Eigen::LLT<Matrix> llt(normal);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("solve_global_ls: normal matrix is singular");
  }
  return llt.solve(rhs);
}

Vector oracle_logistic(const FederatedProblem& problem, double tol,
                       const std::optional<Vector>& start) {
  for (Index i = 0; i < problem.users(); ++i) {
    if (problem.user(i).get_if<LogisticLoss>() == nullptr) {
      throw DomainError("oracle_logistic: user " + std::to_string(i) + " is not logistic");
    }
  }
  if (!(tol > 0.0)) throw DomainError("oracle_logistic: tol must be > 0");
  Vector w = start.value_or(Vector::Zero(problem.dim()));
  if (w.size() != problem.dim()) throw DimensionError("oracle_logistic: start dimension");

  double f = problem.objective(w);
  Vector g = problem.objective_gradient(w);
  double step = 1.0;
  Vector prev_w, prev_g;
  constexpr long kCap = 10'000'000;
  for (long iter = 0; iter < kCap; ++iter) {
    const double gnorm2 = g.squaredNorm();
    if (std::sqrt(gnorm2) <= tol) return w;
    // Barzilai-Borwein trial step, then Armijo backtracking.
    if (prev_w.size() != 0) {
      const Vector s = w - prev_w;
      const Vector y = g - prev_g;
      const double sy = s.dot(y);
      if (sy > 0.0) step = s.squaredNorm() / sy;
    }
    while (true) {
      if (step < 1e-300) {
        throw NumericalError("oracle_logistic: line search stalled at gradient norm " +
                             g17(std::sqrt(gnorm2)));
      }
      const Vector trial = w - step * g;
      const double ft = problem.objective(trial);
      bool accept = ft <= f - 0.5 * step * gnorm2;
      Vector gt;
      // Near the optimum the decrease drowns in round-off of f; fall back to
      // asking for a smaller gradient instead.
      if (!accept && std::abs(ft - f) <= 1e-13 * std::max(1.0, std::abs(f))) {
        gt = problem.objective_gradient(trial);
        accept = gt.squaredNorm() < gnorm2;
      }
      if (accept) {
        prev_w = w;
        prev_g = g;
        w = trial;
        f = ft;
        g = gt.size() != 0 ? gt : problem.objective_gradient(w);
        break;
      }
      step *= 0.5;
    }
  }
  throw NumericalError("oracle_logistic: iteration cap exceeded");
}

Vector fedavg_fixed_point(const FederatedProblem& problem, double eta, int k) {
  if (!(eta > 0.0)) throw DomainError("fedavg_fixed_point: eta must be > 0");
  if (k < 1) throw DomainError("fedavg_fixed_point: k must be >= 1");
  const Index d = problem.dim();
  Matrix lhs = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (Index i = 0; i < problem.users(); ++i) {
    const auto& q = as_quadratic(problem, i, "fedavg_fixed_point");
    Vector s(q.eigvals.size());
    for (Index j = 0; j < q.eigvals.size(); ++j) {
      const double contraction = 1.0 - eta * q.eigvals(j);
      if (std::abs(contraction) >= 1.0 && q.eigvals(j) > 0.0) {
        throw DomainError("fedavg_fixed_point: |1 - eta*q| = " + g17(std::abs(contraction)) +
                          " >= 1 for user " + std::to_string(i) + "; local steps diverge");
      }
      double sum = 0.0;
      double power = 1.0;
      for (int r = 0; r < k; ++r) {
        sum += power;
        power *= contraction;
      }
      s(j) = sum / static_cast<double>(k);
    }
    const double li = problem.weights()[i];
    lhs += li * q.eigvecs * (s.array() * q.eigvals.array()).matrix().asDiagonal() *
           q.eigvecs.transpose();
    rhs += li * q.eigvecs * (s.asDiagonal() * (q.eigvecs.transpose() * q.atb));
  }
  return solve_spd_or_throw(lhs, rhs, "fedavg_fixed_point");
}

Vector taylor_fixed_point(const FederatedProblem& problem, double eta_k_minus_1) {
  if (!(eta_k_minus_1 >= 0.0)) throw DomainError("taylor_fixed_point: eta(k-1) must be >= 0");
  const Index d = problem.dim();
  Matrix lhs = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (Index i = 0; i < problem.users(); ++i) {
    const auto& q = as_quadratic(problem, i, "taylor_fixed_point");
    const Matrix s = Matrix::Identity(d, d) - 0.5 * eta_k_minus_1 * q.gram;
    lhs += problem.weights()[i] * s * q.gram;
    rhs += problem.weights()[i] * s * q.atb;
  }
  return solve_spd_or_throw(lhs, rhs, "taylor_fixed_point");
}

double heterogeneity_measure(const FederatedProblem& problem) {
  if (!problem.true_solution) {
    throw DomainError("heterogeneity_measure: problem has no true solution");
  }
  double total = 0.0;
  for (Index i = 0; i < problem.users(); ++i) {
    total += gradient(problem.user(i), *problem.true_solution).squaredNorm();
  }
  return total / static_cast<double>(problem.users());
}

RegularizedSolution solve_regularized(const FederatedProblem& problem, double eta,
                                      double tol) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw DomainError("solve_regularized: eta must be positive");
  }
  const Index d = problem.dim();
  if (problem.all_quadratic()) {
    // ∇f̃(w) = Σλ_i (I + ηQ_i)⁻¹(Q_i w − A_iᵀb_i).
    Matrix lhs = Matrix::Zero(d, d);
    Vector rhs = Vector::Zero(d);
    for (Index i = 0; i < problem.users(); ++i) {
      const auto& q = as_quadratic(problem, i, "solve_regularized");
      const Vector shrink = (1.0 + eta * q.eigvals.array()).inverse().matrix();
      const double li = problem.weights()[i];
      lhs += li * q.eigvecs * (shrink.array() * q.eigvals.array()).matrix().asDiagonal() *
             q.eigvecs.transpose();
      rhs += li * q.eigvecs * (shrink.asDiagonal() * (q.eigvecs.transpose() * q.atb));
    }
    RegularizedSolution out;
    out.eta = eta;
    out.solution = solve_spd_or_throw(lhs, rhs, "solve_regularized");
    out.optimum = problem.regularized_objective(out.solution, eta);
    return out;
  }
  if (problem.all_logistic()) return regularized_logistic(problem, eta, tol);

  for (Index i = 0; i < problem.users(); ++i) {
    if (!problem.user(i).has_closed_form_prox()) {
      throw DomainError("solve_regularized: mixed users without a closed-form prox");
    }
  }
  // w ← Σλ_i prox_η f_i(w) is gradient descent on f̃ with step η.
  Vector w = problem.true_solution.value_or(Vector::Zero(d));
  AndersonMemory memory(5);
  AndersonConfig config;
  config.tau = 5;
  auto map = [&](const Vector& x) {
    Vector out = Vector::Zero(d);
    for (Index i = 0; i < problem.users(); ++i) {
      out += problem.weights()[i] * prox(problem.user(i), x, eta);
    }
    return out;
  };
  for (long iter = 0; iter < 1'000'000; ++iter) {
    const Vector tw = map(w);
    if ((w - tw).norm() / eta <= tol) {
      RegularizedSolution out;
      out.eta = eta;
      out.solution = w;
      out.optimum = problem.regularized_objective(w, eta);
      return out;
    }
    memory.push(w, tw);
    const auto step = accelerated_step(memory, config);
    // Keep the plain step when extrapolation does not shrink the residual.
    const Vector candidate = step.state;
    if ((candidate - map(candidate)).norm() < (tw - map(tw)).norm()) {
      w = candidate;
    } else {
      w = tw;
      memory.clear();
    }
  }
  throw NumericalError("solve_regularized: no convergence within the iteration cap");
}

void attach_oracles(FederatedProblem& problem) {
  if (problem.all_quadratic()) {
    problem.true_solution = solve_global_ls(problem);
  } else if (problem.all_logistic()) {
    problem.true_solution = oracle_logistic(problem);
  } else {
    throw DomainError("attach_oracles: no oracle for mixed or analytic users");
  }
  problem.true_optimum = problem.objective(*problem.true_solution);
}

FederatedProblem scalar_tightness_problem(bool doubled) {
  std::vector<UserLoss> users{
      UserLoss::scalar_shifted_quadratic(1.0, -1.0),
      UserLoss::scalar_shifted_quadratic(doubled ? 2.0 : 1.0, 1.0)};
  FederatedProblem problem(std::move(users), WeightVector::uniform(2));
  const double w = doubled ? 1.0 / 3.0 : 0.0;
  problem.true_solution = Vector::Constant(1, w);
  problem.true_optimum = problem.objective(*problem.true_solution);
  problem.provenance = doubled ? "scalar f+ and 2f-" : "scalar f+ and f-";
  return problem;
}

FederatedProblem neg_part_problem(Index users, const Schedule& eta, std::ostream& warnings) {
  if (users < 1) throw DomainError("neg_part_problem: users must be >= 1");
  if (!(eta.is_constant() && eta.at(1) == 1.0)) {
    warnings << "warning: NegPartQuadratic reflector is idempotent only at eta = 1; got "
             << eta.to_string() << "\n";
  }
  std::vector<UserLoss> losses(static_cast<std::size_t>(users),
                               UserLoss::neg_part_quadratic());
  FederatedProblem problem(std::move(losses), WeightVector::uniform(users));
  // Every w >= 0 is a minimiser; 0 is the one closest to negative starts.
  problem.true_solution = Vector::Zero(1);
  problem.true_optimum = 0.0;
  problem.provenance = "neg_part m=" + std::to_string(users);
  return problem;
}

RoundMetrics compute_metrics(const IterateState& state, const FederatedProblem& problem,
                             const SchemeParams& params) {
  RoundMetrics m;
  m.round = state.round;
  m.eta = state.round >= 1 ? params.eta.at(state.round) : kNaN;

  const auto& lambda = problem.weights();
  const Vector point = consensus_mean(state.w, lambda);
  m.objective = problem.objective(point);
  m.gap = problem.true_optimum ? m.objective - *problem.true_optimum : kNaN;

  m.regularized_gap = kNaN;
  if (problem.regularized && params.eta.is_constant() &&
      params.eta.at(1) == problem.regularized->eta) {
    std::optional<ProxSolverSpec> spec;
    if (!problem.all_quadratic() && problem.all_logistic()) {
      spec = ProxSolverSpec::gradient_descent(2000);
    }
    m.regularized_gap = problem.regularized_objective(point, problem.regularized->eta, spec) -
                        problem.regularized->optimum;
  }

  const StackedState off = state.w - StackedState::replicate(state.w.users(), point);
  m.consensus_residual = weighted_norm(off, lambda);

  if (params.ergodic_average && state.ergodic_denominator > 0.0) {
    const Vector avg = consensus_mean(ergodic_average(state), lambda);
    m.ergodic_objective = problem.objective(avg);
    m.ergodic_gap = problem.true_optimum ? *m.ergodic_objective - *problem.true_optimum : kNaN;
  }
  return m;
}

std::string csv_header() {
  return "round,objective,gap,regularized_gap,consensus_residual,eta,wall_ms,accelerated";
}

std::string format_csv_row(const RoundMetrics& m) {
  std::string row = std::to_string(m.round);
  for (double v : {m.ergodic_objective.value_or(m.objective), m.ergodic_gap.value_or(m.gap),
                   m.regularized_gap, m.consensus_residual, m.eta, m.wall_ms}) {
    row += ',';
    row += g17(v);
  }
  row += m.accelerated ? ",1" : ",0";
  return row;
}

RoundMetrics parse_csv_row(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  if (cells.size() != 8) {
    throw Error("metrics row: expected 8 cells, got " + std::to_string(cells.size()));
  }
  auto number = [&](std::size_t i) {
    char* end = nullptr;
    const double v = std::strtod(cells[i].c_str(), &end);
    if (cells[i].empty() || end != cells[i].c_str() + cells[i].size()) {
      throw Error("metrics row: bad number '" + cells[i] + "'");
    }
    return v;
  };
  RoundMetrics m;
  {
    const auto& c = cells[0];
    const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), m.round);
    if (ec != std::errc() || ptr != c.data() + c.size()) {
      throw Error("metrics row: bad round '" + c + "'");
    }
  }
  m.objective = number(1);
  m.gap = number(2);
  m.regularized_gap = number(3);
  m.consensus_residual = number(4);
  m.eta = number(5);
  m.wall_ms = number(6);
  if (cells[7] != "0" && cells[7] != "1") {
    throw Error("metrics row: accelerated must be 0 or 1, got '" + cells[7] + "'");
  }
  m.accelerated = cells[7] == "1";
  return m;
}

void write_problem(std::ostream& out, const FederatedProblem& problem) {
  out << "opsplit-problem 1\n";
  out << "seed " << problem.seed << '\n';
  out << "provenance " << problem.provenance << '\n';
  out << "users " << problem.users() << " dim " << problem.dim() << '\n';
  out << "weights ";
  for (Index i = 0; i < problem.users(); ++i) {
    out << (i ? " " : "") << hex(problem.weights()[i]);
  }
  out << '\n';
  for (Index i = 0; i < problem.users(); ++i) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, QuadraticLoss>) {
            out << "user quadratic rows " << l.A.rows() << '\n';
            write_matrix(out, l.A);
            write_vector(out, l.b);
          } else if constexpr (std::is_same_v<T, LogisticLoss>) {
            out << "user logistic rows " << l.A.rows() << " reg " << hex(l.reg_weight) << '\n';
            write_matrix(out, l.A);
            write_vector(out, l.y);
          } else if constexpr (std::is_same_v<T, ScalarShiftedQuadratic>) {
            out << "user scalar " << hex(l.curvature) << ' ' << hex(l.center) << '\n';
          } else if constexpr (std::is_same_v<T, AbsoluteDeviation>) {
            out << "user absdev\n";
            write_vector(out, l.anchor);
          } else {
            out << "user negpart\n";
          }
        },
        problem.user(i).payload());
  }
  if (problem.true_solution) {
    out << "true_solution\n";
    write_vector(out, *problem.true_solution);
  } else {
    out << "true_solution none\n";
  }
  if (problem.true_optimum) {
    out << "true_optimum " << hex(*problem.true_optimum) << '\n';
  } else {
    out << "true_optimum none\n";
  }
  if (problem.regularized) {
    out << "regularized " << hex(problem.regularized->eta) << ' '
        << hex(problem.regularized->optimum) << '\n';
    write_vector(out, problem.regularized->solution);
  } else {
    out << "regularized none\n";
  }
  out << "end\n";
}

FederatedProblem read_problem(std::istream& in) {
  expect_word(in, "opsplit-problem");
  const auto version = read_word(in, "version");
  if (version != "1") throw Error("problem file: unsupported version " + version);
  expect_word(in, "seed");
  const auto seed_text = read_word(in, "seed");
  std::uint64_t seed = 0;
  {
    const auto [ptr, ec] =
        std::from_chars(seed_text.data(), seed_text.data() + seed_text.size(), seed);
    if (ec != std::errc() || ptr != seed_text.data() + seed_text.size()) {
      throw Error("problem file: bad seed '" + seed_text + "'");
    }
  }
  expect_word(in, "provenance");
  std::string provenance;
  std::getline(in, provenance);
  if (!provenance.empty() && provenance.front() == ' ') provenance.erase(0, 1);
  expect_word(in, "users");
  const Index m = read_index(in, "users");
  expect_word(in, "dim");
  const Index d = read_index(in, "dim");
  expect_word(in, "weights");
  std::vector<double> weights(static_cast<std::size_t>(m));
  for (auto& w : weights) w = read_double(in, "weight");

  std::vector<UserLoss> users;
  for (Index i = 0; i < m; ++i) {
    expect_word(in, "user");
    const auto kind = read_word(in, "user kind");
    if (kind == "quadratic") {
      expect_word(in, "rows");
      const Index n = read_index(in, "rows");
      Matrix A = read_matrix(in, n, d, "A");
      Vector b = read_vector(in, n, "b");
      users.push_back(UserLoss::quadratic(std::move(A), std::move(b)));
    } else if (kind == "logistic") {
      expect_word(in, "rows");
      const Index n = read_index(in, "rows");
      expect_word(in, "reg");
      const double reg = read_double(in, "reg");
      Matrix A = read_matrix(in, n, d, "A");
      Vector y = read_vector(in, n, "y");
      users.push_back(UserLoss::logistic(std::move(A), std::move(y), reg));
    } else if (kind == "scalar") {
      const double a = read_double(in, "curvature");
      const double c = read_double(in, "center");
      users.push_back(UserLoss::scalar_shifted_quadratic(a, c));
    } else if (kind == "absdev") {
      users.push_back(UserLoss::absolute_deviation(read_vector(in, d, "anchor")));
    } else if (kind == "negpart") {
      users.push_back(UserLoss::neg_part_quadratic());
    } else {
      throw Error("problem file: unknown user kind '" + kind + "'");
    }
  }
  FederatedProblem problem(std::move(users), WeightVector(std::move(weights)));
  problem.seed = seed;
  problem.provenance = provenance;

  expect_word(in, "true_solution");
  if (in >> std::ws && in.peek() == 'n') {
    expect_word(in, "none");
  } else {
    problem.true_solution = read_vector(in, d, "true_solution");
  }
  expect_word(in, "true_optimum");
  if (in >> std::ws && in.peek() == 'n') {
    expect_word(in, "none");
  } else {
    problem.true_optimum = read_double(in, "true_optimum");
  }
  expect_word(in, "regularized");
  if (in >> std::ws && in.peek() == 'n') {
    expect_word(in, "none");
  } else {
    RegularizedSolution r;
    r.eta = read_double(in, "regularized eta");
    r.optimum = read_double(in, "regularized optimum");
    r.solution = read_vector(in, d, "regularized solution");
    problem.regularized = r;
  }
  expect_word(in, "end");
  return problem;
}

}  // namespace opsplit
