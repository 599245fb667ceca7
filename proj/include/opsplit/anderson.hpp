#pragma once

#include <deque>
#include <optional>

#include "opsplit/common.hpp"

namespace opsplit {

/// Which sequence the server extrapolates.
enum class AndersonMode {
  OnU,          // the scheme state u_t
  OnProjected,  // the consensus point P_H(z_{t+1})
};

struct AndersonConfig {
  /// Memory size τ; the window holds τ+1 columns. τ = 0 disables extrapolation.
  int tau = 0;
  /// Ridge added to G before the pseudo-inverse. Absent: 1e-10·trace(G)/cols.
  std::optional<double> ridge;
  AndersonMode mode = AndersonMode::OnU;
  /// Relative singular-value cutoff of the pseudo-inverse.
  double svd_tol = 1e-12;

  void validate() const;
};

/// Sliding window of inputs U = [u_{t−τ}, …, u_t] and mapped states
/// T = [Tu_{t−τ}, …, Tu_t], oldest first.
class AndersonMemory {
 public:
  explicit AndersonMemory(int tau);

  /// Appends one (u, Tu) pair and drops the oldest beyond τ+1 columns.
  void push(const Vector& input, const Vector& mapped);
  void clear();

  Index columns() const { return static_cast<Index>(inputs_.size()); }
  int tau() const { return tau_; }
  bool empty() const { return inputs_.empty(); }

  /// U − T as a matrix, one column per stored pair.
  Matrix residuals() const;
  /// T as a matrix.
  Matrix mapped() const;

 private:
  int tau_;
  std::deque<Vector> inputs_;
  std::deque<Vector> mapped_;
};

struct AndersonWeights {
  Vector pi;
  /// |1ᵀG†1| fell below 1e-14 (or the weights were not finite); `pi` is then
  /// the unit vector selecting the newest column.
  bool degenerate = false;
};

/// π* = G†1 / (1ᵀG†1), G = (U−T)ᵀ(U−T). One column gives π = [1].
AndersonWeights anderson_weights(const AndersonMemory& memory,
                                 std::optional<double> ridge, double svd_tol);

struct AcceleratedStep {
  Vector state;
  Vector weights;
  bool fell_back = false;
};

/// T·π*, or the newest mapped column when the weights are degenerate.
AcceleratedStep accelerated_step(const AndersonMemory& memory,
                                 const AndersonConfig& config);

}  // namespace opsplit
