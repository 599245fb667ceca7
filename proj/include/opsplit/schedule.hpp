#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace opsplit {

/// Step-size style schedule over the 1-based round index t.
///
/// Text form (used by configs and flags):
///   constant:c        c
///   inv_t:c           c/t
///   inv_t2:c          c/t²
///   inv_sqrt_t:c      c/√t
///   exp:c:ratio:T     c·ratio^⌊t/T⌋
///   inv_log:c         c/log(t+2)
/// A bare number is read as constant.
class Schedule {
 public:
  enum class Kind { Constant, InverseT, InverseTSquared, InverseSqrtT, ExpDecay, InverseLog };

  static Schedule constant(double c);
  static Schedule inverse_t(double c);
  static Schedule inverse_t_squared(double c);
  static Schedule inverse_sqrt_t(double c);
  static Schedule exp_decay(double c, double ratio, std::int64_t period);
  static Schedule inverse_log(double c);

  static Schedule parse(std::string_view text);

  double at(std::int64_t t) const;

  Kind kind() const { return kind_; }
  double scale() const { return scale_; }
  bool is_constant() const { return kind_ == Kind::Constant; }
  std::string to_string() const;

  bool operator==(const Schedule&) const = default;

 private:
  Schedule(Kind kind, double scale, double ratio = 0.5, std::int64_t period = 1);

  Kind kind_ = Kind::Constant;
  double scale_ = 1.0;
  double ratio_ = 0.5;
  std::int64_t period_ = 1;
};

}  // namespace opsplit
