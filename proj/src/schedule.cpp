#include "opsplit/schedule.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

#include "opsplit/common.hpp"

namespace opsplit {
namespace {

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double parse_double(std::string_view s, std::string_view whole) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw DomainError("schedule '" + std::string(whole) + "': bad number '" +
                      std::string(s) + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view s, std::string_view whole) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw DomainError("schedule '" + std::string(whole) + "': bad integer '" +
                      std::string(s) + "'");
  }
  return v;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

Schedule::Schedule(Kind kind, double scale, double ratio, std::int64_t period)
    : kind_(kind), scale_(scale), ratio_(ratio), period_(period) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw DomainError("schedule: scale must be positive, got " + fmt(scale));
  }
  if (kind == Kind::ExpDecay) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
      throw DomainError("schedule: decay ratio must lie in (0,1), got " + fmt(ratio));
    }
    if (period < 1) throw DomainError("schedule: decay period must be >= 1");
  }
}

Schedule Schedule::constant(double c) { return {Kind::Constant, c}; }
Schedule Schedule::inverse_t(double c) { return {Kind::InverseT, c}; }
Schedule Schedule::inverse_t_squared(double c) { return {Kind::InverseTSquared, c}; }
Schedule Schedule::inverse_sqrt_t(double c) { return {Kind::InverseSqrtT, c}; }
Schedule Schedule::exp_decay(double c, double ratio, std::int64_t period) {
  return {Kind::ExpDecay, c, ratio, period};
}
Schedule Schedule::inverse_log(double c) { return {Kind::InverseLog, c}; }

Schedule Schedule::parse(std::string_view text) {
  const auto parts = split(text, ':');
  const auto name = parts.front();
  auto expect = [&](std::size_t n) {
    if (parts.size() != n) {
      throw DomainError("schedule '" + std::string(text) + "': expected " +
                        std::to_string(n - 1) + " parameter(s)");
    }
  };
  if (parts.size() == 1) return constant(parse_double(name, text));
  if (name == "constant") {
    expect(2);
    return constant(parse_double(parts[1], text));
  }
  if (name == "inv_t") {
    expect(2);
    return inverse_t(parse_double(parts[1], text));
  }
  if (name == "inv_t2") {
    expect(2);
    return inverse_t_squared(parse_double(parts[1], text));
  }
  if (name == "inv_sqrt_t") {
    expect(2);
    return inverse_sqrt_t(parse_double(parts[1], text));
  }
  if (name == "exp") {
    expect(4);
    return exp_decay(parse_double(parts[1], text), parse_double(parts[2], text),
                     parse_int(parts[3], text));
  }
  if (name == "inv_log") {
    expect(2);
    return inverse_log(parse_double(parts[1], text));
  }
  throw DomainError("schedule '" + std::string(text) + "': unknown kind '" +
                    std::string(name) + "'");
}

double Schedule::at(std::int64_t t) const {
  if (t < 1) throw DomainError("schedule: round index is 1-based, got " + std::to_string(t));
  const auto td = static_cast<double>(t);
  switch (kind_) {
    case Kind::Constant: return scale_;
    case Kind::InverseT: return scale_ / td;
    case Kind::InverseTSquared: return scale_ / (td * td);
    case Kind::InverseSqrtT: return scale_ / std::sqrt(td);
    case Kind::ExpDecay:
      return scale_ * std::pow(ratio_, static_cast<double>(t / period_));
    case Kind::InverseLog: return scale_ / std::log(td + 2.0);
  }
  return scale_;
}

std::string Schedule::to_string() const {
  switch (kind_) {
    case Kind::Constant: return "constant:" + fmt(scale_);
    case Kind::InverseT: return "inv_t:" + fmt(scale_);
    case Kind::InverseTSquared: return "inv_t2:" + fmt(scale_);
    case Kind::InverseSqrtT: return "inv_sqrt_t:" + fmt(scale_);
    case Kind::ExpDecay:
      return "exp:" + fmt(scale_) + ":" + fmt(ratio_) + ":" + std::to_string(period_);
    case Kind::InverseLog: return "inv_log:" + fmt(scale_);
  }
  return {};
}

}  // namespace opsplit
