#include <doctest.h>

#include "opsplit/anderson.hpp"
#include "test_util.hpp"

using namespace opsplit;
using testutil::gaussian;

namespace {

double residual(const AndersonMemory& m, const Vector& pi) { return (m.residuals() * pi).norm(); }

}  // namespace

TEST_CASE("memory slides over tau + 1 columns") {
  AndersonMemory m(2);
  for (int s = 0; s < 5; ++s) m.push(Vector::Constant(3, s), Vector::Constant(3, s + 0.5));
  CHECK(m.columns() == 3);
  CHECK(m.mapped()(0, 0) == 2.5);
  CHECK(m.mapped()(0, 2) == 4.5);
  CHECK(m.residuals()(1, 1) == -0.5);
  CHECK_THROWS_AS(m.push(Vector::Zero(2), Vector::Zero(2)), DimensionError);
  CHECK_THROWS_AS(m.push(Vector::Zero(3), Vector::Zero(2)), DimensionError);
  CHECK_THROWS_AS(AndersonMemory(-1), DomainError);
  AndersonConfig bad;
  bad.svd_tol = 0.0;
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("weights") {
  std::mt19937_64 rng(1);
  SUBCASE("one column gives [1]") {
    AndersonMemory m(0);
    m.push(gaussian(rng, 4), gaussian(rng, 4));
    const auto w = anderson_weights(m, std::nullopt, 1e-12);
    CHECK(w.pi.size() == 1);
    CHECK(w.pi(0) == 1.0);
    CHECK_FALSE(w.degenerate);
  }
  SUBCASE("duplicated residual columns") {
    AndersonMemory m(1);
    const Vector u = gaussian(rng, 5), t = gaussian(rng, 5);
    m.push(u, t);
    m.push(u, t);
    const auto w = anderson_weights(m, std::nullopt, 1e-12);
    CHECK(w.pi.sum() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(residual(m, w.pi) == doctest::Approx((u - t).norm()).epsilon(1e-10));
  }
  SUBCASE("three columns against a grid search") {
    AndersonMemory m(2);
    for (int s = 0; s < 3; ++s) m.push(gaussian(rng, 6), gaussian(rng, 6));
    const auto w = anderson_weights(m, 0.0, 1e-12);
    CHECK(w.pi.sum() == doctest::Approx(1.0).epsilon(1e-10));
    // Coarse grid then a refined one around the best point.
    double best = 1e300;
    double c1 = 0.0, c2 = 0.0;
    for (double span : {4.0, 0.05, 0.001}) {
      const double o1 = c1, o2 = c2;
      for (int a = -100; a <= 100; ++a) {
        for (int b = -100; b <= 100; ++b) {
          Vector pi(3);
          pi << o1 + span * a / 100, o2 + span * b / 100, 0;
          pi(2) = 1 - pi(0) - pi(1);
          const double r = residual(m, pi);
          if (r < best) {
            best = r;
            c1 = pi(0);
            c2 = pi(1);
          }
        }
      }
    }
    CHECK(std::abs(residual(m, w.pi) - best) <= 1e-6);
    CHECK(residual(m, w.pi) <= best + 1e-12);
  }
  SUBCASE("dominates every single column and sums to one") {
    for (int trial = 0; trial < 200; ++trial) {
      AndersonMemory m(3);
      for (int s = 0; s < 4; ++s) m.push(gaussian(rng, 8), gaussian(rng, 8));
      const auto w = anderson_weights(m, std::nullopt, 1e-12);
      CHECK(std::abs(w.pi.sum() - 1.0) <= 1e-10);
      for (Index j = 0; j < 4; ++j) {
        CHECK(residual(m, w.pi) <= residual(m, Vector::Unit(4, j)) + 1e-10);
      }
    }
  }
  SUBCASE("zero residuals fall back to the newest column") {
    AndersonMemory m(2);
    const Vector u = gaussian(rng, 3);
    for (int s = 0; s < 3; ++s) m.push(u, u);
    const auto w = anderson_weights(m, std::nullopt, 1e-12);
    CHECK(w.degenerate);
    CHECK(w.pi == Vector::Unit(3, 2));
  }
}

TEST_CASE("accelerated step") {
  std::mt19937_64 rng(2);
  SUBCASE("fixed points are preserved") {
    AndersonMemory m(2);
    const Vector u = gaussian(rng, 4);
    for (int s = 0; s < 3; ++s) m.push(u, u);
    AndersonConfig c;
    c.tau = 2;
    const auto step = accelerated_step(m, c);
    CHECK(step.state == u);
    CHECK(step.state.allFinite());
  }
  SUBCASE("faster than plain iteration on an affine contraction") {
    const Index d = 20;
    Matrix M = gaussian(rng, d, d);
    M *= 0.95 / M.jacobiSvd().singularValues()(0);
    const Vector c = gaussian(rng, d);
    const Vector fixed = (Matrix::Identity(d, d) - M).lu().solve(c);
    auto T = [&](const Vector& u) -> Vector { return M * u + c; };

    int plain = 0;
    for (Vector u = Vector::Zero(d); (u - fixed).norm() >= 1e-10; u = T(u)) ++plain;

    AndersonConfig cfg;
    cfg.tau = 2;
    AndersonMemory mem(2);
    int accelerated = 0;
    for (Vector u = Vector::Zero(d); (u - fixed).norm() >= 1e-10 && accelerated < 100000;) {
      mem.push(u, T(u));
      u = accelerated_step(mem, cfg).state;
      ++accelerated;
    }
    CHECK(accelerated < plain);
  }
}
