#include "gallery.hpp"

#include "fluidrisk/descriptors.hpp"
#include "fluidrisk/errors.hpp"
#include "fluidrisk/simulation.hpp"

#include <doctest.h>

#include <cmath>

using namespace fluidrisk;

namespace {
LevelDurationGrid small_grid() { return LevelDurationGrid(0.25, 16, 0.25, 48); }
}  // namespace

TEST_CASE("poisson tail and the calendar bound") {
  // scipy.stats.poisson(5).sf(m - 1)
  CHECK(poisson_tail(0, 5.0) == 1.0);
  CHECK(std::abs(poisson_tail(3, 5.0) - 0.8753479805169189) < 1e-14);
  CHECK(std::abs(poisson_tail(10, 5.0) - 0.031828057306204811) < 1e-14);
  CHECK(std::abs(poisson_tail(20, 5.0) - 3.452135820914455e-07) / 3.452135820914455e-07 < 1e-9);
  CHECK(calendar_rate_bound(20, 5.0) == doctest::Approx(std::exp(-20 * (std::log(20.0) - std::log(5.0) - 1))));
}

TEST_CASE("psi: bounds, theta monotonicity, invariance without weights") {
  auto a = gallery::model_a();
  auto g = small_grid();
  PsiOptions o;
  o.n_max = 6;
  auto p00 = psi(a, 0, g, o);
  CHECK(p00.matrix.rows() == 1);
  CHECK(p00.matrix.cols() == 1);
  CHECK(p00.matrix.rowwise().sum().maxCoeff() <= 1.0);
  CHECK(p00.n_used == 6);
  CHECK_FALSE(p00.converged);
  CHECK(p00.tail_estimate >= 0);
  o.theta1 = 1;
  o.theta2 = 1;
  auto p11 = psi(a, 0, g, o);
  CHECK((p11.matrix - p00.matrix).maxCoeff() <= 1e-15);  // sigma = 0, K = 0
  CHECK((p11.matrix - p00.matrix).cwiseAbs().maxCoeff() < 1e-14);

  auto w = gallery::model_a_weighted();
  auto q11 = psi(w, 0, g, o);
  o.theta1 = o.theta2 = 0;
  auto q00 = psi(w, 0, g, o);
  CHECK((q11.matrix - q00.matrix).maxCoeff() < 0);
  CHECK(q11.matrix.minCoeff() > 0);
  CHECK_THROWS_AS(psi(a, 0.1, g, o), DomainError);
}

TEST_CASE("psi increments are nonnegative") {
  auto a = gallery::model_a();
  PsiOptions o;
  o.n_max = 7;
  auto r = psi(a, 0.5, small_grid(), o);
  for (double inc : r.increments) CHECK(inc >= 0);
}

TEST_CASE("finite time return") {
  auto cal = gallery::calendar();
  CHECK_THROWS_AS(finite_time_return(gallery::model_a(), 0, 2.0, small_grid()), DomainError);
  auto g1 = finite_time_grid(cal, 0, 1.0, 16, 16);
  auto g2 = finite_time_grid(cal, 0, 3.0, 16, 16);
  auto r1 = finite_time_return(cal, 0, 1.0, g1);
  auto r2 = finite_time_return(cal, 0, 3.0, g2);
  CHECK(r1.converged);
  CHECK(r1.matrix(0, 0) >= 0);
  CHECK(r1.matrix(0, 0) <= r2.matrix(0, 0));
  auto tiny = finite_time_return(cal, 0, 1e-3, finite_time_grid(cal, 0, 1e-3, 8, 8));
  CHECK(tiny.matrix(0, 0) < 1e-5);
}

TEST_CASE("erlangize builds a valid augmented model") {
  auto a = gallery::model_a_weighted();
  for (int n : {1, 4, 16}) {
    auto e = erlangize(a, 1.0, n, 0);
    CHECK(e.dim() == n + 2);
    CHECK(e.kernel.gamma() == std::max(1.0, n / 1.0));
    CHECK(validate_model(e).pass());
    auto k = e.kernel.eval(0.3);
    CHECK((k.c + k.d).rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
    CHECK(e.alpha(0) == 1.0);
    CHECK(e.sigma.head(n).cwiseAbs().maxCoeff() == 0.0);
    CHECK(e.sigma.tail(2) == a.sigma);
    CHECK(e.space.minus() == std::vector<int>{n + 1});
    CHECK(k.d(n - 1, n) == doctest::Approx(n / 1.0));
  }
  auto one = erlangize(a, 2.0, 1, 0);
  CHECK(one.kernel.eval(0).c(0, 0) == -0.5);
  CHECK(one.kernel.eval(0).d(0, 1) == 0.5);
  CHECK_THROWS_AS(erlangize(a, 1.0, 2, 1), DomainError);
  CHECK_THROWS_AS(erlangize(a, 0.0, 2, 0), DomainError);
  auto pr = erlangize(gallery::pareto_renewal(), 1.0, 3, 0);
  CHECK(validate_model(pr).pass());
}

TEST_CASE("ruin descriptor is a probability row") {
  auto a = gallery::model_a();
  PsiOptions o;
  o.n_max = 6;
  auto r = ruin_descriptor(a, 1.0, 2, 0, small_grid(), o);
  CHECK(r.matrix.rows() == 1);
  CHECK(r.matrix.minCoeff() >= 0);
  CHECK(r.matrix.sum() <= 1);
  CHECK(r.n_stages == 2);
  CHECK(r.u == 1.0);
}
