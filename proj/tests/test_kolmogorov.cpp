#include "gallery.hpp"

#include "fluidrisk/kolmogorov.hpp"

#include <doctest.h>

#include <cmath>

using namespace fluidrisk;

namespace {
// scipy.linalg.expm of the MODEL-A C at x = 1 and 5
const double kExpA1[] = {0.5084554163169694, 0.3722775584676456, 0.3309133853045737,
                         0.5084554163169694};
const double kExpA5[] = {0.23449992065266845, 0.24862203133147417, 0.2209973611835325,
                         0.23449992065266853};
// (-C)^{-1} D for MODEL-A
const double kRenewalA[] = {0.3571428571428573, 0.6428571428571431, 0.28571428571428586,
                            0.7142857142857145};

double diff(const Matrix& m, const double* ref) {
  double worst = 0;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) worst = std::max(worst, std::abs(m(i, j) - ref[i * m.cols() + j]));
  return worst;
}
}  // namespace

TEST_CASE("expm matches frozen reference") {
  Matrix c(2, 2);
  c << -1, 0.9, 0.8, -1;
  CHECK(diff(expm(c), kExpA1) < 1e-14);
  CHECK(diff(expm(5 * c), kExpA5) < 1e-14);
  CHECK((expm(Matrix::Zero(3, 3)) - Matrix::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("survival of an empty kernel is the identity") {
  auto k = DurationKernel::constant(Matrix::Zero(2, 2), Matrix::Zero(2, 2), 1.0);
  CHECK((survival_matrix(k, 0.3, 4.1, 0.1).g - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pareto hazard survival is (b/(b+x))^a") {
  Hazard h{Hazard::Family::pareto, 2.0, 1.0, 0.0};
  auto k = DurationKernel::hazard({h}, Matrix::Identity(1, 1), 2.0);
  for (double x : {0.5, 1.0, 2.0}) {
    const double ref = std::pow(1.0 / (1.0 + x), 2.0);
    CHECK(std::abs(survival_matrix(k, 0, x, 0.01).g(0, 0) - ref) < 1e-10);
  }
}

TEST_CASE("step halving shows fourth order") {
  Hazard h{Hazard::Family::pareto, 2.0, 1.0, 0.0};
  auto k = DurationKernel::hazard({h}, Matrix::Identity(1, 1), 2.0);
  const double ref = 1.0 / 9.0;
  const double e1 = std::abs(survival_fixed(k, 0, 2, 0.2)(0, 0) - ref);
  const double e2 = std::abs(survival_fixed(k, 0, 2, 0.1)(0, 0) - ref);
  CHECK(e1 / e2 > 12);
  CHECK(e1 / e2 < 20);
}

TEST_CASE("survival rows are substochastic, stochastic without arrivals") {
  for (const auto& f : gallery::gallery_files()) {
    auto m = gallery::load(f);
    for (double t : {0.5, 3.0}) {
      Matrix g = survival_matrix(m.kernel, 0, t, 0.01).g;
      CHECK(g.minCoeff() >= -1e-14);
      CHECK(g.rowwise().sum().maxCoeff() <= 1 + 1e-9);
      if (m.kernel.arrivals_vanish()) CHECK((g.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("forward sweep agrees with the backward solve") {
  auto m = gallery::calendar();
  SurvivalSweep sw(m.kernel, 0.01);
  sw.advance_to(3.3);
  CHECK((sw.g() - survival_matrix(m.kernel, 0, 3.3, 0.01).g).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("renewal operator") {
  auto a = gallery::model_a();
  auto op = renewal_operator_auto(a.kernel, 0.01);
  CHECK(op.converged);
  CHECK(diff(op.n, kRenewalA) < 1e-6);

  // Erlang-2 renewal: D = (-C 1) beta is rank one
  auto r = gallery::load("renewal_erlang.json");
  auto rn = renewal_operator_auto(r.kernel, 0.01);
  Eigen::JacobiSVD<Matrix> svd(rn.n);
  CHECK(svd.singularValues()(1) < 1e-10 * svd.singularValues()(0));

  auto cal = gallery::calendar();
  CHECK(renewal_operator(cal.kernel, 10, 0.01).n.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("interarrival densities") {
  auto a = gallery::model_a();
  Matrix c(2, 2), d(2, 2);
  c << -1, 0.9, 0.8, -1;
  d << 0.1, 0, 0, 0.2;
  const double y1 = 0.7, y2 = 1.9;
  const double ref = (a.alpha.transpose() * expm(c * y1) * d * expm(c * y2) * d *
                      Vector::Ones(2))(0);
  CHECK(std::abs(interarrival_density(a, {y1, y2}, 0.01) - ref) < 1e-8);
  CHECK(interarrival_density(gallery::calendar(), {1.0}) == 0.0);

  // renewal factorization f_n = prod beta G(y) (-C 1)
  auto r = gallery::load("renewal_erlang.json");
  Matrix cr(2, 2);
  cr << -2, 2, 0, -2;
  Vector exit = -cr * Vector::Ones(2);
  Vector beta = Vector::Unit(2, 0);
  double prod = 1;
  for (double y : {0.4, 1.2, 0.8}) prod *= (beta.transpose() * expm(cr * y) * exit)(0);
  CHECK(std::abs(interarrival_density(r, {0.4, 1.2, 0.8}, 0.01) - prod) < 1e-8);
}

TEST_CASE("IPH marginals") {
  auto a = gallery::model_a();
  auto m1 = iph_marginal(a, 1, 0.5);
  CHECK((m1.initial - a.alpha).cwiseAbs().maxCoeff() == 0.0);
  CHECK(m1.initial_mass == 1.0);
  auto cal = iph_marginal(gallery::calendar(), 2, 0.5);
  CHECK(cal.initial_mass == 0.0);
  CHECK(cal.density == 0.0);
  // the CDF of S_1 at large y approaches the arrival probability (slowest decay 0.15)
  auto cdf = iph_cdf(a.kernel, a.alpha, {0.0, 1.0, 200.0});
  CHECK(cdf[0] == 0.0);
  CHECK(cdf[1] > 0);
  CHECK(std::abs(cdf[2] - 1.0) < 1e-6);
}
