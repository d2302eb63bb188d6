#include "gallery.hpp"

#include "fluidrisk/bridge.hpp"
#include "fluidrisk/errors.hpp"

#include <doctest.h>

#include <cstring>
#include <sstream>

using namespace fluidrisk;

namespace {

LevelDurationGrid small_grid() { return LevelDurationGrid(0.25, 12, 0.25, 32); }

double rel_diff(const BridgeSlice& a, const BridgeSlice& b) {
  double scale = 0;
  for (std::size_t k = 0; k < a.size(); ++k) scale = std::max(scale, std::abs(a.data()[k]));
  return a.max_abs_diff(b) / std::max(scale, 1e-300);
}

double min_entry(const BridgeSlice& s) {
  double m = 0;
  for (std::size_t k = 0; k < s.size(); ++k) m = std::min(m, s.data()[k]);
  return m;
}

}  // namespace

TEST_CASE("grid geometry") {
  auto g = LevelDurationGrid::defaults(gallery::model_a());
  CHECK(g.u_max() == doctest::Approx(8.0));
  CHECK(g.du() == doctest::Approx(0.125));
  CHECK(g.l_max() == doctest::Approx(16.0));
  CHECK(g.dl() == doctest::Approx(0.25));
  CHECK(g.level(g.zero()) == 0.0);
  CHECK(g.z_index(0.375) == 3);
  CHECK_THROWS_AS(g.z_index(0.3), DomainError);
  CHECK_THROWS_AS(LevelDurationGrid(0.1, 4, 0.1, 5), DomainError);
  auto r = g.refined();
  CHECK(r.u_max() == doctest::Approx(g.u_max()));
  CHECK(r.l_max() == doctest::Approx(g.l_max()));
}

TEST_CASE("serial reference and parallel kernels agree") {
  for (auto model : {gallery::model_a_weighted(), gallery::pareto_renewal(), gallery::calendar()}) {
    BridgeContext ctx(model, small_grid(), 0.3, 0.7);
    auto b2s = bridge2(ctx, Exec::serial), b2p = bridge2(ctx, Exec::parallel);
    CHECK(rel_diff(b2s, b2p) < 1e-13);
    CHECK(rel_diff(gamma_first(ctx, b2s, Exec::serial), gamma_first(ctx, b2s, Exec::parallel)) < 1e-12);
    CHECK(rel_diff(gamma_last(ctx, b2s, Exec::serial), gamma_last(ctx, b2s, Exec::parallel)) < 1e-12);
    CHECK(rel_diff(gamma_middle(ctx, b2s, b2s, Exec::serial),
                   gamma_middle(ctx, b2s, b2s, Exec::parallel)) < 1e-10);
    BridgeRecursion rs(ctx, Exec::serial), rp(ctx, Exec::parallel);
    for (int n = 2; n <= 6; ++n) CHECK(rel_diff(rs.advance(), rp.advance()) < 1e-10);
  }
}

TEST_CASE("2-bridge support") {
  auto model = gallery::model_a();
  auto g = small_grid();
  BridgeContext ctx(model, g, 0, 0);
  auto b2 = bridge2(ctx);
  CHECK(min_entry(b2) >= 0.0);
  // s < z: the hat cell of node a only reaches down to (a - 1) du
  for (int z = 2; z <= g.m(); ++z)
    for (int a = 0; a + 1 < z; ++a)
      for (int b = 0; b < g.l_count(); ++b) CHECK(b2.at(z, 0, 0, a, b) == 0.0);
  // no-arrival term: r(j)(s - z) <= l <= r(i)(s - z); arrival term: l >= r(j)(s - z).
  // With r = (1, -1) and z = 0 nothing lies below l = -s - du - dl.
  for (int a = 0; a <= g.m(); ++a)
    for (int b = 0; b < g.l_count(); ++b)
      if (g.level(b) < -g.duration(a) - g.du() - g.dl()) CHECK(b2.at(0, 0, 0, a, b) == 0.0);
}

TEST_CASE("n_max = 2 reproduces bridge2") {
  auto model = gallery::model_a();
  BridgeOptions o;
  o.n_max = 2;
  auto t = bridge_recursion(model, small_grid(), o);
  BridgeContext ctx(model, small_grid(), 0, 0);
  CHECK(t.slices.size() == 1);
  CHECK(t.at(2).max_abs_diff(bridge2(ctx)) == 0.0);
}

TEST_CASE("partial sums are monotone and bounded; theta lowers every entry") {
  auto model = gallery::model_a_weighted();
  auto g = LevelDurationGrid::defaults(model);
  BridgeOptions o0, o1;
  o0.n_max = 6;
  o1.n_max = 6;
  o1.theta1 = 0.5;
  o1.theta2 = 1.0;
  auto t0 = bridge_recursion(model, g, o0);
  auto t1 = bridge_recursion(model, g, o1);
  Matrix sum = Matrix::Zero(1, 1);
  for (int n = 2; n <= 6; ++n) {
    CHECK(min_entry(t0.at(n)) >= 0.0);
    CHECK(t0.clamp[n - 2] <= 1e-10);
    const Matrix l0 = integrate_bridge(t0.at(n), g, 0);
    const Matrix l1 = integrate_bridge(t1.at(n), g, 0);
    CHECK(l0(0, 0) > 0);
    CHECK(l1(0, 0) < l0(0, 0));
    sum += l0;
    CHECK(sum(0, 0) <= 1.0);
  }
}

TEST_CASE("memory budget is checked before allocation") {
  auto model = gallery::model_a();
  BridgeOptions o;
  o.n_max = 8;
  o.memory_budget = 1 << 20;
  CHECK_THROWS_AS(bridge_recursion(model, LevelDurationGrid::defaults(model), o), DomainError);
}

TEST_CASE("binary dump layout") {
  auto model = gallery::model_a();
  BridgeOptions o;
  o.n_max = 3;
  auto g = small_grid();
  auto t = bridge_recursion(model, g, o);
  std::ostringstream os;
  t.write_binary(os);
  const std::string s = os.str();
  CHECK(s.substr(0, 4) == "FRBT");
  const std::size_t header = 4 + 4 + 6 * 4 + 4 * 8;
  CHECK(s.size() == header + 2 * t.at(2).size() * 8);
  double first;
  std::memcpy(&first, s.data() + header + 8 * 5, 8);
  CHECK(first == t.at(2).data()[5]);
}

TEST_CASE("resummed bridge dominates every partial sum") {
  auto model = gallery::model_a();
  auto g = small_grid();
  BridgeContext ctx(model, g, 0, 0);
  auto rb = resummed_bridge(ctx, 0, 400, 1e-9);
  CHECK(rb.converged);
  BridgeRecursion rec(ctx);
  double partial = 0;
  for (int n = 2; n <= 8; ++n) partial += integrate_bridge(rec.advance(), g, 0)(0, 0);
  CHECK(integrate_bridge(rb.total, g, 0)(0, 0) >= partial);
  CHECK(integrate_bridge(rb.total, g, 0)(0, 0) <= 1.0 + 1e-9);
  for (std::size_t k = 1; k < rb.increments.size(); ++k)
    CHECK(rb.increments[k] <= rb.increments[k - 1] * (1 + 1e-9) + 1e-15);
}
