// Acceptance criteria 1-9. Usage: acceptance [k ...]; no argument runs all.
// Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

#include "gallery.hpp"

#include "fluidrisk/bridge.hpp"
#include "fluidrisk/descriptors.hpp"
#include "fluidrisk/kolmogorov.hpp"
#include "fluidrisk/oracle.hpp"
#include "fluidrisk/rng.hpp"
#include "fluidrisk/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace fluidrisk;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

// scipy.linalg.expm(C x), row-major, x in {0.5, 1, 2, 5}
struct ExpRef {
  const char* name;
  int p;
  std::vector<double> c;
  std::vector<std::vector<double>> e;
};

std::vector<ExpRef> exp_refs() {
  return {
      {"MODEL-A", 2, {-1, 0.9, 0.8, -1},
       {{0.6619421641988111, 0.2812009708720064, 0.24995641855289463, 0.6619421641988111},
        {0.5084554163169694, 0.3722775584676456, 0.3309133853045737, 0.5084554163169694},
        {0.38171853752751594, 0.3785730819522598, 0.3365094061797863, 0.38171853752751617},
        {0.23449992065266845, 0.24862203133147417, 0.2209973611835325, 0.23449992065266853}}},
      {"erlang-3", 3, {-3, 3, 0, 0, -3, 3, 0, 0, -3},
       {{0.22313016014843012, 0.33469524022264413, 0.2510214301669844, 0.0, 0.22313016014843012,
         0.3346952402226442, 0.0, 0.0, 0.22313016014843012},
        {0.049787068367863944, 0.14936120510359183, 0.22404180765538773, 0.0,
         0.049787068367863944, 0.14936120510359183, 0.0, 0.0, 0.049787068367863944},
        {0.0024787521766663585, 0.014872513059998151, 0.04461753917999445, 0.0,
         0.0024787521766663585, 0.014872513059998151, 0.0, 0.0, 0.0024787521766663585},
        {3.059023205018258e-07, 4.588534807527386e-06, 3.4414011056455406e-05, 0.0,
         3.059023205018258e-07, 4.588534807527386e-06, 0.0, 0.0, 3.059023205018258e-07}}},
      {"four-state", 4,
       {-2, 0.5, 0.5, 0.2, 0.3, -1, 0.1, 0.1, 0, 0.4, -0.9, 0.3, 0.25, 0.25, 0.25, -1.5},
       {{0.37990585671904387, 0.13760871201905844, 0.1308790374742595, 0.054893618807047316,
         0.07403002981567751, 0.6223612550001272, 0.0434809912275017, 0.0334392882078815,
         0.012860599861349771, 0.13162264293265932, 0.6475764973017863, 0.08645173638962603,
         0.05780351734482851, 0.08322355551826367, 0.07937700610115551, 0.48253525446381185},
        {0.1593718642011277, 0.1597157732919681, 0.14481655583112238, 0.06325877102857128,
         0.07668996426951784, 0.4060267282203568, 0.06756144189787468, 0.0447697362483827,
         0.027955282044271026, 0.1761171147837239, 0.43362386577839573, 0.1028074556125851,
         0.05703400793919384, 0.11035549490041693, 0.10088879881501432, 0.24565853251280412},
        {0.04530427695798826, 0.12278870037633118, 0.10304832859922283, 0.04766037980590146,
         0.04780249450703792, 0.19394561359430024, 0.07235074622665043, 0.040972910068934866,
         0.03594729936225682, 0.16368710717437554, 0.21434889155920261, 0.07948842857430402,
         0.034384040648636593, 0.09879452431075972, 0.08424723017160596, 0.07926872295164464},
        {0.008223037578335599, 0.03190554533850998, 0.02449222573460561, 0.011903894684352781,
         0.00917162629200493, 0.03537447677019885, 0.024630079178962264, 0.012256082078096926,
         0.012953907188273866, 0.05080762078797183, 0.04099737544189928, 0.019611871945057396,
         0.007424352662508961, 0.02849439656761433, 0.022028839958711847, 0.011004000502495108}}},
  };
}

Outcome criterion1() {
  const double xs[] = {0.5, 1, 2, 5};
  double worst = 0;
  for (const auto& ref : exp_refs()) {
    Matrix c = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        ref.c.data(), ref.p, ref.p);
    auto k = DurationKernel::constant(c, Matrix::Zero(ref.p, ref.p), 3.0);
    for (int x = 0; x < 4; ++x) {
      Matrix g = survival_matrix(k, 0, xs[x], 1e-2).g;
      for (int i = 0; i < ref.p; ++i)
        for (int j = 0; j < ref.p; ++j)
          worst = std::max(worst, std::abs(g(i, j) - ref.e[x][i * ref.p + j]));
    }
  }
  return {worst <= 1e-8, "max |G(0,x) - e^{Cx}| = " + fmt("%.3e", worst) + " (tol 1e-8)"};
}

Outcome criterion2() {
  Matrix c1(3, 3), c2(3, 3), c3(3, 3), c4(3, 3);
  c1 << -1, 0.6, 0.2, 0.3, -0.8, 0.5, 0.1, 0.9, -1.2;
  c2 << -2, 1, 0.5, 0.2, -0.4, 0.1, 0.7, 0.3, -1.5;
  c3 << -0.5, 0.2, 0.1, 1.0, -1.6, 0.4, 0.2, 0.2, -0.6;
  c4 << -1.3, 0.4, 0.4, 0.6, -0.9, 0.2, 0.5, 0.5, -1.9;
  std::vector<Matrix> d(4);
  for (auto& m : d) m = 0.1 * Matrix::Identity(3, 3);
  auto k = DurationKernel::piecewise({1.3, 2.7, 4.05}, {c1, c2, c3, c4}, d, 2.5);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> un(0.0, 8.0);
  double worst = 0;
  for (int r = 0; r < 20; ++r) {
    double v[3] = {un(rng), un(rng), un(rng)};
    std::sort(v, v + 3);
    Matrix gsu = survival_matrix(k, v[0], v[2], 1e-2).g;
    Matrix prod = survival_matrix(k, v[0], v[1], 1e-2).g * survival_matrix(k, v[1], v[2], 1e-2).g;
    worst = std::max(worst, (gsu - prod).cwiseAbs().maxCoeff());
  }
  return {worst <= 1e-8, "max |G(s,u) - G(s,t)G(t,u)| over 20 triples = " + fmt("%.3e", worst)};
}

// First two interarrival times per path; infinity when the arrival does not
// happen before t_cap.
void sample_interarrivals(const FluidModel& m, long n, std::uint64_t seed, double t_cap,
                          std::vector<double>& s1, std::vector<double>& s21) {
  s1.assign(n, INFINITY);
  s21.assign(n, INFINITY);
#pragma omp parallel for schedule(static)
  for (long k = 0; k < n; ++k) {
    auto rng = path_stream(seed, k);
    GridWalker w(m, rng);
    w.start(draw_state(m.alpha, rng), 0.0, 0.0);
    double last = 0;
    int seen = 0;
    while (seen < 2) {
      w.step();
      if (w.time() > t_cap) break;
      if (w.arrived()) {
        (seen == 0 ? s1[k] : s21[k]) = w.time() - last;
        last = w.time();
        ++seen;
      }
    }
  }
}

double ks_statistic(std::vector<double> xs, const DurationKernel& kernel, const Vector& beta) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  std::vector<double> finite;
  for (double x : xs)
    if (std::isfinite(x)) finite.push_back(x);
  const auto cdf = iph_cdf(kernel, beta, finite, 1e-2);
  double d = 0;
  for (std::size_t k = 0; k < finite.size(); ++k)
    d = std::max({d, cdf[k] - k / n, (k + 1) / n - cdf[k]});
  return d;
}

Outcome criterion3() {
  const long n = 100000;
  const double crit = 1.628 / std::sqrt(static_cast<double>(n));
  std::string detail;
  bool pass = true;
  for (auto m : {gallery::model_a(), gallery::pareto_renewal()}) {
    std::vector<double> s1, s21;
    sample_interarrivals(m, n, 77, 1e4, s1, s21);
    const auto op = renewal_operator_auto(m.kernel, 1e-2, 1e-8, 0, 2e4);
    const Vector beta2 = iph_initial(m, 2, op);
    const double d1 = ks_statistic(s1, m.kernel, m.alpha);
    const double d2 = ks_statistic(s21, m.kernel, beta2);
    pass = pass && d1 < crit && d2 < crit;
    detail += m.name + ": D(S1) = " + fmt("%.5f", d1) + ", D(S2-S1) = " + fmt("%.5f", d2) + "; ";
  }
  return {pass, detail + "1% critical value " + fmt("%.5f", crit)};
}

Outcome criterion4() {
  auto m = gallery::model_a();
  auto g = LevelDurationGrid::defaults(m);
  BridgeContext ctx(m, g, 0, 0);
  auto b2 = bridge2(ctx);
  const Matrix mass = bridge_mass(b2, g, 0);
  const Matrix ret = integrate_bridge(b2, g, 0);
  std::vector<double> se{0, g.u_max(), INFINITY}, le{-g.l_max(), 0, g.l_max()};
  auto h = mc_bridge_histogram(m, 0, 2, se, le, 1000000, 4242);
  bool pass = true;
  std::string detail;
  for (int i = 0; i < mass.rows(); ++i)
    for (int j = 0; j < mass.cols(); ++j) {
      const double zm = std::abs(mass(i, j) - h.omega.value(i, j)) / h.omega.std_error(i, j);
      const double zr = std::abs(ret(i, j) - h.returned.value(i, j)) / h.returned.std_error(i, j);
      pass = pass && zm <= 3;
      detail += "mass " + fmt("%.6f", mass(i, j)) + " vs MC " + fmt("%.6f", h.omega.value(i, j)) +
                " (" + fmt("%.2f", zm) + " SE); l<=0 part " + fmt("%.6f", ret(i, j)) + " vs " +
                fmt("%.6f", h.returned.value(i, j)) + " (" + fmt("%.2f", zr) + " SE)";
    }
  return {pass, detail};
}

Outcome criterion5() {
  auto m = gallery::model_a();
  auto g = LevelDurationGrid::defaults(m);
  BridgeContext ctx(m, g, 0, 0);
  BridgeRecursion rec(ctx);
  Matrix sum = Matrix::Zero(1, 1);
  for (int n = 2; n <= 6; ++n) sum += integrate_bridge(rec.advance(), g, 0);
  auto e = mc_first_return(m, 0, 0, 0, 1000000, 6, 5150);
  const double z = std::abs(sum(0, 0) - e.value(0, 0)) / e.std_error(0, 0);
  return {z <= 3, "sum_{n=2..6} L = " + fmt("%.6f", sum(0, 0)) + ", MC " +
                      fmt("%.6f", e.value(0, 0)) + " +- " + fmt("%.6f", e.std_error(0, 0)) +
                      " (" + fmt("%.2f", z) + " SE)"};
}

Outcome criterion6() {
  auto m = gallery::model_a();
  const Matrix ref = riccati_psi(m).psi;
  PsiOptions o;
  o.mode = SeriesMode::resummed;
  o.n_max = 2000;
  o.eps_tail = 1e-10;
  o.anderson = 5;
  auto g = LevelDurationGrid::defaults(m);
  const auto coarse = psi(m, 0, g, o);
  const auto fine = psi(m, 0, g.refined(), o);
  const double e1 = (coarse.matrix - ref).cwiseAbs().maxCoeff();
  const double e2 = (fine.matrix - ref).cwiseAbs().maxCoeff();
  const bool pass = coarse.converged && fine.converged && e1 <= 5e-2 && e2 * 2 <= e1;
  return {pass, "Riccati psi = " + fmt("%.12f", ref(0, 0)) + "; default grid " +
                    fmt("%.12f", coarse.matrix(0, 0)) + " (err " + fmt("%.3e", e1) + ", " +
                    std::to_string(coarse.n_used) + " it); halved " +
                    fmt("%.12f", fine.matrix(0, 0)) + " (err " + fmt("%.3e", e2) + ", " +
                    std::to_string(fine.n_used) + " it); ratio " + fmt("%.2f", e1 / e2)};
}

Outcome criterion7() {
  auto m = gallery::calendar();
  const double t = 5.0;
  FiniteTimeOptions o;
  o.m_max = 20;
  o.eps = 1e-300;  // run every order up to 20
  const auto g = finite_time_grid(m, 0, t);
  const auto r = finite_time_return(m, 0, t, g, o);
  const double gt = m.kernel.gamma() * t;
  // increments[k] belongs to order k + 2
  const double scale = r.increments[8] / calendar_rate_bound(10, gt);
  bool pass = r.n_used == 20;
  double worst = 0;
  for (int mm = 10; mm <= 20; ++mm) {
    const double ratio = r.increments[mm - 2] / (scale * calendar_rate_bound(mm, gt));
    if (mm > 10) worst = std::max(worst, ratio);
    pass = pass && ratio <= 1.0 + 1e-12;
  }
  return {pass, "bound scaled to match m = 10; max increment / bound over m = 11..20: " +
                    fmt("%.4f", worst) +
                    "; increment(20) = " + fmt("%.3e", r.increments[18]) +
                    "; Psi*(5) = " + fmt("%.6f", r.matrix(0, 0))};
}

Outcome criterion8() {
  auto m = gallery::model_a();
  const double u = 1.0;
  bool pass = true;
  std::string detail = "ramp:";
  for (int n : {1, 4, 16}) {
    auto e = erlangize(m, u, n, 0);
    const long paths = 100000;
    std::vector<double> h(paths);
    for (long k = 0; k < paths; ++k) {
      auto rng = path_stream(31337 + n, k);
      GridWalker w(e, rng);
      w.start(0, 0, 0);
      while (w.state() < n) w.step();
      h[k] = w.level();
    }
    double mean = 0;
    for (double x : h) mean += x;
    mean /= paths;
    double m2 = 0, m4 = 0;
    for (double x : h) {
      m2 += (x - mean) * (x - mean);
      m4 += std::pow(x - mean, 4);
    }
    const double var = m2 / (paths - 1);
    m4 /= paths;
    const double se_mean = std::sqrt(var / paths);
    const double se_var = std::sqrt((m4 - var * var) / paths);
    const double zm = std::abs(mean - u) / se_mean, zv = std::abs(var - u * u / n) / se_var;
    pass = pass && zm <= 3 && zv <= 3;
    detail += " n=" + std::to_string(n) + " mean " + fmt("%.4f", mean) + " (" + fmt("%.2f", zm) +
              " SE) var " + fmt("%.4f", var) + " (" + fmt("%.2f", zv) + " SE);";
  }
  auto mc = mc_ruin(m, u, 0, 1000000, 100000, 8888);
  const double ref = mc.value.row(0).sum(), se = mc.std_error(0, 0);
  detail += " MC ruin " + fmt("%.6f", ref) + " +- " + fmt("%.6f", se) + ";";
  PsiOptions o;
  o.mode = SeriesMode::resummed;
  o.n_max = 4000;
  o.eps_tail = 1e-9;
  o.anderson = 5;
  const auto g = LevelDurationGrid::defaults(m);
  double prev_gap = INFINITY, gap = 0;
  for (int n : {1, 4, 16}) {
    const auto r = ruin_descriptor(m, u, n, 0, g, o);
    gap = std::abs(r.matrix.sum() - ref);
    pass = pass && r.converged && gap < prev_gap;
    prev_gap = gap;
    detail += " n=" + std::to_string(n) + " psi* " + fmt("%.6f", r.matrix.sum()) + " gap " +
              fmt("%.2e", gap) + " (" + std::to_string(r.n_used) + " it);";
  }
  pass = pass && gap <= 3 * se;
  return {pass, detail};
}

Outcome criterion9() {
  int checks = 0, failed = 0;
  std::string first_fail;
  auto check = [&](bool ok, const std::string& what) {
    ++checks;
    if (!ok) {
      ++failed;
      if (first_fail.empty()) first_fail = what;
    }
  };
  for (const auto& file : gallery::gallery_files()) {
    auto m = gallery::load(file);
    check(validate_model(m).pass(), file + ": validate_model");
    for (double u = 0; u <= 8; u += 0.0625) {
      auto k = m.kernel.uniformized(u);
      check(k.c.minCoeff() >= 0 && k.d.minCoeff() >= 0 &&
                ((k.c + k.d).rowwise().sum().array() - 1).abs().maxCoeff() < 1e-12,
            file + ": row-stochastic Cbar + Dbar");
    }
    for (double x : {0.5, 2.0, 6.0}) {
      Matrix g = survival_matrix(m.kernel, 0, x, 1e-2).g;
      check(g.minCoeff() >= -1e-14 && g.rowwise().sum().maxCoeff() <= 1 + 1e-9,
            file + ": substochastic G");
    }
    LevelDurationGrid grid(8.0 / m.kernel.gamma() / 32, 32,
                           2 * 8.0 / m.kernel.gamma() / 32, 64);
    BridgeOptions o0, o1;
    o0.n_max = o1.n_max = 6;
    o1.theta1 = 0.7;
    o1.theta2 = 0.9;
    auto t0 = bridge_recursion(m, grid, o0);
    auto t1 = bridge_recursion(m, grid, o1);
    auto again = bridge_recursion(m, grid, o0);
    Matrix partial = Matrix::Zero(t0.np, t0.nm);
    for (int n = 2; n <= 6; ++n) {
      const auto& s = t0.at(n);
      check(*std::min_element(s.data(), s.data() + s.size()) >= 0, file + ": nonnegative tensor");
      check(t0.clamp[n - 2] <= 1e-10, file + ": clamp below 1e-10");
      check(s.max_abs_diff(again.at(n)) == 0.0, file + ": bit-reproducible tensor");
      const Matrix l0 = integrate_bridge(s, grid, 0), l1 = integrate_bridge(t1.at(n), grid, 0);
      check(l1.minCoeff() >= 0 && (l1 - l0).maxCoeff() <= 1e-15, file + ": theta monotone");
      Matrix next = partial + l0;
      check((next - partial).minCoeff() >= 0 && next.rowwise().sum().maxCoeff() <= 1.0,
            file + ": partial sums monotone and bounded");
      partial = next;
    }
    auto a = mc_first_return(m, 0, 0.2, 0.2, 4000, 300, 99, Exec::serial);
    auto b = mc_first_return(m, 0, 0.2, 0.2, 4000, 300, 99, Exec::parallel);
    check((a.value - b.value).cwiseAbs().maxCoeff() == 0.0, file + ": bit-reproducible MC");
  }
  return {failed == 0, std::to_string(checks - failed) + "/" + std::to_string(checks) +
                           " invariant checks pass" +
                           (first_fail.empty() ? "" : "; first failure: " + first_fail)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "product integral equals expm for constant kernels", 5, criterion1},
      {2, "cocycle of the survival matrix", 5, criterion2},
      {3, "IPH marginal laws (KS)", 60, criterion3},
      {4, "2-bridge mass against Monte Carlo", 300, criterion4},
      {5, "recursion partial sum against Monte Carlo", 600, criterion5},
      {6, "first return against the Riccati oracle with refinement", 900, criterion6},
      {7, "calendar-time truncation rate", 120, criterion7},
      {8, "Erlangization ramp and ruin convergence", 900, criterion8},
      {9, "structural invariants across the gallery", 120, criterion9},
  };
  std::vector<int> pick;
  for (int k = 1; k < argc; ++k) pick.push_back(std::atoi(argv[k]));
  bool all_pass = true;
  for (const auto& c : all) {
    if (!pick.empty() && std::find(pick.begin(), pick.end(), c.id) == pick.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = o.pass && secs < c.budget_s;
    all_pass = all_pass && ok;
    std::printf("%s criterion %d (%s): %s [%.1f s, budget %.0f s]\n", ok ? "PASS" : "FAIL", c.id,
                c.name, o.detail.c_str(), secs, c.budget_s);
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
