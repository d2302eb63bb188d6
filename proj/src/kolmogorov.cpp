#include "fluidrisk/kolmogorov.hpp"

#include "fluidrisk/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

namespace fluidrisk {

Matrix expm(const Matrix& a) { return a.exp(); }

namespace {

// Mesh points of [a, b]: breakpoints inside, then full steps plus remainder
// within each piece.
std::vector<double> pieces(const DurationKernel& kernel, double a, double b) {
  std::vector<double> cuts{a};
  for (double bp : kernel.breakpoints())
    if (bp > a && bp < b) cuts.push_back(bp);
  cuts.push_back(b);
  return cuts;
}

template <class F>
void for_each_substep(double a, double b, double step, F&& f) {
  const double len = b - a;
  if (len <= 0) return;
  long full = static_cast<long>(std::floor(len / step * (1 + 1e-12)));
  double x = a;
  for (long k = 0; k < full; ++k) {
    double nx = (k + 1 == full && std::abs(a + full * step - b) <= 1e-12 * std::max(1.0, b))
                    ? b
                    : a + (k + 1) * step;
    f(x, nx);
    x = nx;
  }
  if (b - x > 1e-13 * std::max(1.0, std::abs(b))) f(x, b);
}

void check_finite(const Matrix& m) {
  if (!m.allFinite()) throw NumericError("non-finite kernel value");
}

}  // namespace

Matrix survival_fixed(const DurationKernel& kernel, double s, double t, double step) {
  if (!(s >= 0) || !(t >= s)) throw DomainError("survival matrix needs 0 <= s <= t");
  if (!(step > 0)) throw DomainError("step must be positive");
  const int p = kernel.dim();
  Matrix y = Matrix::Identity(p, p);
  Matrix c_hi, c_mid, c_lo, d;
  auto cuts = pieces(kernel, s, t);
  // Backwards: the last piece is integrated first. Within [lo, hi) the kernel
  // is evaluated right-continuously except at hi where the left limit is used.
  for (std::size_t k = cuts.size() - 1; k >= 1; --k) {
    const double lo = cuts[k - 1], hi = cuts[k];
    std::vector<std::pair<double, double>> steps;
    for_each_substep(lo, hi, step, [&](double a, double b) { steps.emplace_back(a, b); });
    for (auto it = steps.rbegin(); it != steps.rend(); ++it) {
      const double a = it->first, b = it->second, h = b - a;
      kernel.eval_into(b, b >= hi, c_hi, d);
      kernel.eval_into(0.5 * (a + b), false, c_mid, d);
      kernel.eval_into(a, false, c_lo, d);
      check_finite(c_hi);
      check_finite(c_mid);
      check_finite(c_lo);
      // y' = C y when running s downwards (dY/d(-s) = C Y)
      Matrix k1 = c_hi * y;
      Matrix k2 = c_mid * (y + 0.5 * h * k1);
      Matrix k3 = c_mid * (y + 0.5 * h * k2);
      Matrix k4 = c_lo * (y + h * k3);
      y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
  }
  return y;
}

SurvivalMatrix survival_matrix(const DurationKernel& kernel, double s, double t, double step) {
  SurvivalMatrix out;
  out.s = s;
  out.t = t;
  Matrix coarse = survival_fixed(kernel, s, t, step);
  out.g = survival_fixed(kernel, s, t, step / 2);
  out.error_estimate = (coarse - out.g).cwiseAbs().rowwise().sum().maxCoeff() / 15.0;
  return out;
}

SurvivalSweep::SurvivalSweep(const DurationKernel& kernel, double step)
    : kernel_(kernel), step_(step) {
  if (!(step > 0)) throw DomainError("step must be positive");
  const int p = kernel.dim();
  g_ = Matrix::Identity(p, p);
  n_ = Matrix::Zero(p, p);
}

void SurvivalSweep::advance_segment(double b) {
  const double lo = x_;
  for_each_substep(lo, b, step_, [&](double a, double e) {
    const double h = e - a;
    kernel_.eval_into(a, false, c0_, d0_);
    kernel_.eval_into(0.5 * (a + e), false, c1_, d1_);
    kernel_.eval_into(e, e >= b, c2_, d2_);
    check_finite(c0_);
    check_finite(c2_);
    // (G, N)' = (G C, G D)
    Matrix g1 = g_;
    Matrix kg1 = g1 * c0_, kn1 = g1 * d0_;
    Matrix g2 = g_ + 0.5 * h * kg1;
    Matrix kg2 = g2 * c1_, kn2 = g2 * d1_;
    Matrix g3 = g_ + 0.5 * h * kg2;
    Matrix kg3 = g3 * c1_, kn3 = g3 * d1_;
    Matrix g4 = g_ + h * kg3;
    Matrix kg4 = g4 * c2_, kn4 = g4 * d2_;
    g_ += h / 6.0 * (kg1 + 2 * kg2 + 2 * kg3 + kg4);
    n_ += h / 6.0 * (kn1 + 2 * kn2 + 2 * kn3 + kn4);
  });
  x_ = b;
}

void SurvivalSweep::advance_to(double x) {
  if (x < x_) throw DomainError("survival sweep cannot move backwards");
  auto cuts = pieces(kernel_, x_, x);
  for (std::size_t k = 1; k < cuts.size(); ++k) advance_segment(cuts[k]);
}

double interarrival_density(const FluidModel& model, const std::vector<double>& y, double step) {
  Eigen::RowVectorXd v = model.alpha.transpose();
  Matrix c, d;
  for (double yk : y) {
    if (!(yk >= 0)) throw DomainError("interarrival times must be nonnegative");
    Matrix g = survival_fixed(model.kernel, 0.0, yk, step);
    model.kernel.eval_into(yk, false, c, d);
    v = v * g * d;
  }
  return std::max(0.0, v.sum());
}

RenewalOperator renewal_operator(const DurationKernel& kernel, double u_max, double step) {
  if (!(u_max > 0) || !(step > 0)) throw DomainError("u_max and step must be positive");
  SurvivalSweep sw(kernel, step);
  sw.advance_to(u_max);
  RenewalOperator out;
  out.n = sw.n();
  out.u_max = u_max;
  out.tail_bound = std::max(0.0, sw.g().rowwise().sum().maxCoeff());
  return out;
}

RenewalOperator renewal_operator_auto(const DurationKernel& kernel, double step, double tol,
                                      double u_start, double u_ceiling) {
  const double g = kernel.gamma();
  if (u_start <= 0) u_start = 8.0 / g;
  if (u_ceiling <= 0) u_ceiling = 1e4 / g;
  SurvivalSweep sw(kernel, step);
  double u = u_start;
  RenewalOperator out;
  for (;;) {
    sw.advance_to(u);
    out.tail_bound = std::max(0.0, sw.g().rowwise().sum().maxCoeff());
    if (out.tail_bound < tol || u >= u_ceiling) break;
    u = std::min(2 * u, u_ceiling);
  }
  out.n = sw.n();
  out.u_max = u;
  out.converged = out.tail_bound < tol;
  return out;
}

Vector iph_initial(const FluidModel& model, int n, const RenewalOperator& op) {
  if (n < 1) throw DomainError("arrival index must be >= 1");
  Eigen::RowVectorXd b = model.alpha.transpose();
  for (int k = 1; k < n; ++k) b = b * op.n;
  return b.transpose();
}

IphMarginal iph_marginal(const FluidModel& model, int n, double y, double step, double tol) {
  if (n < 1) throw DomainError("arrival index must be >= 1");
  if (!(y >= 0)) throw DomainError("duration must be nonnegative");
  IphMarginal out;
  if (n == 1) {
    out.initial = model.alpha;
  } else {
    RenewalOperator op = renewal_operator_auto(model.kernel, step, tol);
    out.initial = iph_initial(model, n, op);
    out.tail_bound = op.tail_bound;
    out.truncation_ok = op.converged;
  }
  out.initial_mass = out.initial.sum();
  Matrix g = survival_fixed(model.kernel, 0.0, y, step);
  KernelValue kv = model.kernel.eval(y);
  Vector exit = -kv.c.rowwise().sum();
  out.density = std::max(0.0, out.initial.dot(g * exit));
  return out;
}

std::vector<double> iph_cdf(const DurationKernel& kernel, const Vector& beta,
                            const std::vector<double>& ys, double step) {
  SurvivalSweep sw(kernel, step);
  std::vector<double> out;
  out.reserve(ys.size());
  const double mass = beta.sum();
  for (double y : ys) {
    sw.advance_to(y);
    out.push_back(mass - beta.dot(sw.g().rowwise().sum()));
  }
  return out;
}

}  // namespace fluidrisk
