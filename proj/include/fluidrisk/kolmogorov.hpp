#pragma once

#include "fluidrisk/model.hpp"

#include <vector>

namespace fluidrisk {

// Padé-13 scaling and squaring.
Matrix expm(const Matrix& a);

struct SurvivalMatrix {
  double s = 0, t = 0;
  Matrix g;
  double error_estimate = 0;  // |G_h - G_{h/2}|_inf / 15
};

// One RK4 pass of dY/ds = -C(s) Y backwards from Y(t) = I; breakpoints are on
// the mesh, and each piece is cut into full steps plus a remainder substep.
Matrix survival_fixed(const DurationKernel& kernel, double s, double t, double step);
// Step-halving pair; returns the step/2 solution.
SurvivalMatrix survival_matrix(const DurationKernel& kernel, double s, double t, double step);

// Forward RK4 sweep of G(x) = G(0, x) together with N(x) = int_0^x G D.
class SurvivalSweep {
 public:
  SurvivalSweep(const DurationKernel& kernel, double step);
  // Target must not lie behind the current point.
  void advance_to(double x);
  double x() const { return x_; }
  const Matrix& g() const { return g_; }
  const Matrix& n() const { return n_; }

 private:
  void advance_segment(double b);

  const DurationKernel& kernel_;
  double step_;
  double x_ = 0;
  Matrix g_, n_;
  Matrix c0_, d0_, c1_, d1_, c2_, d2_;
};

double interarrival_density(const FluidModel& model, const std::vector<double>& y,
                            double step = 1e-2);

struct RenewalOperator {
  Matrix n;
  double tail_bound = 0;  // max row sum of G(u_max)
  double u_max = 0;
  bool converged = true;
};

// N = int_0^{u_max} G(s) D(s) ds integrated jointly with G (4th order).
RenewalOperator renewal_operator(const DurationKernel& kernel, double u_max, double step);
// Doubles u_max from u_start until the tail bound is below tol or u_ceiling is hit.
RenewalOperator renewal_operator_auto(const DurationKernel& kernel, double step,
                                      double tol = 1e-8, double u_start = 0,
                                      double u_ceiling = 0);

struct IphMarginal {
  double density = 0;
  Vector initial;  // alpha N^{n-1}
  double initial_mass = 0;
  double tail_bound = 0;
  bool truncation_ok = true;
};

Vector iph_initial(const FluidModel& model, int n, const RenewalOperator& op);
IphMarginal iph_marginal(const FluidModel& model, int n, double y, double step = 1e-2,
                         double tol = 1e-8);
// Distribution function of S_n - S_{n-1} at sorted points ys (defective mass
// included): beta 1 - beta G(y) 1.
std::vector<double> iph_cdf(const DurationKernel& kernel, const Vector& beta,
                            const std::vector<double>& ys, double step = 1e-2);

}  // namespace fluidrisk
