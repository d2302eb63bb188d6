#pragma once

#include "fluidrisk/bridge.hpp"
#include "fluidrisk/model.hpp"
#include "fluidrisk/parallel.hpp"

#include <cmath>
#include <vector>

namespace fluidrisk {

struct DescriptorResult {
  Matrix matrix;  // |S+| x |S-|, or 1 x |S-| for ruin
  int n_used = 0;
  double tail_estimate = 0;
  bool converged = false;
  std::vector<double> increments;  // sup-norm increment per order (or iteration)
  double theta1 = 0, theta2 = 0, z = 0;
  double t = NAN, u = NAN;
  int n_stages = 0;
};

enum class SeriesMode {
  by_order,  // partial sums over n = 2..N
  resummed,  // fixed point over decomposition trees of growing depth
};

struct PsiOptions {
  double theta1 = 0, theta2 = 0;
  int n_max = 8;  // orders (by_order) or iterations (resummed)
  double eps_tail = 1e-5;
  SeriesMode mode = SeriesMode::by_order;
  int oversample = 4;
  int anderson = 0;  // resummed only: Anderson history length, 0 = plain iteration
  Exec exec = Exec::parallel;
};

// First-return descriptor at initial duration z (a duration node).
DescriptorResult psi(const FluidModel& model, double z, const LevelDurationGrid& grid,
                     const PsiOptions& opts);

// e^{-m (log m - log(gamma t) - 1)}
double calendar_rate_bound(int m, double gamma_t);
// P(Poisson(mu) >= m)
double poisson_tail(int m, double mu);

// U_max = t + z (duration nodes du = U_max / m_nodes), levels up to max|r| t.
// z must be a multiple of the resulting du.
LevelDurationGrid finite_time_grid(const FluidModel& model, double z, double t,
                                   int m_nodes = 64, int q_half = 32);

struct FiniteTimeOptions {
  int m_max = 40;
  double eps = 1e-5;
  int oversample = 4;
  Exec exec = Exec::parallel;
};

// Requires D = 0. The order m is the smallest with calendar_rate_bound(m) < eps
// (capped at m_max); increments are checked against the Poisson tail.
DescriptorResult finite_time_return(const FluidModel& model, double z, double t,
                                    const LevelDurationGrid& grid,
                                    const FiniteTimeOptions& opts = {});

// States 0..n-1 are the Erlang ramp (rate +1, exit n/u), then the original
// states. The last ramp state feeds i0 through an arrival.
FluidModel erlangize(const FluidModel& model, double u, int n_stages, int i0);

// Row of the erlangized first-return matrix for the first ramp state.
DescriptorResult ruin_descriptor(const FluidModel& model, double u, int n_stages, int i0,
                                 const LevelDurationGrid& grid, const PsiOptions& opts);

}  // namespace fluidrisk
