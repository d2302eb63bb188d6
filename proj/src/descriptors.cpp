#include "fluidrisk/descriptors.hpp"

#include "fluidrisk/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fluidrisk {

namespace {

void check_theta(double theta1, double theta2) {
  if (!(theta1 >= 0) || !(theta2 >= 0)) throw DomainError("theta1 and theta2 must be >= 0");
}

}  // namespace

DescriptorResult psi(const FluidModel& model, double z, const LevelDurationGrid& grid,
                     const PsiOptions& opts) {
  check_theta(opts.theta1, opts.theta2);
  if (opts.n_max < 2) throw DomainError("n_max must be at least 2");
  const int zi = grid.z_index(z);
  BridgeContext ctx(model, grid, opts.theta1, opts.theta2, opts.oversample);
  DescriptorResult out;
  out.theta1 = opts.theta1;
  out.theta2 = opts.theta2;
  out.z = z;
  if (opts.mode == SeriesMode::resummed) {
    ResummedBridge rb = resummed_bridge(ctx, zi, opts.n_max, opts.eps_tail, opts.exec, opts.anderson);
    out.matrix = integrate_bridge(rb.total, grid, zi);
    out.n_used = rb.iterations;
    out.tail_estimate = rb.last_increment;
    out.converged = rb.converged;
    out.increments = rb.increments;
    return out;
  }
  BridgeRecursion rec(ctx, opts.exec);
  out.matrix = Matrix::Zero(ctx.np(), ctx.nm());
  for (int n = 2; n <= opts.n_max; ++n) {
    const Matrix inc = integrate_bridge(rec.advance(), grid, zi);
    out.matrix += inc;
    out.n_used = n;
    out.tail_estimate = inc.cwiseAbs().maxCoeff();
    out.increments.push_back(out.tail_estimate);
    if (out.tail_estimate < opts.eps_tail) {
      out.converged = true;
      break;
    }
  }
  return out;
}

double calendar_rate_bound(int m, double gamma_t) {
  return std::exp(-m * (std::log(static_cast<double>(m)) - std::log(gamma_t) - 1.0));
}

double poisson_tail(int m, double mu) {
  if (m <= 0) return 1.0;
  // 1 - sum_{k<m} e^{-mu} mu^k / k!, summed from the far side when cheaper
  double term = std::exp(-mu), below = 0;
  for (int k = 0; k < m; ++k) {
    below += term;
    term *= mu / (k + 1);
  }
  if (below < 0.5) return 1.0 - below;
  double tail = 0;
  term = std::exp(-mu + m * std::log(mu) - std::lgamma(m + 1.0));
  for (int k = m; k < m + 100000 && (term > tail * 1e-17 || k < mu); ++k) {
    tail += term;
    term *= mu / (k + 1);
  }
  return tail;
}

LevelDurationGrid finite_time_grid(const FluidModel& model, double z, double t, int m_nodes,
                                   int q_half) {
  if (!(t > 0) || !(z >= 0)) throw DomainError("finite-time grid needs t > 0 and z >= 0");
  double rmax = 0;
  for (double r : model.space.rates()) rmax = std::max(rmax, std::abs(r));
  const double du = (t + z) / m_nodes;
  LevelDurationGrid g(du, m_nodes, rmax * t / q_half, 2 * q_half);
  g.z_index(z);
  return g;
}

DescriptorResult finite_time_return(const FluidModel& model, double z, double t,
                                    const LevelDurationGrid& grid, const FiniteTimeOptions& opts) {
  if (!model.kernel.arrivals_vanish())
    throw DomainError(
        "finite-time return needs D(v) = 0 for all v: calendar time equals duration only "
        "without arrivals");
  if (!(t > 0)) throw DomainError("t must be positive");
  if (opts.m_max < 2) throw DomainError("m_max must be at least 2");
  const int zi = grid.z_index(z);
  const double limit = t + z;
  if (limit > grid.u_max() * (1 + 1e-12))
    throw DomainError("grid duration window must reach t + z");
  const double gt = model.kernel.gamma() * t;
  int m = 2;
  while (m < opts.m_max && !(calendar_rate_bound(m, gt) < opts.eps)) ++m;

  BridgeContext ctx(model, grid, 0.0, 0.0, opts.oversample);
  BridgeRecursion rec(ctx, opts.exec);
  DescriptorResult out;
  out.z = z;
  out.t = t;
  out.matrix = Matrix::Zero(ctx.np(), ctx.nm());
  for (int n = 2; n <= m; ++n) {
    const Matrix inc = integrate_bridge(rec.advance(), grid, zi, limit);
    const double worst = inc.maxCoeff();
    const double cap = poisson_tail(n, gt);
    if (worst > cap + 1e-8)
      throw NumericError("finite-time increment at order " + std::to_string(n) +
                         " exceeds the Poisson tail bound");
    out.matrix += inc;
    out.increments.push_back(inc.cwiseAbs().maxCoeff());
  }
  out.n_used = m;
  out.tail_estimate = calendar_rate_bound(m, gt);
  out.converged = out.tail_estimate < opts.eps;
  return out;
}

FluidModel erlangize(const FluidModel& model, double u, int n_stages, int i0) {
  if (!(u > 0)) throw DomainError("ramp height u must be positive");
  if (n_stages < 1) throw DomainError("n_stages must be at least 1");
  const int p = model.dim();
  if (i0 < 0 || i0 >= p || !model.space.is_plus(i0))
    throw DomainError("i0 must be a state of S+");
  const int n = n_stages, q = n + p;
  const double rate = n / u;
  const double gamma = std::max(model.kernel.gamma(), rate);

  auto lift = [&](const Matrix& c, const Matrix& d, Matrix& cs, Matrix& ds) {
    cs = Matrix::Zero(q, q);
    ds = Matrix::Zero(q, q);
    for (int k = 0; k < n; ++k) {
      cs(k, k) = -rate;
      if (k + 1 < n) cs(k, k + 1) = rate;
    }
    ds(n - 1, n + i0) = rate;
    cs.bottomRightCorner(p, p) = c;
    ds.bottomRightCorner(p, p) = d;
  };

  const auto& k = model.kernel;
  DurationKernel kernel;
  switch (k.kind()) {
    case DurationKernel::Kind::constant: {
      Matrix cs, ds;
      lift(k.pieces_c()[0], k.pieces_d()[0], cs, ds);
      kernel = DurationKernel::constant(cs, ds, gamma);
      break;
    }
    case DurationKernel::Kind::piecewise: {
      std::vector<Matrix> cs(k.pieces_c().size()), ds(k.pieces_d().size());
      for (std::size_t i = 0; i < cs.size(); ++i) lift(k.pieces_c()[i], k.pieces_d()[i], cs[i], ds[i]);
      kernel = DurationKernel::piecewise(k.breakpoints(), cs, ds, gamma);
      break;
    }
    case DurationKernel::Kind::hazard: {
      // ramp steps become arrivals here; their hazards are constant so the
      // duration reset is immaterial
      std::vector<Hazard> h(n, Hazard{Hazard::Family::exponential, rate, 1.0, 0.0});
      h.insert(h.end(), k.hazards().begin(), k.hazards().end());
      Matrix route = Matrix::Zero(q, q);
      for (int s = 0; s + 1 < n; ++s) route(s, s + 1) = 1.0;
      route(n - 1, n + i0) = 1.0;
      route.bottomRightCorner(p, p) = k.routing();
      kernel = DurationKernel::hazard(h, route, gamma);
      break;
    }
  }

  std::vector<double> rates(n, 1.0);
  rates.insert(rates.end(), model.space.rates().begin(), model.space.rates().end());
  Vector alpha = Vector::Zero(q);
  alpha(0) = 1.0;
  Vector sigma = Vector::Zero(q);
  sigma.tail(p) = model.sigma;
  Matrix cost = Matrix::Zero(q, q);
  cost.bottomRightCorner(p, p) = model.cost;
  return make_model(model.name + "+erlang" + std::to_string(n), rates, kernel, alpha, sigma,
                    cost);
}

DescriptorResult ruin_descriptor(const FluidModel& model, double u, int n_stages, int i0,
                                 const LevelDurationGrid& grid, const PsiOptions& opts) {
  const FluidModel aug = erlangize(model, u, n_stages, i0);
  DescriptorResult out = psi(aug, 0.0, grid, opts);
  out.matrix = Matrix(out.matrix.row(0));
  out.u = u;
  out.n_stages = n_stages;
  return out;
}

}  // namespace fluidrisk
