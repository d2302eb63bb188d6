#include "fluidrisk/model.hpp"

#include "fluidrisk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fluidrisk {

BoundViolation::BoundViolation(double u, int state)
    : ModelError("gamma does not bound the exit rate of state " + std::to_string(state) +
                 " at duration " + std::to_string(u)),
      u_(u),
      state_(state) {}

StateSpace::StateSpace(std::vector<double> rates) : rates_(std::move(rates)) {
  position_.resize(rates_.size());
  for (int i = 0; i < size(); ++i) {
    if (!(rates_[i] != 0.0) || !std::isfinite(rates_[i]))
      throw ModelError("state " + std::to_string(i) + " has rate 0 or non-finite rate");
    if (rates_[i] > 0) {
      position_[i] = static_cast<int>(plus_.size());
      plus_.push_back(i);
    } else {
      position_[i] = static_cast<int>(minus_.size());
      minus_.push_back(i);
    }
  }
}

double Hazard::operator()(double u) const {
  switch (family) {
    case Family::exponential:
      return a;
    case Family::pareto:
      return a / (b + u);
    case Family::weibull: {
      if (a == 1.0) return 1.0 / b;
      double h = (u == 0.0) ? (a < 1.0 ? INFINITY : 0.0) : (a / b) * std::pow(u / b, a - 1.0);
      return std::min(h, cap);
    }
  }
  return 0.0;
}

double Hazard::supremum() const {
  switch (family) {
    case Family::exponential:
      return a;
    case Family::pareto:
      return a / b;
    case Family::weibull:
      return a == 1.0 ? 1.0 / b : cap;
  }
  return 0.0;
}

namespace {

void require_square(const Matrix& m, int p, const char* what) {
  if (m.rows() != p || m.cols() != p)
    throw ModelError(std::string(what) + " must be " + std::to_string(p) + "x" +
                     std::to_string(p));
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ModelError(std::string(what) + " has non-finite entries");
}

}  // namespace

DurationKernel DurationKernel::constant(Matrix c, Matrix d, double gamma) {
  DurationKernel k;
  k.kind_ = Kind::constant;
  k.dim_ = static_cast<int>(c.rows());
  require_square(c, k.dim_, "C");
  require_square(d, k.dim_, "D");
  require_finite(c, "C");
  require_finite(d, "D");
  if (!(gamma > 0) || !std::isfinite(gamma)) throw ModelError("gamma must be positive");
  k.gamma_ = gamma;
  k.pc_.push_back(std::move(c));
  k.pd_.push_back(std::move(d));
  return k;
}

DurationKernel DurationKernel::piecewise(std::vector<double> breakpoints, std::vector<Matrix> c,
                                         std::vector<Matrix> d, double gamma) {
  DurationKernel k;
  k.kind_ = Kind::piecewise;
  if (c.empty()) throw ModelError("piecewise kernel needs at least one piece");
  if (c.size() != breakpoints.size() + 1 || d.size() != c.size())
    throw ModelError("piecewise kernel needs one more piece than breakpoints");
  for (std::size_t i = 0; i < breakpoints.size(); ++i) {
    if (!(breakpoints[i] > 0) || (i > 0 && !(breakpoints[i] > breakpoints[i - 1])))
      throw ModelError("breakpoints must be positive and strictly increasing");
  }
  k.dim_ = static_cast<int>(c[0].rows());
  for (std::size_t i = 0; i < c.size(); ++i) {
    require_square(c[i], k.dim_, "C piece");
    require_square(d[i], k.dim_, "D piece");
    require_finite(c[i], "C piece");
    require_finite(d[i], "D piece");
  }
  if (!(gamma > 0) || !std::isfinite(gamma)) throw ModelError("gamma must be positive");
  k.gamma_ = gamma;
  k.breaks_ = std::move(breakpoints);
  k.pc_ = std::move(c);
  k.pd_ = std::move(d);
  return k;
}

DurationKernel DurationKernel::hazard(std::vector<Hazard> h, Matrix routing, double gamma) {
  DurationKernel k;
  k.kind_ = Kind::hazard;
  k.dim_ = static_cast<int>(h.size());
  if (k.dim_ == 0) throw ModelError("hazard kernel needs at least one state");
  require_square(routing, k.dim_, "routing");
  require_finite(routing, "routing");
  for (const auto& hz : h) {
    if (!(hz.a > 0) || !(hz.b > 0)) throw ModelError("hazard parameters must be positive");
    if (hz.family == Hazard::Family::weibull && hz.a != 1.0 && !(hz.cap > 0))
      throw ModelError("weibull hazard with shape != 1 needs a positive cap");
  }
  if (!(gamma > 0) || !std::isfinite(gamma)) throw ModelError("gamma must be positive");
  k.gamma_ = gamma;
  k.hazards_ = std::move(h);
  k.routing_ = std::move(routing);
  return k;
}

int DurationKernel::piece_index(double u, bool left_limit) const {
  // right-continuous: number of breakpoints <= u; left limit: number < u
  auto it = left_limit ? std::lower_bound(breaks_.begin(), breaks_.end(), u)
                       : std::upper_bound(breaks_.begin(), breaks_.end(), u);
  return static_cast<int>(it - breaks_.begin());
}

void DurationKernel::eval_into(double u, bool left_limit, Matrix& c, Matrix& d) const {
  if (!(u >= 0)) throw DomainError("duration must be nonnegative");
  switch (kind_) {
    case Kind::constant:
      c = pc_[0];
      d = pd_[0];
      return;
    case Kind::piecewise: {
      int k = piece_index(u, left_limit);
      c = pc_[k];
      d = pd_[k];
      return;
    }
    case Kind::hazard: {
      c.setZero(dim_, dim_);
      d.resize(dim_, dim_);
      for (int i = 0; i < dim_; ++i) {
        double h = hazards_[i](u);
        c(i, i) = -h;
        d.row(i) = routing_.row(i) * h;
      }
      return;
    }
  }
}

KernelValue DurationKernel::eval(double u) const {
  KernelValue v;
  eval_into(u, false, v.c, v.d);
  return v;
}

KernelValue DurationKernel::eval_left(double u) const {
  KernelValue v;
  eval_into(u, true, v.c, v.d);
  return v;
}

KernelValue DurationKernel::uniformized(double u) const {
  KernelValue v = eval(u);
  v.c /= gamma_;
  v.d /= gamma_;
  v.c.diagonal().array() += 1.0;
  for (int i = 0; i < dim_; ++i)
    if (v.c(i, i) < -1e-12) throw BoundViolation(u, i);
  return v;
}

void DurationKernel::uniformized_row(double u, int i, double* cbar, double* dbar) const {
  const double g = 1.0 / gamma_;
  switch (kind_) {
    case Kind::constant:
    case Kind::piecewise: {
      int k = kind_ == Kind::constant ? 0 : piece_index(u, false);
      const Matrix& c = pc_[k];
      const Matrix& d = pd_[k];
      for (int j = 0; j < dim_; ++j) {
        cbar[j] = c(i, j) * g + (i == j ? 1.0 : 0.0);
        dbar[j] = d(i, j) * g;
      }
      return;
    }
    case Kind::hazard: {
      double h = hazards_[i](u) * g;
      for (int j = 0; j < dim_; ++j) {
        cbar[j] = (i == j) ? 1.0 - h : 0.0;
        dbar[j] = routing_(i, j) * h;
      }
      return;
    }
  }
}

double DurationKernel::rate_supremum() const {
  double s = 0.0;
  switch (kind_) {
    case Kind::constant:
    case Kind::piecewise:
      for (const auto& c : pc_)
        for (int i = 0; i < dim_; ++i) s = std::max(s, -c(i, i));
      break;
    case Kind::hazard:
      for (const auto& h : hazards_) s = std::max(s, h.supremum());
      break;
  }
  return s;
}

bool DurationKernel::arrivals_vanish() const {
  switch (kind_) {
    case Kind::constant:
    case Kind::piecewise:
      for (const auto& d : pd_)
        if (d.cwiseAbs().maxCoeff() != 0.0) return false;
      return true;
    case Kind::hazard:
      return routing_.cwiseAbs().maxCoeff() == 0.0;
  }
  return false;
}

FluidModel make_model(std::string name, std::vector<double> rates, DurationKernel kernel,
                      Vector alpha, Vector sigma, Matrix cost) {
  FluidModel m;
  m.name = std::move(name);
  m.space = StateSpace(std::move(rates));
  const int p = m.space.size();
  if (p == 0) throw ModelError("state space is empty");
  if (m.space.plus().empty() || m.space.minus().empty())
    throw ModelError(
        "both S+ and S- must be nonempty: first-return analysis is undefined otherwise");
  if (kernel.dim() != p)
    throw ModelError("kernel dimension " + std::to_string(kernel.dim()) +
                     " does not match state count " + std::to_string(p));
  if (alpha.size() != p) throw ModelError("alpha must have one entry per state");
  if (sigma.size() != p) throw ModelError("sigma must have one entry per state");
  if (cost.rows() != p || cost.cols() != p) throw ModelError("cost_matrix must be p x p");
  if (!alpha.allFinite() || !sigma.allFinite() || !cost.allFinite())
    throw ModelError("alpha, sigma and cost_matrix must be finite");
  m.kernel = std::move(kernel);
  m.alpha = std::move(alpha);
  m.sigma = std::move(sigma);
  m.cost = std::move(cost);
  return m;
}

BlockView BlockView::split(const Matrix& m, const StateSpace& space) {
  const auto& P = space.plus();
  const auto& M = space.minus();
  auto take = [&](const std::vector<int>& r, const std::vector<int>& c) {
    Matrix out(r.size(), c.size());
    for (std::size_t a = 0; a < r.size(); ++a)
      for (std::size_t b = 0; b < c.size(); ++b) out(a, b) = m(r[a], c[b]);
    return out;
  };
  return {take(P, P), take(P, M), take(M, P), take(M, M)};
}

Matrix BlockView::assemble(const StateSpace& space) const {
  const auto& P = space.plus();
  const auto& M = space.minus();
  Matrix out(space.size(), space.size());
  auto put = [&](const Matrix& blk, const std::vector<int>& r, const std::vector<int>& c) {
    for (std::size_t a = 0; a < r.size(); ++a)
      for (std::size_t b = 0; b < c.size(); ++b) out(r[a], c[b]) = blk(a, b);
  };
  put(pp, P, P);
  put(pm, P, M);
  put(mp, M, P);
  put(mm, M, M);
  return out;
}

BlockView cost_weights(const FluidModel& model, double theta2) {
  if (!(theta2 >= 0)) throw DomainError("theta2 must be nonnegative");
  Matrix k = (-theta2 * model.cost.array()).exp().matrix();
  // 0 * inf style costs do not occur: costs are finite and theta2 finite.
  return BlockView::split(k, model.space);
}

bool ValidationReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.pass ? "pass " : "FAIL ") << c.name;
    if (!c.pass) {
      os << " worst=" << c.worst;
      if (c.i >= 0) os << " u=" << c.u << " i=" << c.i;
      if (c.j >= 0) os << " j=" << c.j;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<double> default_validation_samples(const DurationKernel& kernel, double u_max) {
  std::vector<double> u{0.0};
  const int n = 512;
  const double lo = std::min(1e-6, u_max * 1e-6);
  for (int k = 0; k < n; ++k)
    u.push_back(lo * std::pow(u_max / lo, static_cast<double>(k) / (n - 1)));
  for (double b : kernel.breakpoints()) u.push_back(b);
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

namespace {

void note(InvariantCheck& c, double v, double tol, double u, int i, int j) {
  if (v > tol && v > c.worst) {
    c.pass = false;
    c.worst = v;
    c.u = u;
    c.i = i;
    c.j = j;
  }
}

}  // namespace

ValidationReport validate_model(const FluidModel& model, const std::vector<double>& u_samples) {
  if (u_samples.empty()) throw DomainError("validation needs at least one duration sample");
  for (std::size_t k = 0; k < u_samples.size(); ++k)
    if (!(u_samples[k] >= 0) || (k > 0 && u_samples[k] < u_samples[k - 1]))
      throw DomainError("validation samples must be sorted and nonnegative");
  const int p = model.dim();
  if (model.kernel.dim() != p) throw ModelError("kernel dimension does not match state space");

  InvariantCheck offdiag{"C off-diagonal >= 0"};
  InvariantCheck dpos{"D >= 0"};
  InvariantCheck rows{"rows of C+D sum to 0"};
  InvariantCheck bound{"gamma bounds exit rates"};
  InvariantCheck stoch{"Cbar+Dbar row-stochastic and nonnegative"};
  const double gamma = model.kernel.gamma();
  Matrix c, d;
  for (double u : u_samples) {
    model.kernel.eval_into(u, false, c, d);
    for (int i = 0; i < p; ++i) {
      double row = 0.0;
      for (int j = 0; j < p; ++j) {
        if (i != j) note(offdiag, -c(i, j), 0.0, u, i, j);
        note(dpos, -d(i, j), 0.0, u, i, j);
        row += c(i, j) + d(i, j);
      }
      note(rows, std::abs(row), 1e-10, u, i, -1);
      note(bound, -c(i, i) - gamma, 1e-12 * gamma, u, i, -1);
      double srow = 0.0;
      for (int j = 0; j < p; ++j) {
        double cb = c(i, j) / gamma + (i == j ? 1.0 : 0.0);
        double db = d(i, j) / gamma;
        note(stoch, -std::min(cb, db), 1e-12, u, i, j);
        srow += cb + db;
      }
      note(stoch, std::abs(srow - 1.0), 1e-10, u, i, -1);
    }
  }
  InvariantCheck sup{"analytic exit-rate supremum <= gamma"};
  note(sup, model.kernel.rate_supremum() - gamma, 1e-12 * gamma, 0.0, -1, -1);

  InvariantCheck alpha{"alpha is a probability vector"};
  for (int i = 0; i < p; ++i) note(alpha, -model.alpha[i], 0.0, 0.0, i, -1);
  note(alpha, std::abs(model.alpha.sum() - 1.0), 1e-12, 0.0, -1, -1);
  InvariantCheck sigma{"sigma >= 0 and zero on S-"};
  for (int i = 0; i < p; ++i) {
    note(sigma, -model.sigma[i], 0.0, 0.0, i, -1);
    if (!model.space.is_plus(i)) note(sigma, std::abs(model.sigma[i]), 0.0, 0.0, i, -1);
  }
  InvariantCheck cost{"cost matrix >= 0"};
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) note(cost, -model.cost(i, j), 0.0, 0.0, i, j);

  ValidationReport r;
  r.checks = {offdiag, dpos, rows, bound, stoch, sup, alpha, sigma, cost};
  return r;
}

ValidationReport validate_model(const FluidModel& model) {
  return validate_model(model,
                        default_validation_samples(model.kernel, 8.0 / model.kernel.gamma()));
}

}  // namespace fluidrisk
