#include "fluidrisk/simulation.hpp"

#include "fluidrisk/errors.hpp"
#include "fluidrisk/rng.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace fluidrisk {

GridWalker::GridWalker(const FluidModel& model, std::mt19937_64& rng)
    : model_(model),
      rng_(rng),
      exp_(model.kernel.gamma()),
      cbar_(model.dim()),
      dbar_(model.dim()) {}

void GridWalker::start(int state, double z, double level) {
  t_ = 0;
  f_ = level;
  u_ = u_before_ = z;
  div_ = cost_ = cost_before_ = 0;
  j_ = j_before_ = state;
  arrived_ = false;
}

void GridWalker::step() {
  const double e = exp_(rng_);
  f_ += model_.space.rate(j_) * e;
  div_ += model_.sigma[j_] * e;
  t_ += e;
  u_ += e;
  u_before_ = u_;
  j_before_ = j_;
  cost_before_ = cost_;

  const int p = model_.dim();
  model_.kernel.uniformized_row(u_, j_, cbar_.data(), dbar_.data());
  double total = 0.0;
  for (int k = 0; k < p; ++k) {
    if (cbar_[k] < -1e-9 || dbar_[k] < -1e-9) throw BoundViolation(u_, j_);
    total += cbar_[k] + dbar_[k];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw NumericError("transition probabilities at duration " + std::to_string(u_) +
                       " sum to " + std::to_string(total));

  double x = unif_(rng_) * total;
  for (int k = 0; k < p; ++k) {
    if (x < cbar_[k]) {
      j_ = k;
      arrived_ = false;
      return;
    }
    x -= cbar_[k];
  }
  int last = j_;
  for (int k = 0; k < p; ++k) {
    if (dbar_[k] > 0) last = k;
    if (x < dbar_[k]) {
      last = k;
      break;
    }
    x -= dbar_[k];
  }
  // rounding may leave x slightly above the last bucket; last positive entry wins
  cost_ += model_.cost(j_, last);
  j_ = last;
  arrived_ = true;
  u_ = 0.0;
}

int draw_state(const Vector& law, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, law.sum());
  double x = unif(rng);
  int last = 0;
  for (int i = 0; i < law.size(); ++i) {
    if (law[i] > 0) last = i;
    if (x < law[i]) return i;
    x -= law[i];
  }
  return last;
}

int draw_plus_state(const FluidModel& model, std::mt19937_64& rng) {
  Vector law = Vector::Zero(model.dim());
  for (int i : model.space.plus()) law[i] = model.alpha[i];
  if (!(law.sum() > 0)) throw DomainError("alpha puts no mass on S+");
  return draw_state(law, rng);
}

PathRecord simulate_path(const FluidModel& model, double z, double horizon, std::uint64_t seed,
                         std::uint64_t path, int initial_state) {
  if (!(horizon > 0)) throw DomainError("horizon must be positive");
  if (!(z >= 0)) throw DomainError("initial duration must be nonnegative");
  auto rng = path_stream(seed, path);
  if (initial_state < 0) initial_state = draw_state(model.alpha, rng);
  GridWalker w(model, rng);
  w.start(initial_state, z, 0.0);

  PathRecord rec;
  rec.seed = seed;
  rec.path = path;
  auto push = [&](bool arrival) {
    rec.poisson_epochs.push_back(w.time());
    rec.states.push_back(w.state());
    rec.arrival.push_back(arrival);
    rec.durations.push_back(w.duration_before());
    rec.fluid.push_back(w.level());
    rec.dividend.push_back(w.dividend());
    rec.jump_costs.push_back(w.cost());
    if (arrival) rec.arrival_epochs.push_back(w.time());
  };
  rec.arrival_epochs.push_back(0.0);
  push(false);
  for (;;) {
    w.step();
    if (w.time() >= horizon) break;
    push(w.arrived());
  }
  return rec;
}

void write_path_csv(std::ostream& os, const PathRecord& path) {
  os << "epoch,time,state,arrival_flag,duration,fluid,dividend_acc,cost_acc\n";
  char buf[512];
  for (std::size_t k = 0; k < path.poisson_epochs.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%d,%d,%.17g,%.17g,%.17g,%.17g\n", k,
                  path.poisson_epochs[k], path.states[k], path.arrival[k] ? 1 : 0,
                  path.durations[k], path.fluid[k], path.dividend[k], path.jump_costs[k]);
    os << buf;
  }
}

ReturnSample run_to_barrier(const FluidModel& model, int start_state, double z,
                            double barrier_offset, double theta1, double theta2, int max_epochs,
                            std::mt19937_64& rng) {
  GridWalker w(model, rng);
  w.start(start_state, z, 0.0);
  ReturnSample out;
  for (int n = 1; n <= max_epochs; ++n) {
    w.step();
    if (w.level() <= barrier_offset) {
      out.returned = true;
      out.exit_state = w.state_before();
      out.n_used = n;
      out.weight = std::exp(-theta1 * w.dividend() - theta2 * w.cost_before());
      return out;
    }
  }
  out.n_used = max_epochs;
  return out;
}

ReturnSample simulate_until_return(const FluidModel& model, double z, double theta1,
                                   double theta2, int max_epochs, std::uint64_t seed,
                                   std::uint64_t path, int start_state) {
  if (max_epochs < 2) throw DomainError("max_epochs must be at least 2");
  if (!(z >= 0) || !(theta1 >= 0) || !(theta2 >= 0))
    throw DomainError("z, theta1 and theta2 must be nonnegative");
  auto rng = path_stream(seed, path);
  if (start_state < 0) start_state = draw_plus_state(model, rng);
  if (!model.space.is_plus(start_state))
    throw DomainError("first return needs a start state in S+");
  return run_to_barrier(model, start_state, z, 0.0, theta1, theta2, max_epochs, rng);
}

}  // namespace fluidrisk
