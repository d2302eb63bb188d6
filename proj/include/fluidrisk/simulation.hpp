#pragma once

#include "fluidrisk/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <vector>

namespace fluidrisk {

struct PathRecord {
  std::vector<double> poisson_epochs;  // T_0 = 0 < T_1 < ... < T_K < horizon
  std::vector<int> states;             // J(T_k)
  std::vector<char> arrival;           // arrival at T_k (false at k = 0)
  std::vector<double> arrival_epochs;  // S_0 = 0, S_1, ...
  std::vector<double> durations;       // U(T_k-)
  std::vector<double> fluid;           // F(T_k)
  std::vector<double> dividend;        // int_0^{T_k} sigma(J)
  std::vector<double> jump_costs;      // costs of arrivals at T_1..T_k
  std::uint64_t seed = 0;
  std::uint64_t path = 0;
};

// Walks the Poisson(gamma) grid of a (possibly delayed) DMArP.
class GridWalker {
 public:
  GridWalker(const FluidModel& model, std::mt19937_64& rng);

  void start(int state, double z, double level);
  // Advances to the next Poisson epoch and performs the uniformized transition.
  void step();

  double time() const { return t_; }
  double level() const { return f_; }
  double duration() const { return u_; }  // U(T_k)
  double duration_before() const { return u_before_; }  // U(T_k-)
  int state() const { return j_; }
  int state_before() const { return j_before_; }
  bool arrived() const { return arrived_; }
  double dividend() const { return div_; }
  double cost() const { return cost_; }
  double cost_before() const { return cost_before_; }  // costs at arrivals before T_k

 private:
  const FluidModel& model_;
  std::mt19937_64& rng_;
  std::exponential_distribution<double> exp_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::vector<double> cbar_, dbar_;
  double t_ = 0, f_ = 0, u_ = 0, u_before_ = 0, div_ = 0, cost_ = 0, cost_before_ = 0;
  int j_ = 0, j_before_ = 0;
  bool arrived_ = false;
};

int draw_state(const Vector& law, std::mt19937_64& rng);
// law restricted to S+ and renormalized; throws DomainError if it has no mass there
int draw_plus_state(const FluidModel& model, std::mt19937_64& rng);

// initial_state < 0 draws J(0) from alpha.
PathRecord simulate_path(const FluidModel& model, double z, double horizon, std::uint64_t seed,
                         std::uint64_t path = 0, int initial_state = -1);
void write_path_csv(std::ostream& os, const PathRecord& path);

struct ReturnSample {
  bool returned = false;
  int exit_state = -1;  // J(T_n-)
  double weight = 0.0;
  int n_used = 0;
};

// First n <= max_epochs with F(T_n) <= F(0) + barrier_offset, where the walk
// starts at level 0. barrier_offset = -u gives the ruin event from level u.
ReturnSample run_to_barrier(const FluidModel& model, int start_state, double z,
                            double barrier_offset, double theta1, double theta2, int max_epochs,
                            std::mt19937_64& rng);

// start_state < 0 draws from alpha restricted to S+; a start state in S-
// throws DomainError.
ReturnSample simulate_until_return(const FluidModel& model, double z, double theta1,
                                   double theta2, int max_epochs, std::uint64_t seed,
                                   std::uint64_t path = 0, int start_state = -1);

}  // namespace fluidrisk
