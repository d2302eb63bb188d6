#pragma once

#include "fluidrisk/model.hpp"
#include "fluidrisk/parallel.hpp"

#include <cstdint>
#include <vector>

namespace fluidrisk {

struct McEstimate {
  Matrix value;
  Matrix std_error;
  long n_paths = 0;  // per row
  double censored_fraction = 0;
  std::uint64_t seed = 0;
};

// Rows are start states in S+ (n_paths each), columns exit states in S-.
McEstimate mc_first_return(const FluidModel& model, double z, double theta1, double theta2,
                           long n_paths, int max_epochs, std::uint64_t seed,
                           Exec exec = Exec::parallel);

// Ruin from level u: rows are all start states (n_paths each), columns S-.
McEstimate mc_ruin(const FluidModel& model, double u, double z, long n_paths, int max_epochs,
                   std::uint64_t seed, Exec exec = Exec::parallel);

// P(F(T_n) <= F(0) at some epoch T_n <= t, J(T_n-) = j); rows are S+ starts.
McEstimate mc_finite_time(const FluidModel& model, double z, double t, long n_paths,
                          std::uint64_t seed, Exec exec = Exec::parallel);

struct BridgeHistogram {
  int n = 2;
  std::vector<double> s_edges, l_edges;
  McEstimate omega;     // P(Omega_n, J(T_n-) = j), weighted
  McEstimate returned;  // same restricted to F(T_n) <= F(0)
  // mean weight per (i, j, s bin, l bin), layout [i][j][sb][lb]
  std::vector<double> bins, bins_se;
  long hits = 0;
  double bin(int i, int j, int sb, int lb) const;
};

// Paths start at J(0) = i for every i in S+ (n_paths each) with U(0) = z.
BridgeHistogram mc_bridge_histogram(const FluidModel& model, double z, int n,
                                    std::vector<double> s_edges, std::vector<double> l_edges,
                                    long n_paths, std::uint64_t seed, double theta1 = 0,
                                    double theta2 = 0, Exec exec = Exec::parallel);

struct RiccatiResult {
  Matrix psi;
  int iterations = 0;
  double last_increment = 0;
};

// Minimal nonnegative solution of the homogeneous first-return Riccati
// equation at theta = 0, by Newton iteration from 0.
RiccatiResult riccati_psi(const FluidModel& model, double tol = 1e-12, int max_iterations = 100000);

}  // namespace fluidrisk
