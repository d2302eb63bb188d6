#pragma once

#include "fluidrisk/model.hpp"
#include "fluidrisk/parallel.hpp"

#include <complex>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <vector>

namespace fluidrisk {

// Duration nodes u_a = a du (a = 0..m) plus one overflow cell a = m+1 holding
// the mass with duration beyond u_max. Level nodes l_b = -l_max + b dl,
// b = 0..q, q even so that level 0 is node q/2.
//
// Tensor entries are cell averages against the hat functions of the grid, so
// that the trapezoid sum (overflow weight 1) returns the mass exactly.
class LevelDurationGrid {
 public:
  LevelDurationGrid() = default;
  LevelDurationGrid(double du, int m, double dl, int q);

  // U_max = 8/gamma, du = U_max/64, L_max = 2 max|r| U_max, dl = L_max/64.
  static LevelDurationGrid defaults(const FluidModel& model);
  // Same window, both spacings halved.
  LevelDurationGrid refined() const;

  double du() const { return du_; }
  double dl() const { return dl_; }
  int m() const { return m_; }
  int q() const { return q_; }
  double u_max() const { return du_ * m_; }
  double l_max() const { return dl_ * (q_ / 2); }
  int s_count() const { return m_ + 2; }
  int overflow() const { return m_ + 1; }
  int l_count() const { return q_ + 1; }
  int zero() const { return q_ / 2; }
  double duration(int a) const { return a * du_; }
  double level(int b) const { return (b - q_ / 2) * dl_; }
  double s_weight(int a) const;
  double l_weight(int b) const;
  // Index of an on-grid duration; throws DomainError otherwise.
  int z_index(double z) const;

 private:
  double du_ = 1, dl_ = 1;
  int m_ = 1, q_ = 2;
};

// Lambda^(n, z)(s, l) for a single n and every z node (overflow included).
// Layout [z][i][j][s][l] with i over S+ and j over S- positions.
class BridgeSlice {
 public:
  BridgeSlice() = default;
  BridgeSlice(const LevelDurationGrid& grid, int np, int nm);

  int np() const { return np_; }
  int nm() const { return nm_; }
  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::size_t index(int z, int i, int j, int s, int b) const {
    return ((((static_cast<std::size_t>(z) * np_ + i) * nm_ + j) * ns_ + s) * nl_) + b;
  }
  double& at(int z, int i, int j, int s, int b) { return data_[index(z, i, j, s, b)]; }
  double at(int z, int i, int j, int s, int b) const { return data_[index(z, i, j, s, b)]; }
  double* row(int z, int i, int j, int s) { return data_.data() + index(z, i, j, s, 0); }
  const double* row(int z, int i, int j, int s) const { return data_.data() + index(z, i, j, s, 0); }

  BridgeSlice& operator+=(const BridgeSlice& o);
  void set_zero();
  // Clamps entries below zero; returns the largest clamped magnitude.
  double clamp_negative();
  double max_abs_diff(const BridgeSlice& o) const;

 private:
  int np_ = 0, nm_ = 0, ns_ = 0, nl_ = 0;
  std::vector<double> data_;
};

// Everything the operators need: grid, theta, kernel tables on the duration
// nodes (right values, left limits, node averages), cost weights.
class BridgeContext {
 public:
  BridgeContext(const FluidModel& model, const LevelDurationGrid& grid, double theta1,
                double theta2, int oversample = 4);

  const FluidModel& model() const { return model_; }
  const LevelDurationGrid& grid() const { return grid_; }
  double theta1() const { return theta1_; }
  double theta2() const { return theta2_; }
  int oversample() const { return oversample_; }
  double gamma() const { return gamma_; }
  int np() const { return static_cast<int>(plus_.size()); }
  int nm() const { return static_cast<int>(minus_.size()); }
  int plus(int i) const { return plus_[i]; }
  int minus(int j) const { return minus_[j]; }
  double rate(int state) const { return model_.space.rate(state); }
  double sigma(int state) const { return model_.sigma[state]; }
  double kappa(int a, int b) const { return kappa_(a, b); }

  // Uniformized kernels at duration node a (a = m+1 is frozen at u_max).
  const Matrix& cbar_right(int a) const { return cr_[a]; }
  const Matrix& cbar_left(int a) const { return cl_[a]; }
  const Matrix& cbar_mid(int a) const { return cm_[a]; }
  const Matrix& dbar_right(int a) const { return dr_[a]; }
  const Matrix& dbar_left(int a) const { return dl_[a]; }
  const Matrix& dbar_mid(int a) const { return dm_[a]; }
  // Exact uniformized kernel at an arbitrary duration (frozen beyond u_max).
  void uniformized_at(double u, Matrix& cbar, Matrix& dbar) const;

 private:
  const FluidModel& model_;
  LevelDurationGrid grid_;
  double theta1_, theta2_, gamma_;
  int oversample_;
  std::vector<int> plus_, minus_;
  Matrix kappa_;
  std::vector<Matrix> cr_, cl_, cm_, dr_, dl_, dm_;
};

// Lambda^(2) by exact-mass deposit of the two exponential holding times.
BridgeSlice bridge2(const BridgeContext& ctx, Exec exec = Exec::parallel);
// Gamma^(n,1): first intermediate epoch is the minimum.
BridgeSlice gamma_first(const BridgeContext& ctx, const BridgeSlice& prev,
                        Exec exec = Exec::parallel);
// Gamma^(n,n-1): last intermediate epoch is the minimum.
BridgeSlice gamma_last(const BridgeContext& ctx, const BridgeSlice& prev,
                       Exec exec = Exec::parallel);
// Gamma^(n,w) for 2 <= w <= n-2, first = Lambda^(w), second = Lambda^(n-w).
BridgeSlice gamma_middle(const BridgeContext& ctx, const BridgeSlice& first,
                         const BridgeSlice& second, Exec exec = Exec::parallel);

// Level spectra of truncated slices, reused across the Gamma^(n,w) sums.
class LevelSpectra {
 public:
  explicit LevelSpectra(const BridgeContext& ctx);
  ~LevelSpectra();
  LevelSpectra(const LevelSpectra&) = delete;
  LevelSpectra& operator=(const LevelSpectra&) = delete;

  int fft_size() const { return nfft_; }
  int bins() const { return nfft_ / 2 + 1; }
  using Spectrum = std::vector<std::complex<double>>;
  // Upper half (l >= 0, half weight at 0) as a first factor, [f][i][j'][z][u].
  Spectrum first_factor(const BridgeSlice& slice) const;
  // Lower half (l <= 0, half weight at 0) premultiplied by the transition
  // kernels, [f][j'][j][u][s].
  Spectrum second_factor(const BridgeSlice& slice) const;
  // Accumulates sum_j' first[i][j'] * second[j'][j] into acc ([f][i][j][z][s]).
  void accumulate(const Spectrum& first, const Spectrum& second, Spectrum& acc) const;
  // Inverse transform of acc, scaled by dl, into a slice.
  BridgeSlice synthesize(const Spectrum& acc) const;
  Spectrum zero_spectrum() const;

 private:
  struct Plans;
  const BridgeContext& ctx_;
  int nfft_;
  std::unique_ptr<Plans> plans_;
};

struct BridgeOptions {
  double theta1 = 0, theta2 = 0;
  int n_max = 8;
  int oversample = 4;
  Exec exec = Exec::parallel;
  std::size_t memory_budget = std::size_t(1) << 31;  // bytes
};

struct BridgeTensor {
  LevelDurationGrid grid;
  double theta1 = 0, theta2 = 0;
  int np = 0, nm = 0;
  std::vector<BridgeSlice> slices;  // slices[k] holds n = k + 2
  std::vector<double> clamp;        // largest clamped negative per n

  int n_max() const { return static_cast<int>(slices.size()) + 1; }
  const BridgeSlice& at(int n) const { return slices.at(n - 2); }
  // Little-endian: magic "FRBT", u32 version, u32 dims[6] = (N-1, Z, np, nm, S, B),
  // f64 du, dl, theta1, theta2, then the slices row-major as f64.
  void write_binary(std::ostream& os) const;
};

// Bytes needed to hold n_max - 1 slices.
std::size_t bridge_memory(const LevelDurationGrid& grid, int np, int nm, int n_max);

// Order-by-order recursion: Lambda^(n) = sum_w Gamma^(n,w).
class BridgeRecursion {
 public:
  BridgeRecursion(const BridgeContext& ctx, Exec exec = Exec::parallel);
  ~BridgeRecursion();

  // Computes the next order (n = 2 first) and returns it.
  const BridgeSlice& advance();
  int order() const { return n_; }
  const BridgeSlice& current() const { return current_; }
  double last_clamp() const { return clamp_; }

 private:
  const BridgeContext& ctx_;
  Exec exec_;
  int n_ = 1;
  double clamp_ = 0;
  BridgeSlice current_;
  std::unique_ptr<LevelSpectra> spectra_;
  std::vector<LevelSpectra::Spectrum> first_, second_;  // index n - 2
  std::vector<BridgeSlice> kept_;  // serial mode keeps real slices instead
};

BridgeTensor bridge_recursion(const FluidModel& model, const LevelDurationGrid& grid,
                              const BridgeOptions& opts);

// All-orders sum Lambda = sum_n Lambda^(n) as the fixed point of
// Lambda = Lambda^(2) + Gamma_first(Lambda) + Gamma_last(Lambda) + Gamma_middle(Lambda, Lambda).
// Without acceleration, iterate k equals the sum over decomposition trees of
// depth <= k. anderson_depth > 0 mixes the last few map values (Anderson type
// II); iterates are then no longer monotone in k.
struct ResummedBridge {
  BridgeSlice total;
  int iterations = 0;
  double last_increment = 0;  // sup-norm of the increment of L^(z) at the last step
  bool converged = false;
  std::vector<double> increments;
};
ResummedBridge resummed_bridge(const BridgeContext& ctx, int z_index, int max_iterations,
                               double eps, Exec exec = Exec::parallel, int anderson_depth = 0);

// L(theta1, theta2, s_limit, 0): trapezoid over s in [0, s_limit] and l <= 0.
// s_limit < 0 includes the overflow cell (s up to infinity); otherwise s_limit
// must be a duration node.
Matrix integrate_bridge(const BridgeSlice& slice, const LevelDurationGrid& grid, int z_index,
                        double s_limit = -1);
// Full (s, l) window mass per (i, j), l of either sign.
Matrix bridge_mass(const BridgeSlice& slice, const LevelDurationGrid& grid, int z_index);

}  // namespace fluidrisk
