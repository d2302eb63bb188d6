#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace fluidrisk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class StateSpace {
 public:
  StateSpace() = default;
  // Throws ModelError on a zero rate.
  explicit StateSpace(std::vector<double> rates);

  int size() const { return static_cast<int>(rates_.size()); }
  double rate(int i) const { return rates_[i]; }
  const std::vector<double>& rates() const { return rates_; }
  const std::vector<int>& plus() const { return plus_; }
  const std::vector<int>& minus() const { return minus_; }
  bool is_plus(int i) const { return rates_[i] > 0.0; }
  // Position of state i inside its own partition class.
  int position(int i) const { return position_[i]; }

 private:
  std::vector<double> rates_;
  std::vector<int> plus_;
  std::vector<int> minus_;
  std::vector<int> position_;
};

struct Hazard {
  enum class Family { exponential, pareto, weibull };
  Family family = Family::exponential;
  double a = 1.0;  // exponential: rate. pareto: shape. weibull: shape k.
  double b = 1.0;  // pareto: scale (h = a/(b+u)). weibull: scale lambda.
  double cap = 0.0;  // weibull only; h is min(h, cap). Required unless k == 1.

  double operator()(double u) const;
  double supremum() const;
};

struct KernelValue {
  Matrix c;
  Matrix d;
};

// C(u), D(u) and the uniformization bound gamma.
class DurationKernel {
 public:
  enum class Kind { constant, piecewise, hazard };

  static DurationKernel constant(Matrix c, Matrix d, double gamma);
  // breakpoints b_1 < ... < b_m (all > 0) and m+1 pieces; piece k is active on
  // [b_k, b_{k+1}) with b_0 = 0.
  static DurationKernel piecewise(std::vector<double> breakpoints, std::vector<Matrix> c,
                                  std::vector<Matrix> d, double gamma);
  // C(u) = diag(-h_i(u)), D(u)_{ij} = q_{ij} h_i(u); rows of q sum to 1.
  static DurationKernel hazard(std::vector<Hazard> h, Matrix routing, double gamma);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  double gamma() const { return gamma_; }
  const std::vector<double>& breakpoints() const { return breaks_; }
  const std::vector<Matrix>& pieces_c() const { return pc_; }
  const std::vector<Matrix>& pieces_d() const { return pd_; }
  const std::vector<Hazard>& hazards() const { return hazards_; }
  const Matrix& routing() const { return routing_; }

  // Right-continuous evaluation. Throws DomainError for u < 0.
  KernelValue eval(double u) const;
  // Left limit at u (equals eval(u) away from breakpoints).
  KernelValue eval_left(double u) const;
  void eval_into(double u, bool left_limit, Matrix& c, Matrix& d) const;
  // Cbar = I + C/gamma, Dbar = D/gamma. Throws BoundViolation if Cbar has a
  // negative diagonal entry.
  KernelValue uniformized(double u) const;
  // Row i of Cbar(u) and Dbar(u) written into cbar[0..p), dbar[0..p).
  void uniformized_row(double u, int i, double* cbar, double* dbar) const;
  // Analytic sup over u of the exit rate c_i(u) = -C(u)_{ii}.
  double rate_supremum() const;
  bool arrivals_vanish() const;

 private:
  int piece_index(double u, bool left_limit) const;

  Kind kind_ = Kind::constant;
  int dim_ = 0;
  double gamma_ = 1.0;
  std::vector<double> breaks_;
  std::vector<Matrix> pc_, pd_;
  std::vector<Hazard> hazards_;
  Matrix routing_;
};

struct FluidModel {
  std::string name;
  StateSpace space;
  DurationKernel kernel;
  Vector alpha;
  Vector sigma;
  Matrix cost;

  int dim() const { return space.size(); }
};

// Structural checks only (dimensions, partition, sigma on S-, alpha, costs).
// Throws ModelError.
FluidModel make_model(std::string name, std::vector<double> rates, DurationKernel kernel,
                      Vector alpha, Vector sigma, Matrix cost);

struct BlockView {
  Matrix pp, pm, mp, mm;

  static BlockView split(const Matrix& m, const StateSpace& space);
  Matrix assemble(const StateSpace& space) const;
};

BlockView cost_weights(const FluidModel& model, double theta2);

struct InvariantCheck {
  std::string name;
  bool pass = true;
  double worst = 0.0;  // magnitude of the worst violation
  double u = 0.0;
  int i = -1;
  int j = -1;
};

struct ValidationReport {
  std::vector<InvariantCheck> checks;
  bool pass() const;
  std::string summary() const;
};

// 512 log-spaced points in [0, u_max] plus 0 and every breakpoint, sorted.
std::vector<double> default_validation_samples(const DurationKernel& kernel, double u_max);
ValidationReport validate_model(const FluidModel& model, const std::vector<double>& u_samples);
ValidationReport validate_model(const FluidModel& model);

}  // namespace fluidrisk
