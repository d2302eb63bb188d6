#include "fluidrisk/bridge.hpp"
#include "fluidrisk/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <ostream>

namespace fluidrisk {

LevelDurationGrid::LevelDurationGrid(double du, int m, double dl, int q)
    : du_(du), dl_(dl), m_(m), q_(q) {
  if (!(du > 0) || !(dl > 0)) throw DomainError("grid spacings must be positive");
  if (m < 1) throw DomainError("duration grid needs at least one cell");
  if (q < 2 || q % 2 != 0) throw DomainError("level node count q must be even and >= 2");
}

LevelDurationGrid LevelDurationGrid::defaults(const FluidModel& model) {
  const double u_max = 8.0 / model.kernel.gamma();
  double rmax = 0;
  for (double r : model.space.rates()) rmax = std::max(rmax, std::abs(r));
  const double l_max = 2.0 * rmax * u_max;
  return LevelDurationGrid(u_max / 64, 64, l_max / 64, 128);
}

LevelDurationGrid LevelDurationGrid::refined() const {
  return LevelDurationGrid(du_ / 2, 2 * m_, dl_ / 2, 2 * q_);
}

double LevelDurationGrid::s_weight(int a) const {
  if (a == m_ + 1) return 1.0;
  return (a == 0 || a == m_) ? 0.5 * du_ : du_;
}

double LevelDurationGrid::l_weight(int b) const { return (b == 0 || b == q_) ? 0.5 * dl_ : dl_; }

int LevelDurationGrid::z_index(double z) const {
  if (!(z >= 0)) throw DomainError("initial duration must be nonnegative");
  const double a = std::round(z / du_);
  if (std::abs(a * du_ - z) > 1e-9 * std::max(1.0, z) || a > m_)
    throw DomainError("initial duration " + std::to_string(z) +
                      " is not a node of the duration grid");
  return static_cast<int>(a);
}

BridgeSlice::BridgeSlice(const LevelDurationGrid& grid, int np, int nm)
    : np_(np), nm_(nm), ns_(grid.s_count()), nl_(grid.l_count()) {
  data_.assign(static_cast<std::size_t>(ns_) * np_ * nm_ * ns_ * nl_, 0.0);
}

BridgeSlice& BridgeSlice::operator+=(const BridgeSlice& o) {
  if (o.data_.size() != data_.size()) throw DomainError("bridge slice shapes differ");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

void BridgeSlice::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

double BridgeSlice::clamp_negative() {
  double worst = 0;
  for (double& v : data_)
    if (v < 0) {
      worst = std::max(worst, -v);
      v = 0;
    }
  return worst;
}

double BridgeSlice::max_abs_diff(const BridgeSlice& o) const {
  double d = 0;
  for (std::size_t k = 0; k < data_.size(); ++k) d = std::max(d, std::abs(data_[k] - o.data_[k]));
  return d;
}

BridgeContext::BridgeContext(const FluidModel& model, const LevelDurationGrid& grid,
                             double theta1, double theta2, int oversample)
    : model_(model),
      grid_(grid),
      theta1_(theta1),
      theta2_(theta2),
      gamma_(model.kernel.gamma()),
      oversample_(oversample),
      plus_(model.space.plus()),
      minus_(model.space.minus()) {
  if (!(theta1 >= 0) || !(theta2 >= 0)) throw DomainError("theta must be nonnegative");
  if (oversample < 1) throw DomainError("oversample must be >= 1");
  const int p = model.dim();
  kappa_ = (-theta2 * model.cost.array()).exp().matrix();
  const int ns = grid.s_count();
  cr_.resize(ns);
  cl_.resize(ns);
  cm_.resize(ns);
  dr_.resize(ns);
  dl_.resize(ns);
  dm_.resize(ns);
  const double g = 1.0 / gamma_;
  auto unif = [&](Matrix& c, Matrix& d, double u) {
    c = c * g + Matrix::Identity(p, p);
    d = d * g;
    for (int i = 0; i < p; ++i)
      if (c(i, i) < -1e-12) throw BoundViolation(u, i);
  };
  for (int a = 0; a <= grid.m(); ++a) {
    const double u = grid.duration(a);
    model.kernel.eval_into(u, false, cr_[a], dr_[a]);
    unif(cr_[a], dr_[a], u);
    if (a == 0) {
      cl_[a] = cr_[a];
      dl_[a] = dr_[a];
    } else {
      model.kernel.eval_into(u, true, cl_[a], dl_[a]);
      unif(cl_[a], dl_[a], u);
    }
    cm_[a] = 0.5 * (cr_[a] + cl_[a]);
    dm_[a] = 0.5 * (dr_[a] + dl_[a]);
  }
  const int ov = grid.overflow();
  cr_[ov] = cl_[ov] = cm_[ov] = cr_[grid.m()];
  dr_[ov] = dl_[ov] = dm_[ov] = dr_[grid.m()];
}

void BridgeContext::uniformized_at(double u, Matrix& cbar, Matrix& dbar) const {
  if (u >= grid_.u_max()) {
    cbar = cr_[grid_.overflow()];
    dbar = dr_[grid_.overflow()];
    return;
  }
  model_.kernel.eval_into(u, false, cbar, dbar);
  const int p = model_.dim();
  cbar = cbar / gamma_ + Matrix::Identity(p, p);
  dbar /= gamma_;
}

std::size_t bridge_memory(const LevelDurationGrid& grid, int np, int nm, int n_max) {
  const std::size_t ns = grid.s_count();
  return static_cast<std::size_t>(std::max(0, n_max - 1)) * ns * ns * np * nm * grid.l_count() *
         sizeof(double);
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  unsigned char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(v >> (8 * k));
  os.write(reinterpret_cast<const char*>(b), 8);
}

}  // namespace

void BridgeTensor::write_binary(std::ostream& os) const {
  os.write("FRBT", 4);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(slices.size()));
  put_u32(os, static_cast<std::uint32_t>(grid.s_count()));
  put_u32(os, static_cast<std::uint32_t>(np));
  put_u32(os, static_cast<std::uint32_t>(nm));
  put_u32(os, static_cast<std::uint32_t>(grid.s_count()));
  put_u32(os, static_cast<std::uint32_t>(grid.l_count()));
  put_f64(os, grid.du());
  put_f64(os, grid.dl());
  put_f64(os, theta1);
  put_f64(os, theta2);
  for (const auto& s : slices)
    for (std::size_t k = 0; k < s.size(); ++k) put_f64(os, s.data()[k]);
}

Matrix integrate_bridge(const BridgeSlice& slice, const LevelDurationGrid& grid, int z_index,
                        double s_limit) {
  int a_end = grid.overflow();
  if (s_limit >= 0) {
    a_end = grid.z_index(s_limit);
  }
  Matrix out = Matrix::Zero(slice.np(), slice.nm());
  const int b0 = grid.zero();
  for (int i = 0; i < slice.np(); ++i)
    for (int j = 0; j < slice.nm(); ++j) {
      double acc = 0;
      for (int a = 0; a <= a_end; ++a) {
        double ws = grid.s_weight(a);
        if (s_limit >= 0 && (a == a_end)) ws = (a == 0) ? 0.0 : 0.5 * grid.du();
        const double* r = slice.row(z_index, i, j, a);
        double lsum = 0;
        for (int b = 0; b <= b0; ++b)
          lsum += r[b] * ((b == 0 || b == b0) ? 0.5 * grid.dl() : grid.dl());
        acc += ws * lsum;
      }
      out(i, j) = acc;
    }
  return out;
}

Matrix bridge_mass(const BridgeSlice& slice, const LevelDurationGrid& grid, int z_index) {
  Matrix out = Matrix::Zero(slice.np(), slice.nm());
  for (int i = 0; i < slice.np(); ++i)
    for (int j = 0; j < slice.nm(); ++j) {
      double acc = 0;
      for (int a = 0; a < grid.s_count(); ++a) {
        const double* r = slice.row(z_index, i, j, a);
        double lsum = 0;
        for (int b = 0; b < grid.l_count(); ++b) lsum += r[b] * grid.l_weight(b);
        acc += grid.s_weight(a) * lsum;
      }
      out(i, j) = acc;
    }
  return out;
}

}  // namespace fluidrisk
