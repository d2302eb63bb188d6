#include "fluidrisk/oracle.hpp"

#include "fluidrisk/errors.hpp"
#include "fluidrisk/rng.hpp"
#include "fluidrisk/simulation.hpp"

#include <algorithm>
#include <cmath>

namespace fluidrisk {

namespace {

constexpr long kBlock = 4096;

struct BlockSums {
  std::vector<double> s1, s2;
  long censored = 0;
};

// Runs paths [0, n) of each row in fixed blocks; the per-block sums are
// combined in block order so the result does not depend on the thread count.
template <class PathFn>
McEstimate run_batches(int rows, int cols, long n_paths, std::uint64_t seed, Exec exec,
                       PathFn&& path) {
  if (n_paths < 1) throw DomainError("n_paths must be positive");
  const long nblocks = (n_paths + kBlock - 1) / kBlock;
  std::vector<BlockSums> sums(static_cast<std::size_t>(rows) * nblocks);
  auto work = [&](long task) {
    const int row = static_cast<int>(task / nblocks);
    const long blk = task % nblocks;
    BlockSums& bs = sums[task];
    bs.s1.assign(cols, 0.0);
    bs.s2.assign(cols, 0.0);
    const long lo = blk * kBlock, hi = std::min(n_paths, lo + kBlock);
    for (long k = lo; k < hi; ++k) {
      auto rng = path_stream(seed, static_cast<std::uint64_t>(row) * n_paths + k);
      int col = -1;
      double w = 0;
      bool censored = false;
      path(row, rng, col, w, censored);
      if (censored) ++bs.censored;
      if (col >= 0) {
        bs.s1[col] += w;
        bs.s2[col] += w * w;
      }
    }
  };
  const long ntasks = static_cast<long>(rows) * nblocks;
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long t = 0; t < ntasks; ++t) work(t);
  } else {
    for (long t = 0; t < ntasks; ++t) work(t);
  }
  McEstimate est;
  est.value = Matrix::Zero(rows, cols);
  est.std_error = Matrix::Zero(rows, cols);
  est.n_paths = n_paths;
  est.seed = seed;
  long censored = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double s1 = 0, s2 = 0;
      for (long b = 0; b < nblocks; ++b) {
        s1 += sums[r * nblocks + b].s1[c];
        s2 += sums[r * nblocks + b].s2[c];
      }
      const double n = static_cast<double>(n_paths);
      const double mean = s1 / n;
      const double var = n > 1 ? std::max(0.0, (s2 - n * mean * mean) / (n - 1)) : 0.0;
      est.value(r, c) = mean;
      est.std_error(r, c) = std::sqrt(var / n);
    }
  for (const auto& b : sums) censored += b.censored;
  est.censored_fraction = static_cast<double>(censored) / (static_cast<double>(rows) * n_paths);
  return est;
}

}  // namespace

McEstimate mc_first_return(const FluidModel& model, double z, double theta1, double theta2,
                           long n_paths, int max_epochs, std::uint64_t seed, Exec exec) {
  if (max_epochs < 2) throw DomainError("max_epochs must be at least 2");
  if (!(z >= 0) || !(theta1 >= 0) || !(theta2 >= 0))
    throw DomainError("z, theta1 and theta2 must be nonnegative");
  const auto& plus = model.space.plus();
  const auto& space = model.space;
  return run_batches(static_cast<int>(plus.size()), static_cast<int>(space.minus().size()),
                     n_paths, seed, exec,
                     [&](int row, std::mt19937_64& rng, int& col, double& w, bool& cens) {
                       ReturnSample r = run_to_barrier(model, plus[row], z, 0.0, theta1, theta2,
                                                       max_epochs, rng);
                       if (!r.returned) {
                         cens = true;
                         return;
                       }
                       col = space.position(r.exit_state);
                       w = r.weight;
                     });
}

McEstimate mc_ruin(const FluidModel& model, double u, double z, long n_paths, int max_epochs,
                   std::uint64_t seed, Exec exec) {
  if (!(u >= 0) || !(z >= 0)) throw DomainError("u and z must be nonnegative");
  if (max_epochs < 1) throw DomainError("max_epochs must be positive");
  const auto& space = model.space;
  return run_batches(model.dim(), static_cast<int>(space.minus().size()), n_paths, seed, exec,
                     [&](int row, std::mt19937_64& rng, int& col, double& w, bool& cens) {
                       ReturnSample r =
                           run_to_barrier(model, row, z, -u, 0.0, 0.0, max_epochs, rng);
                       if (!r.returned) {
                         cens = true;
                         return;
                       }
                       col = space.position(r.exit_state);
                       w = r.weight;
                     });
}

McEstimate mc_finite_time(const FluidModel& model, double z, double t, long n_paths,
                          std::uint64_t seed, Exec exec) {
  if (!(t > 0) || !(z >= 0)) throw DomainError("need t > 0 and z >= 0");
  const auto& plus = model.space.plus();
  const auto& space = model.space;
  return run_batches(static_cast<int>(plus.size()), static_cast<int>(space.minus().size()),
                     n_paths, seed, exec,
                     [&](int row, std::mt19937_64& rng, int& col, double& w, bool&) {
                       GridWalker walk(model, rng);
                       walk.start(plus[row], z, 0.0);
                       for (;;) {
                         walk.step();
                         if (walk.time() > t) return;
                         if (walk.level() <= 0.0) {
                           col = space.position(walk.state_before());
                           w = 1.0;
                           return;
                         }
                       }
                     });
}

double BridgeHistogram::bin(int i, int j, int sb, int lb) const {
  const int ns = static_cast<int>(s_edges.size()) - 1, nl = static_cast<int>(l_edges.size()) - 1;
  const int nm = static_cast<int>(omega.value.cols());
  return bins[((static_cast<std::size_t>(i) * nm + j) * ns + sb) * nl + lb];
}

BridgeHistogram mc_bridge_histogram(const FluidModel& model, double z, int n,
                                    std::vector<double> s_edges, std::vector<double> l_edges,
                                    long n_paths, std::uint64_t seed, double theta1,
                                    double theta2, Exec exec) {
  if (n < 2) throw DomainError("bridge order must be at least 2");
  if (n_paths < 1) throw DomainError("n_paths must be positive");
  if (s_edges.size() < 2 || l_edges.size() < 2) throw DomainError("need at least one bin");
  const auto& plus = model.space.plus();
  const int np = static_cast<int>(plus.size());
  const int nm = static_cast<int>(model.space.minus().size());
  const int ns = static_cast<int>(s_edges.size()) - 1, nl = static_cast<int>(l_edges.size()) - 1;
  const std::size_t nbins = static_cast<std::size_t>(np) * nm * ns * nl;
  const long nblocks = (n_paths + kBlock - 1) / kBlock;
  struct Part {
    std::vector<double> o1, o2, r1, r2, b1, b2;
    long hits = 0;
  };
  std::vector<Part> parts(static_cast<std::size_t>(np) * nblocks);
  auto work = [&](long task) {
    const int row = static_cast<int>(task / nblocks);
    const long blk = task % nblocks;
    Part& pt = parts[task];
    pt.o1.assign(nm, 0);
    pt.o2.assign(nm, 0);
    pt.r1.assign(nm, 0);
    pt.r2.assign(nm, 0);
    pt.b1.assign(static_cast<std::size_t>(nm) * ns * nl, 0);
    pt.b2.assign(static_cast<std::size_t>(nm) * ns * nl, 0);
    const long lo = blk * kBlock, hi = std::min(n_paths, lo + kBlock);
    for (long k = lo; k < hi; ++k) {
      auto rng = path_stream(seed, static_cast<std::uint64_t>(row) * n_paths + k);
      GridWalker w(model, rng);
      w.start(plus[row], z, 0.0);
      double lowest = INFINITY;  // min F(T_1..T_{n-1})
      for (int e = 1; e < n; ++e) {
        w.step();
        lowest = std::min(lowest, w.level());
      }
      w.step();
      if (!(lowest > 0.0 && lowest > w.level())) continue;
      ++pt.hits;
      const int j = model.space.position(w.state_before());
      const double wt = std::exp(-theta1 * w.dividend() - theta2 * w.cost_before());
      pt.o1[j] += wt;
      pt.o2[j] += wt * wt;
      if (w.level() <= 0.0) {
        pt.r1[j] += wt;
        pt.r2[j] += wt * wt;
      }
      const double s = w.duration_before(), l = w.level();
      auto sb = std::upper_bound(s_edges.begin(), s_edges.end(), s) - s_edges.begin() - 1;
      auto lb = std::upper_bound(l_edges.begin(), l_edges.end(), l) - l_edges.begin() - 1;
      if (sb < 0 || sb >= ns || lb < 0 || lb >= nl) continue;
      const std::size_t idx = (static_cast<std::size_t>(j) * ns + sb) * nl + lb;
      pt.b1[idx] += wt;
      pt.b2[idx] += wt * wt;
    }
  };
  const long ntasks = static_cast<long>(np) * nblocks;
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (long t = 0; t < ntasks; ++t) work(t);
  } else {
    for (long t = 0; t < ntasks; ++t) work(t);
  }
  BridgeHistogram h;
  h.n = n;
  h.s_edges = std::move(s_edges);
  h.l_edges = std::move(l_edges);
  const double N = static_cast<double>(n_paths);
  auto finish = [&](double s1, double s2, double& mean, double& se) {
    mean = s1 / N;
    se = std::sqrt(std::max(0.0, (s2 - N * mean * mean) / (N - 1)) / N);
  };
  for (auto* e : {&h.omega, &h.returned}) {
    e->value = Matrix::Zero(np, nm);
    e->std_error = Matrix::Zero(np, nm);
    e->n_paths = n_paths;
    e->seed = seed;
  }
  h.bins.assign(nbins, 0);
  h.bins_se.assign(nbins, 0);
  for (int i = 0; i < np; ++i) {
    for (int j = 0; j < nm; ++j) {
      double o1 = 0, o2 = 0, r1 = 0, r2 = 0;
      for (long b = 0; b < nblocks; ++b) {
        const Part& pt = parts[i * nblocks + b];
        o1 += pt.o1[j];
        o2 += pt.o2[j];
        r1 += pt.r1[j];
        r2 += pt.r2[j];
      }
      finish(o1, o2, h.omega.value(i, j), h.omega.std_error(i, j));
      finish(r1, r2, h.returned.value(i, j), h.returned.std_error(i, j));
    }
    for (std::size_t x = 0; x < static_cast<std::size_t>(nm) * ns * nl; ++x) {
      double s1 = 0, s2 = 0;
      for (long b = 0; b < nblocks; ++b) {
        s1 += parts[i * nblocks + b].b1[x];
        s2 += parts[i * nblocks + b].b2[x];
      }
      finish(s1, s2, h.bins[i * nm * ns * nl + x], h.bins_se[i * nm * ns * nl + x]);
    }
  }
  for (const auto& pt : parts) h.hits += pt.hits;
  return h;
}

RiccatiResult riccati_psi(const FluidModel& model, double tol, int max_iterations) {
  if (model.kernel.kind() != DurationKernel::Kind::constant)
    throw DomainError("the Riccati oracle needs a constant kernel");
  const auto& sp = model.space;
  const Matrix q = model.kernel.pieces_c()[0] + model.kernel.pieces_d()[0];
  Matrix t = q;
  for (int i = 0; i < sp.size(); ++i) t.row(i) /= std::abs(sp.rate(i));
  const BlockView b = BlockView::split(t, sp);
  const int np = static_cast<int>(b.pp.rows()), nm = static_cast<int>(b.mm.rows());
  // T+- + T++ X + X T-- + X T-+ X = 0
  Matrix psi = Matrix::Zero(np, nm);
  RiccatiResult out;
  const Matrix ip = Matrix::Identity(np, np);
  for (int it = 1; it <= max_iterations; ++it) {
    const Matrix a = b.pp + psi * b.mp;
    const Matrix bb = b.mm + b.mp * psi;
    const Matrix rhs = -b.pm + psi * b.mp * psi;
    // column-major vec: (I kron A + B^T kron I) vec X = vec rhs
    Matrix k = Matrix::Zero(np * nm, np * nm);
    for (int c = 0; c < nm; ++c) k.block(c * np, c * np, np, np) += a;
    for (int c = 0; c < nm; ++c)
      for (int d = 0; d < nm; ++d) k.block(c * np, d * np, np, np) += bb(d, c) * ip;
    Vector x = k.fullPivLu().solve(Eigen::Map<const Vector>(rhs.data(), rhs.size()));
    Matrix next = Eigen::Map<Matrix>(x.data(), np, nm);
    if (!next.allFinite()) throw NumericError("Riccati iteration produced non-finite values");
    if ((next - psi).minCoeff() < -1e-10 || next.rowwise().sum().maxCoeff() > 1 + 1e-9) {
      // null drift: the Jacobian is singular at the root and Newton stalls in
      // roundoff once the steps are tiny; keep the last clean iterate
      if (it > 1 && out.last_increment < 1e-6) {
        out.psi = psi;
        return out;
      }
      throw NumericError("Riccati iterates lost monotonicity or left the unit range");
    }
    out.last_increment = (next - psi).cwiseAbs().maxCoeff();
    psi = next;
    out.iterations = it;
    if (out.last_increment < tol) {
      out.psi = psi;
      return out;
    }
  }
  throw ConvergenceError("Riccati iteration did not converge");
}

}  // namespace fluidrisk
