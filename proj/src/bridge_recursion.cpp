#include "fluidrisk/bridge.hpp"
#include "fluidrisk/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fluidrisk {

BridgeRecursion::BridgeRecursion(const BridgeContext& ctx, Exec exec) : ctx_(ctx), exec_(exec) {
  if (exec_ == Exec::parallel) spectra_ = std::make_unique<LevelSpectra>(ctx);
}

BridgeRecursion::~BridgeRecursion() = default;

const BridgeSlice& BridgeRecursion::advance() {
  ++n_;
  BridgeSlice next;
  if (n_ == 2) {
    next = bridge2(ctx_, exec_);
  } else {
    next = gamma_first(ctx_, current_, exec_);
    next += gamma_last(ctx_, current_, exec_);
    if (n_ >= 4) {
      if (exec_ == Exec::parallel) {
        auto acc = spectra_->zero_spectrum();
        for (int w = 2; w <= n_ - 2; ++w)
          spectra_->accumulate(first_[w - 2], second_[n_ - w - 2], acc);
        next += spectra_->synthesize(acc);
      } else {
        for (int w = 2; w <= n_ - 2; ++w)
          next += gamma_middle(ctx_, kept_[w - 2], kept_[n_ - w - 2], Exec::serial);
      }
    }
  }
  clamp_ = next.clamp_negative();
  current_ = std::move(next);
  if (exec_ == Exec::parallel) {
    first_.push_back(spectra_->first_factor(current_));
    second_.push_back(spectra_->second_factor(current_));
  } else {
    kept_.push_back(current_);
  }
  return current_;
}

BridgeTensor bridge_recursion(const FluidModel& model, const LevelDurationGrid& grid,
                              const BridgeOptions& opts) {
  if (opts.n_max < 2) throw DomainError("n_max must be at least 2");
  const int np = static_cast<int>(model.space.plus().size());
  const int nm = static_cast<int>(model.space.minus().size());
  // the tensor plus the two stored spectra per order (complex, half the bins)
  const std::size_t need = 2 * bridge_memory(grid, np, nm, opts.n_max);
  if (need > opts.memory_budget)
    throw DomainError("bridge tensor needs about " + std::to_string(need >> 20) +
                      " MiB, over the memory budget of " +
                      std::to_string(opts.memory_budget >> 20) + " MiB");
  BridgeContext ctx(model, grid, opts.theta1, opts.theta2, opts.oversample);
  BridgeRecursion rec(ctx, opts.exec);
  BridgeTensor t;
  t.grid = grid;
  t.theta1 = opts.theta1;
  t.theta2 = opts.theta2;
  t.np = np;
  t.nm = nm;
  for (int n = 2; n <= opts.n_max; ++n) {
    t.slices.push_back(rec.advance());
    t.clamp.push_back(rec.last_clamp());
  }
  return t;
}

namespace {

// Lambda^(2) + Gamma_first(x) + Gamma_last(x) + Gamma_middle(x, x), clamped.
BridgeSlice resum_map(const BridgeContext& ctx, const BridgeSlice& base, const BridgeSlice& x,
                      LevelSpectra* sp, Exec exec) {
  BridgeSlice next = base;
  next += gamma_first(ctx, x, exec);
  next += gamma_last(ctx, x, exec);
  if (sp) {
    auto acc = sp->zero_spectrum();
    sp->accumulate(sp->first_factor(x), sp->second_factor(x), acc);
    next += sp->synthesize(acc);
  } else {
    next += gamma_middle(ctx, x, x, Exec::serial);
  }
  next.clamp_negative();
  return next;
}

Eigen::Map<Vector> flat(BridgeSlice& s) {
  return Eigen::Map<Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
}

}  // namespace

ResummedBridge resummed_bridge(const BridgeContext& ctx, int z_index, int max_iterations,
                               double eps, Exec exec, int anderson_depth) {
  if (anderson_depth < 0) throw DomainError("anderson depth must be >= 0");
  const auto& g = ctx.grid();
  ResummedBridge out;
  const BridgeSlice base = bridge2(ctx, exec);
  out.total = base;
  Matrix last = integrate_bridge(out.total, g, z_index);
  out.iterations = 1;
  std::unique_ptr<LevelSpectra> sp;
  if (exec == Exec::parallel) sp = std::make_unique<LevelSpectra>(ctx);

  // Anderson history (type II): differences of residuals and of map values.
  std::vector<BridgeSlice> dF, dG;
  BridgeSlice f_prev, g_prev;
  int head = 0;
  while (out.iterations < max_iterations) {
    BridgeSlice gx = resum_map(ctx, base, out.total, sp.get(), exec);
    if (anderson_depth == 0) {
      out.total = std::move(gx);
    } else {
      BridgeSlice f = gx;
      flat(f) -= flat(out.total);
      if (f_prev.size() != 0) {
        BridgeSlice df = f, dg = gx;
        flat(df) -= flat(f_prev);
        flat(dg) -= flat(g_prev);
        if (static_cast<int>(dF.size()) < anderson_depth) {
          dF.push_back(std::move(df));
          dG.push_back(std::move(dg));
        } else {
          dF[head] = std::move(df);
          dG[head] = std::move(dg);
          head = (head + 1) % anderson_depth;
        }
      }
      f_prev = f;
      g_prev = gx;
      const int k = static_cast<int>(dF.size());
      if (k > 0) {
        Matrix gram(k, k);
        Vector rhs(k);
        for (int a = 0; a < k; ++a) {
          rhs(a) = flat(dF[a]).dot(flat(f));
          for (int b = 0; b <= a; ++b) gram(a, b) = gram(b, a) = flat(dF[a]).dot(flat(dF[b]));
        }
        gram.diagonal().array() *= 1.0 + 1e-10;
        const Vector c = gram.ldlt().solve(rhs);
        for (int a = 0; a < k; ++a) flat(gx) -= c(a) * flat(dG[a]);
        gx.clamp_negative();
      }
      out.total = std::move(gx);
    }
    ++out.iterations;
    Matrix now = integrate_bridge(out.total, g, z_index);
    out.last_increment = (now - last).cwiseAbs().maxCoeff();
    out.increments.push_back(out.last_increment);
    last = now;
    if (out.last_increment < eps) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace fluidrisk
