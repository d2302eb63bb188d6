#include "fluidrisk/bridge.hpp"
#include "fluidrisk/errors.hpp"

#include <algorithm>
#include <cmath>

namespace fluidrisk {

namespace {

constexpr double kExpCut = 40.0;  // e^-40 ~ 4e-18

// Exponentially fitted trapezoid for int gamma e^{-lambda u} g(u) du with g
// linear on [u_k, u_{k+1}]: node k collects wr[k] from the segment it starts
// and wl[k] from the segment it ends. The weights are also the exact hat
// deposit of the density gamma e^{-lambda u}.
struct Taps {
  std::vector<double> wr, wl;
  int size() const { return static_cast<int>(wr.size()); }
  double w(int k) const { return wr[k] + wl[k]; }
};

Taps make_taps(double gamma, double lambda, double du, int count) {
  const double beta = lambda * du;
  const double e = std::exp(-beta);
  // series near 0 keeps full precision for tiny beta
  double frac = beta < 1e-4 ? 1 - beta / 2 + beta * beta / 6 : (1 - e) / beta;
  const double w0 = 1 - frac, w1 = frac - e;
  const double pref = gamma / lambda;
  Taps t;
  t.wr.resize(count);
  t.wl.resize(count);
  for (int k = 0; k < count; ++k) {
    t.wr[k] = pref * std::exp(-lambda * k * du) * w0;
    t.wl[k] = k == 0 ? 0.0 : pref * std::exp(-lambda * (k - 1) * du) * w1;
  }
  return t;
}

// Taps needed before the level shift |r| u leaves the window or the
// exponential underflows.
int tap_count(double lambda, double du, double rate, const LevelDurationGrid& g) {
  const double by_exp = kExpCut / (lambda * du);
  const double by_level = (2 * g.l_max() + 2 * g.dl()) / (std::abs(rate) * du);
  return static_cast<int>(std::ceil(std::min(by_exp, by_level))) + 2;
}

struct Shift {
  int dk;
  double fr;
};

Shift level_shift(double delta, double dl) {
  double d = delta / dl;
  double f = std::floor(d);
  double fr = d - f;
  if (fr > 1 - 1e-12) {
    f += 1;
    fr = 0;
  } else if (fr < 1e-12) {
    fr = 0;
  }
  return {static_cast<int>(f), fr};
}

// out[b] += c * ((1-fr) lo[b-dk] + fr lo[b-dk-1]), lo indexed 0..b0.
inline void add_down(double* out, const double* lo, int b0, int q, Shift sh, double c) {
  if (c == 0.0) return;
  const double c0 = c * (1 - sh.fr), c1 = c * sh.fr;
  int n0 = std::min(b0, q - sh.dk);
  for (int x = 0; x <= n0; ++x) out[sh.dk + x] += c0 * lo[x];
  if (c1 != 0.0) {
    int n1 = std::min(b0, q - sh.dk - 1);
    for (int x = 0; x <= n1; ++x) out[sh.dk + 1 + x] += c1 * lo[x];
  }
}

// out[b] += c * ((1-fr) up[b+dk-b0] + fr up[b+dk+1-b0]), up indexed 0..b0.
inline void add_up(double* out, const double* up, int b0, Shift sh, double c) {
  if (c == 0.0) return;
  const double c0 = c * (1 - sh.fr), c1 = c * sh.fr;
  int base0 = b0 - sh.dk;
  for (int x = std::max(0, -base0); x <= b0; ++x) out[base0 + x] += c0 * up[x];
  if (c1 != 0.0) {
    int base1 = base0 - 1;
    for (int x = std::max(0, -base1); x <= b0; ++x) out[base1 + x] += c1 * up[x];
  }
}

// Rows truncated to l <= 0 (lower) or l >= 0 (upper), half weight at 0.
std::vector<double> truncated(const BridgeSlice& s, const LevelDurationGrid& g, bool upper) {
  const int b0 = g.zero();
  const std::size_t rows = s.size() / g.l_count();
  std::vector<double> out(rows * (b0 + 1));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = s.data() + r * g.l_count();
    double* dst = out.data() + r * (b0 + 1);
    if (upper) {
      for (int k = 0; k <= b0; ++k) dst[k] = src[b0 + k];
      dst[0] *= 0.5;
    } else {
      for (int k = 0; k <= b0; ++k) dst[k] = src[k];
      dst[b0] *= 0.5;
    }
  }
  return out;
}

// Pointwise value of the truncated level function at an arbitrary level.
double truncated_at(const double* row, const LevelDurationGrid& g, double level, bool upper) {
  const double x = (level + g.l_max()) / g.dl();
  auto val = [&](int b) -> double {
    if (b < 0 || b > g.q()) return 0.0;
    if (upper ? b < g.zero() : b > g.zero()) return 0.0;
    return b == g.zero() ? 0.5 * row[b] : row[b];
  };
  double f = std::floor(x);
  double fr = x - f;
  if (fr > 1 - 1e-12) {
    f += 1;
    fr = 0;
  } else if (fr < 1e-12) {
    fr = 0;
  }
  const int b = static_cast<int>(f);
  return (1 - fr) * val(b) + (fr == 0 ? 0.0 : fr * val(b + 1));
}

// ---------------------------------------------------------------- bridge2

struct Cells {
  std::vector<double> mass, centre;
};

// Exact masses int gamma e^{-lambda a} over [kh, (k+1)h] and their centroids.
Cells exp_cells(double gamma, double lambda, double h) {
  Cells c;
  const double bh = lambda * h;
  const double e = std::exp(-bh);
  const double off = bh < 1e-6 ? h / 2 : 1 / lambda - h * e / (1 - e);
  const double m0 = gamma * (bh < 1e-8 ? h : (1 - e) / lambda);
  const int n = static_cast<int>(std::ceil(kExpCut / bh)) + 1;
  c.mass.resize(n);
  c.centre.resize(n);
  for (int k = 0; k < n; ++k) {
    c.mass[k] = m0 * std::exp(-lambda * k * h);
    c.centre[k] = k * h + off;
  }
  return c;
}

// First cell of c2 (uniform centres) with l1 + rj * centre <= l_max, rj < 0.
std::size_t first_in_window(const Cells& c2, double l1, double rj, const LevelDurationGrid& g) {
  if (c2.centre.size() < 2 || l1 <= g.l_max()) return 0;
  const double h = c2.centre[1] - c2.centre[0];
  const double k = std::floor(((l1 - g.l_max()) / -rj - c2.centre[0]) / h) - 1;
  return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(c2.centre.size())));
}

// Adds a point mass at (s, l) to the hat averages of node set z.
inline void deposit(BridgeSlice& out, const LevelDurationGrid& g, int z, int i, int j, double s,
                    double l, double mass) {
  const double x = (l + g.l_max()) / g.dl();
  if (x < 0 || x > g.q()) return;
  int b = std::min(static_cast<int>(x), g.q() - 1);
  const double fl = x - b;
  const double mb = mass * (1 - fl) / g.l_weight(b), mb1 = mass * fl / g.l_weight(b + 1);
  if (s > g.u_max() || z == g.overflow()) {
    double* r = out.row(z, i, j, g.overflow());
    r[b] += mb;
    r[b + 1] += mb1;
    return;
  }
  const double y = s / g.du();
  int a = std::min(static_cast<int>(y), g.m() - 1);
  const double fs = y - a;
  double* r0 = out.row(z, i, j, a);
  double* r1 = out.row(z, i, j, a + 1);
  const double w0 = (1 - fs) / g.s_weight(a), w1 = fs / g.s_weight(a + 1);
  r0[b] += mb * w0;
  r0[b + 1] += mb1 * w0;
  r1[b] += mb * w1;
  r1[b + 1] += mb1 * w1;
}

void bridge2_at(const BridgeContext& ctx, BridgeSlice& out, int z, const BridgeSlice* d_shared) {
  const auto& g = ctx.grid();
  const double zu = z == g.overflow() ? g.u_max() : g.duration(z);
  Matrix cb, db;
  for (int i = 0; i < ctx.np(); ++i)
    for (int j = 0; j < ctx.nm(); ++j) {
      const int si = ctx.plus(i), sj = ctx.minus(j);
      const double ri = ctx.rate(si), rj = ctx.rate(sj);
      const double h = std::min(g.du(), g.dl() / std::max(ri, -rj)) / ctx.oversample();
      const double lambda1 = ctx.gamma() + ctx.theta1() * ctx.sigma(si);
      Cells c1 = exp_cells(ctx.gamma(), lambda1, h);
      Cells c2 = exp_cells(ctx.gamma(), ctx.gamma(), h);
      const double kap = ctx.kappa(si, sj);
      for (std::size_t k1 = 0; k1 < c1.mass.size(); ++k1) {
        const double a1 = c1.centre[k1];
        if (z == g.overflow())
          cb = ctx.cbar_right(g.overflow()), db = ctx.dbar_right(g.overflow());
        else
          ctx.uniformized_at(zu + a1, cb, db);
        const double wc = c1.mass[k1] * cb(si, sj);
        const double wd = d_shared ? 0.0 : c1.mass[k1] * kap * db(si, sj);
        const double l1 = ri * a1;
        for (std::size_t k2 = first_in_window(c2, l1, rj, g); k2 < c2.mass.size(); ++k2) {
          const double a2 = c2.centre[k2];
          const double l = l1 + rj * a2;
          if (l < -g.l_max()) break;
          if (l > g.l_max()) continue;
          const double m = c2.mass[k2];
          if (wc != 0.0) deposit(out, g, z, i, j, zu + a1 + a2, l, wc * m);
          if (wd != 0.0) deposit(out, g, z, i, j, a2, l, wd * m);
        }
      }
    }
  if (d_shared) {
    // constant kernel: the arrival term does not depend on z
    for (int i = 0; i < ctx.np(); ++i)
      for (int j = 0; j < ctx.nm(); ++j)
        for (int s = 0; s < g.s_count(); ++s) {
          const double* src = d_shared->row(0, i, j, s);
          double* dst = out.row(z, i, j, s);
          for (int b = 0; b < g.l_count(); ++b) dst[b] += src[b];
        }
  }
}

// Arrival term alone at z = 0, reused for every z when the kernel is constant.
BridgeSlice bridge2_arrival_term(const BridgeContext& ctx) {
  const auto& g = ctx.grid();
  BridgeSlice d(g, ctx.np(), ctx.nm());
  Matrix cb, db;
  for (int i = 0; i < ctx.np(); ++i)
    for (int j = 0; j < ctx.nm(); ++j) {
      const int si = ctx.plus(i), sj = ctx.minus(j);
      const double ri = ctx.rate(si), rj = ctx.rate(sj);
      const double h = std::min(g.du(), g.dl() / std::max(ri, -rj)) / ctx.oversample();
      const double lambda1 = ctx.gamma() + ctx.theta1() * ctx.sigma(si);
      Cells c1 = exp_cells(ctx.gamma(), lambda1, h);
      Cells c2 = exp_cells(ctx.gamma(), ctx.gamma(), h);
      const double wd0 = ctx.kappa(si, sj) * ctx.dbar_right(0)(si, sj);
      if (wd0 == 0.0) continue;
      for (std::size_t k1 = 0; k1 < c1.mass.size(); ++k1) {
        const double l1 = ri * c1.centre[k1];
        const double wd = c1.mass[k1] * wd0;
        for (std::size_t k2 = first_in_window(c2, l1, rj, g); k2 < c2.mass.size(); ++k2) {
          const double a2 = c2.centre[k2];
          const double l = l1 + rj * a2;
          if (l < -g.l_max()) break;
          if (l > g.l_max()) continue;
          deposit(d, g, 0, i, j, a2, l, wd * c2.mass[k2]);
        }
      }
    }
  return d;
}

}  // namespace

BridgeSlice bridge2(const BridgeContext& ctx, Exec exec) {
  const auto& g = ctx.grid();
  BridgeSlice out(g, ctx.np(), ctx.nm());
  const bool constant = ctx.model().kernel.kind() == DurationKernel::Kind::constant;
  BridgeSlice shared;
  if (constant) shared = bridge2_arrival_term(ctx);
  const BridgeSlice* dptr = constant ? &shared : nullptr;
  const int nz = g.s_count();
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (int z = 0; z < nz; ++z) bridge2_at(ctx, out, z, dptr);
  } else {
    for (int z = 0; z < nz; ++z) bridge2_at(ctx, out, z, dptr);
  }
  return out;
}

// ---------------------------------------------------------------- Gamma first

namespace {

struct FirstPlan {
  int i;
  double rate;
  Taps taps;
};

std::vector<FirstPlan> first_plans(const BridgeContext& ctx) {
  const auto& g = ctx.grid();
  std::vector<FirstPlan> plans;
  for (int i = 0; i < ctx.np(); ++i) {
    const int si = ctx.plus(i);
    const double lambda = ctx.gamma() + ctx.theta1() * ctx.sigma(si);
    const double r = ctx.rate(si);
    plans.push_back({i, r, make_taps(ctx.gamma(), lambda, g.du(), tap_count(lambda, g.du(), r, g))});
  }
  return plans;
}

void gamma_first_at(const BridgeContext& ctx, const std::vector<FirstPlan>& plans,
                    const BridgeSlice& prev, const std::vector<double>& lower, BridgeSlice& out,
                    int z) {
  const auto& g = ctx.grid();
  const int b0 = g.zero(), q = g.q(), ov = g.overflow();
  const int np = ctx.np(), nm = ctx.nm(), ns = g.s_count();
  const int lw = b0 + 1;
  auto lrow = [&](int zz, int i, int j, int s) { return lower.data() + prev.index(zz, i, j, s, 0) / g.l_count() * lw; };
  for (const auto& pl : plans) {
    const int si = ctx.plus(pl.i);
    for (int k = 0; k < pl.taps.size(); ++k) {
      const int a = (z == ov) ? ov : std::min(z + k, ov);
      const Shift sh = level_shift(pl.rate * k * g.du(), g.dl());
      if (sh.dk > q + 1) break;
      const double wr = pl.taps.wr[k], wl = pl.taps.wl[k];
      for (int ip = 0; ip < np; ++ip) {
        const int sip = ctx.plus(ip);
        const double cc = wr * ctx.cbar_right(a)(si, sip) + wl * ctx.cbar_left(a)(si, sip);
        const double cd = ctx.kappa(si, sip) *
                          (wr * ctx.dbar_right(a)(si, sip) + wl * ctx.dbar_left(a)(si, sip));
        for (int j = 0; j < nm; ++j)
          for (int s = 0; s < ns; ++s) {
            double* o = out.row(z, pl.i, j, s);
            add_down(o, lrow(a, ip, j, s), b0, q, sh, cc);
            add_down(o, lrow(0, ip, j, s), b0, q, sh, cd);
          }
      }
    }
  }
}

void gamma_first_reference(const BridgeContext& ctx, const BridgeSlice& prev, BridgeSlice& out) {
  const auto& g = ctx.grid();
  const int ov = g.overflow();
  auto plans = first_plans(ctx);
  for (int z = 0; z < g.s_count(); ++z)
    for (const auto& pl : plans) {
      const int si = ctx.plus(pl.i);
      for (int j = 0; j < ctx.nm(); ++j)
        for (int s = 0; s < g.s_count(); ++s)
          for (int b = 0; b < g.l_count(); ++b) {
            double acc = 0;
            for (int k = 0; k < pl.taps.size(); ++k) {
              const double u = k * g.du();
              const int a = (z == ov) ? ov : std::min(z + k, ov);
              const double lev = g.level(b) - pl.rate * u;
              for (int ip = 0; ip < ctx.np(); ++ip) {
                const int sip = ctx.plus(ip);
                const double cc = pl.taps.wr[k] * ctx.cbar_right(a)(si, sip) +
                                  pl.taps.wl[k] * ctx.cbar_left(a)(si, sip);
                const double cd = ctx.kappa(si, sip) * (pl.taps.wr[k] * ctx.dbar_right(a)(si, sip) +
                                                        pl.taps.wl[k] * ctx.dbar_left(a)(si, sip));
                acc += cc * truncated_at(prev.row(a, ip, j, s), g, lev, false);
                acc += cd * truncated_at(prev.row(0, ip, j, s), g, lev, false);
              }
            }
            out.at(z, pl.i, j, s, b) = acc;
          }
    }
}

}  // namespace

BridgeSlice gamma_first(const BridgeContext& ctx, const BridgeSlice& prev, Exec exec) {
  const auto& g = ctx.grid();
  BridgeSlice out(g, ctx.np(), ctx.nm());
  if (exec == Exec::serial) {
    gamma_first_reference(ctx, prev, out);
    return out;
  }
  auto plans = first_plans(ctx);
  std::vector<double> lower = truncated(prev, g, false);
  const int nz = g.s_count();
#pragma omp parallel for schedule(dynamic, 1)
  for (int z = 0; z < nz; ++z) gamma_first_at(ctx, plans, prev, lower, out, z);
  return out;
}

// ---------------------------------------------------------------- Gamma last

namespace {

struct LastPlan {
  int j;
  double speed;  // |r(j)|
  Taps taps;     // rate gamma
};

std::vector<LastPlan> last_plans(const BridgeContext& ctx) {
  const auto& g = ctx.grid();
  std::vector<LastPlan> plans;
  for (int j = 0; j < ctx.nm(); ++j) {
    const double r = -ctx.rate(ctx.minus(j));
    plans.push_back({j, r, make_taps(ctx.gamma(), ctx.gamma(), g.du(),
                                     tap_count(ctx.gamma(), g.du(), r, g))});
  }
  return plans;
}

// Target node t = src + k receives the in-window share, the rest is overflow.
struct Split {
  double in, over;
};

inline Split split_tap(const Taps& t, int k, int target, int m) {
  Split s{0, 0};
  if (target <= m) {
    if (k > 0) s.in += t.wl[k];
  } else if (k > 0) {
    s.over += t.wl[k];
  }
  if (target < m)
    s.in += t.wr[k];
  else
    s.over += t.wr[k];
  return s;
}

void gamma_last_at(const BridgeContext& ctx, const std::vector<LastPlan>& plans,
                   const BridgeSlice& prev, const std::vector<double>& upper, BridgeSlice& out,
                   int z, std::vector<double>& rbuf) {
  const auto& g = ctx.grid();
  const int b0 = g.zero(), m = g.m(), ov = g.overflow();
  const int lw = b0 + 1;
  auto urow = [&](int zz, int i, int j, int s) {
    return upper.data() + prev.index(zz, i, j, s, 0) / g.l_count() * lw;
  };
  rbuf.assign(lw, 0.0);
  for (int i = 0; i < ctx.np(); ++i)
    for (const auto& pl : plans) {
      const int sj = ctx.minus(pl.j);
      for (int jp = 0; jp < ctx.nm(); ++jp) {
        const int sjp = ctx.minus(jp);
        // transition without arrival at the last intermediate epoch
        for (int src = 0; src <= ov; ++src) {
          const double c = ctx.cbar_mid(src)(sjp, sj);
          if (c == 0.0) continue;
          const double* up = urow(z, i, jp, src);
          const double wsrc = g.s_weight(src);
          for (int k = 0; k < pl.taps.size(); ++k) {
            const Shift sh = level_shift(pl.speed * k * g.du(), g.dl());
            if (sh.dk > g.q() + 1) break;
            if (src == ov) {
              add_up(out.row(z, i, pl.j, ov), up, b0, sh, c * pl.taps.w(k));
              continue;
            }
            const int t = src + k;
            const Split sp = split_tap(pl.taps, k, t, m);
            if (sp.in != 0.0)
              add_up(out.row(z, i, pl.j, t), up, b0, sh, c * sp.in * wsrc / g.s_weight(t));
            if (sp.over != 0.0) add_up(out.row(z, i, pl.j, ov), up, b0, sh, c * sp.over * wsrc);
          }
        }
        // arrival at the last intermediate epoch: duration restarts at 0
        std::fill(rbuf.begin(), rbuf.end(), 0.0);
        bool any = false;
        for (int src = 0; src <= ov; ++src) {
          const double c = g.s_weight(src) * ctx.kappa(sjp, sj) * ctx.dbar_mid(src)(sjp, sj);
          if (c == 0.0) continue;
          any = true;
          const double* up = urow(z, i, jp, src);
          for (int x = 0; x < lw; ++x) rbuf[x] += c * up[x];
        }
        if (!any) continue;
        for (int k = 0; k < pl.taps.size(); ++k) {
          const Shift sh = level_shift(pl.speed * k * g.du(), g.dl());
          if (sh.dk > g.q() + 1) break;
          const Split sp = split_tap(pl.taps, k, k, m);
          if (sp.in != 0.0) add_up(out.row(z, i, pl.j, k), rbuf.data(), b0, sh, sp.in / g.s_weight(k));
          if (sp.over != 0.0) add_up(out.row(z, i, pl.j, ov), rbuf.data(), b0, sh, sp.over);
        }
      }
    }
}

void gamma_last_reference(const BridgeContext& ctx, const BridgeSlice& prev, BridgeSlice& out) {
  const auto& g = ctx.grid();
  const int m = g.m(), ov = g.overflow();
  auto plans = last_plans(ctx);
  for (int z = 0; z < g.s_count(); ++z)
    for (int i = 0; i < ctx.np(); ++i)
      for (const auto& pl : plans) {
        const int sj = ctx.minus(pl.j);
        for (int t = 0; t <= ov; ++t)
          for (int b = 0; b < g.l_count(); ++b) {
            const double lev = g.level(b);
            double acc = 0;
            for (int jp = 0; jp < ctx.nm(); ++jp) {
              const int sjp = ctx.minus(jp);
              for (int src = 0; src <= ov; ++src) {
                const double c = ctx.cbar_mid(src)(sjp, sj);
                const double* row = prev.row(z, i, jp, src);
                for (int k = 0; k < pl.taps.size(); ++k) {
                  const double u = k * g.du();
                  double w = 0;
                  if (src == ov) {
                    if (t == ov) w = pl.taps.w(k);
                  } else {
                    const Split sp = split_tap(pl.taps, k, src + k, m);
                    if (t == src + k && t <= m) w += sp.in * g.s_weight(src) / g.s_weight(t);
                    if (t == ov) w += sp.over * g.s_weight(src);
                  }
                  if (w != 0.0) acc += c * w * truncated_at(row, g, lev + pl.speed * u, true);
                }
                const double d = g.s_weight(src) * ctx.kappa(sjp, sj) * ctx.dbar_mid(src)(sjp, sj);
                if (d == 0.0) continue;
                for (int k = 0; k < pl.taps.size(); ++k) {
                  const Split sp = split_tap(pl.taps, k, k, m);
                  double w = 0;
                  if (t == k && t <= m) w += sp.in / g.s_weight(t);
                  if (t == ov) w += sp.over;
                  if (w != 0.0)
                    acc += d * w * truncated_at(row, g, lev + pl.speed * k * g.du(), true);
                }
              }
            }
            out.at(z, i, pl.j, t, b) = acc;
          }
      }
}

}  // namespace

BridgeSlice gamma_last(const BridgeContext& ctx, const BridgeSlice& prev, Exec exec) {
  const auto& g = ctx.grid();
  BridgeSlice out(g, ctx.np(), ctx.nm());
  if (exec == Exec::serial) {
    gamma_last_reference(ctx, prev, out);
    return out;
  }
  auto plans = last_plans(ctx);
  std::vector<double> upper = truncated(prev, g, true);
  const int nz = g.s_count();
#pragma omp parallel
  {
    std::vector<double> rbuf;
#pragma omp for schedule(dynamic, 1)
    for (int z = 0; z < nz; ++z) gamma_last_at(ctx, plans, prev, upper, out, z, rbuf);
  }
  return out;
}

}  // namespace fluidrisk
