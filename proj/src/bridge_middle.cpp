#include "fluidrisk/bridge.hpp"
#include "fluidrisk/errors.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>

namespace fluidrisk {

namespace {

int nice_size(int n) {
  for (int k = n;; ++k) {
    int r = k;
    for (int f : {2, 3, 5, 7})
      while (r % f == 0) r /= f;
    if (r == 1) return k;
  }
}

using CMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

struct LevelSpectra::Plans {
  int howmany = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan forward = nullptr, backward = nullptr;

  ~Plans() {
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
    fftw_free(real);
    fftw_free(spec);
  }
};

LevelSpectra::LevelSpectra(const BridgeContext& ctx)
    : ctx_(ctx), nfft_(nice_size(ctx.grid().l_count())), plans_(std::make_unique<Plans>()) {
  const auto& g = ctx.grid();
  const int ns = g.s_count();
  auto& p = *plans_;
  p.howmany = ctx.np() * ctx.nm() * ns * ns;
  p.real = fftw_alloc_real(static_cast<std::size_t>(p.howmany) * nfft_);
  p.spec = fftw_alloc_complex(static_cast<std::size_t>(p.howmany) * bins());
  if (!p.real || !p.spec) throw NumericError("FFT buffer allocation failed");
  int n[] = {nfft_};
  // transform t is contiguous in real space; bin f of transform t sits at
  // f * howmany + t so that each bin is a block of matrices
  p.forward = fftw_plan_many_dft_r2c(1, n, p.howmany, p.real, nullptr, 1, nfft_, p.spec, nullptr,
                                     p.howmany, 1, FFTW_ESTIMATE);
  p.backward = fftw_plan_many_dft_c2r(1, n, p.howmany, p.spec, nullptr, p.howmany, 1, p.real,
                                      nullptr, 1, nfft_, FFTW_ESTIMATE);
  if (!p.forward || !p.backward) throw NumericError("FFTW planning failed");
}

LevelSpectra::~LevelSpectra() = default;

LevelSpectra::Spectrum LevelSpectra::zero_spectrum() const {
  return Spectrum(static_cast<std::size_t>(plans_->howmany) * bins());
}

LevelSpectra::Spectrum LevelSpectra::first_factor(const BridgeSlice& slice) const {
  const auto& g = ctx_.grid();
  const int ns = g.s_count(), b0 = g.zero();
  auto& p = *plans_;
  std::memset(p.real, 0, sizeof(double) * p.howmany * nfft_);
  for (int i = 0; i < ctx_.np(); ++i)
    for (int jp = 0; jp < ctx_.nm(); ++jp)
      for (int z = 0; z < ns; ++z)
        for (int u = 0; u < ns; ++u) {
          const std::size_t t = ((static_cast<std::size_t>(i) * ctx_.nm() + jp) * ns + z) * ns + u;
          const double* src = slice.row(z, i, jp, u);
          double* dst = p.real + t * nfft_;
          for (int k = 0; k <= b0; ++k) dst[k] = src[b0 + k];
          dst[0] *= 0.5;
        }
  fftw_execute(p.forward);
  Spectrum out(static_cast<std::size_t>(p.howmany) * bins());
  std::memcpy(static_cast<void*>(out.data()), p.spec, sizeof(fftw_complex) * out.size());
  return out;
}

LevelSpectra::Spectrum LevelSpectra::second_factor(const BridgeSlice& slice) const {
  const auto& g = ctx_.grid();
  const int ns = g.s_count(), b0 = g.zero();
  const int np = ctx_.np(), nm = ctx_.nm();
  auto& p = *plans_;
  std::memset(p.real, 0, sizeof(double) * p.howmany * nfft_);
  for (int ip = 0; ip < np; ++ip)
    for (int j = 0; j < nm; ++j)
      for (int z = 0; z < ns; ++z)
        for (int s = 0; s < ns; ++s) {
          const std::size_t t = ((static_cast<std::size_t>(ip) * nm + j) * ns + z) * ns + s;
          const double* src = slice.row(z, ip, j, s);
          double* dst = p.real + t * nfft_;
          for (int k = 0; k <= b0; ++k) dst[k] = src[k];
          dst[b0] *= 0.5;
        }
  fftw_execute(p.forward);
  const auto* raw = reinterpret_cast<const std::complex<double>*>(p.spec);
  const std::size_t block = static_cast<std::size_t>(ns) * ns;
  const std::size_t per_bin = static_cast<std::size_t>(p.howmany);
  // premultiply by the kernel of the transition at the joining epoch:
  // out[j'][j](u, s) = ws(u) sum_i' Cbar_{j'i'}(u) B[i'][j](u, s) + kappa Dbar_{j'i'}(u) B[i'][j](0, s)
  Spectrum out(per_bin * bins());
  const int nb = bins();
#pragma omp parallel for schedule(static)
  for (int f = 0; f < nb; ++f) {
    const std::complex<double>* bf = raw + f * per_bin;
    std::complex<double>* of = out.data() + f * per_bin;
    for (int jp = 0; jp < nm; ++jp)
      for (int j = 0; j < nm; ++j) {
        std::complex<double>* dst = of + (static_cast<std::size_t>(jp) * nm + j) * block;
        for (int ip = 0; ip < np; ++ip) {
          const std::complex<double>* b = bf + (static_cast<std::size_t>(ip) * nm + j) * block;
          const int sjp = ctx_.minus(jp), sip = ctx_.plus(ip);
          for (int u = 0; u < ns; ++u) {
            const double ws = g.s_weight(u);
            const double c = ws * ctx_.cbar_mid(u)(sjp, sip);
            const double d = ws * ctx_.kappa(sjp, sip) * ctx_.dbar_mid(u)(sjp, sip);
            std::complex<double>* drow = dst + static_cast<std::size_t>(u) * ns;
            const std::complex<double>* brow = b + static_cast<std::size_t>(u) * ns;
            if (c != 0.0)
              for (int s = 0; s < ns; ++s) drow[s] += c * brow[s];
            if (d != 0.0)
              for (int s = 0; s < ns; ++s) drow[s] += d * b[s];
          }
        }
      }
  }
  return out;
}

void LevelSpectra::accumulate(const Spectrum& first, const Spectrum& second, Spectrum& acc) const {
  const auto& g = ctx_.grid();
  const int ns = g.s_count();
  const int np = ctx_.np(), nm = ctx_.nm();
  const std::size_t block = static_cast<std::size_t>(ns) * ns;
  const std::size_t per_bin = static_cast<std::size_t>(plans_->howmany);
  const int nb = bins();
#pragma omp parallel for schedule(static)
  for (int f = 0; f < nb; ++f) {
    for (int i = 0; i < np; ++i)
      for (int j = 0; j < nm; ++j) {
        Eigen::Map<CMatrix> out(acc.data() + f * per_bin + (static_cast<std::size_t>(i) * nm + j) * block, ns, ns);
        for (int jp = 0; jp < nm; ++jp) {
          Eigen::Map<const CMatrix> a(first.data() + f * per_bin + (static_cast<std::size_t>(i) * nm + jp) * block, ns, ns);
          Eigen::Map<const CMatrix> b(second.data() + f * per_bin + (static_cast<std::size_t>(jp) * nm + j) * block, ns, ns);
          out.noalias() += a * b;
        }
      }
  }
}

BridgeSlice LevelSpectra::synthesize(const Spectrum& acc) const {
  const auto& g = ctx_.grid();
  const int ns = g.s_count();
  const int np = ctx_.np(), nm = ctx_.nm();
  auto& p = *plans_;
  std::memcpy(p.spec, acc.data(), sizeof(fftw_complex) * acc.size());
  fftw_execute(p.backward);
  BridgeSlice out(g, np, nm);
  const double scale = g.dl() / nfft_;
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < nm; ++j)
      for (int z = 0; z < ns; ++z)
        for (int s = 0; s < ns; ++s) {
          const std::size_t t = ((static_cast<std::size_t>(i) * nm + j) * ns + z) * ns + s;
          const double* src = p.real + t * nfft_;
          double* dst = out.row(z, i, j, s);
          for (int b = 0; b < g.l_count(); ++b) dst[b] = scale * src[b];
        }
  return out;
}

namespace {

void gamma_middle_reference(const BridgeContext& ctx, const BridgeSlice& first,
                            const BridgeSlice& second, BridgeSlice& out) {
  const auto& g = ctx.grid();
  const int ns = g.s_count(), b0 = g.zero(), q = g.q();
  std::vector<double> a(b0 + 1), c(b0 + 1), c0(b0 + 1);
  for (int z = 0; z < ns; ++z)
    for (int i = 0; i < ctx.np(); ++i)
      for (int j = 0; j < ctx.nm(); ++j)
        for (int s = 0; s < ns; ++s) {
          double* o = out.row(z, i, j, s);
          for (int jp = 0; jp < ctx.nm(); ++jp)
            for (int ip = 0; ip < ctx.np(); ++ip) {
              const int sjp = ctx.minus(jp), sip = ctx.plus(ip);
              const double* r0 = second.row(0, ip, j, s);
              for (int k = 0; k <= b0; ++k) c0[k] = r0[k];
              c0[b0] *= 0.5;
              for (int u = 0; u < ns; ++u) {
                const double* r1 = first.row(z, i, jp, u);
                for (int k = 0; k <= b0; ++k) a[k] = r1[b0 + k];
                a[0] *= 0.5;
                const double* r2 = second.row(u, ip, j, s);
                for (int k = 0; k <= b0; ++k) c[k] = r2[k];
                c[b0] *= 0.5;
                const double ws = g.s_weight(u);
                const double cc = ws * ctx.cbar_mid(u)(sjp, sip);
                const double cd = ws * ctx.kappa(sjp, sip) * ctx.dbar_mid(u)(sjp, sip);
                for (int b = 0; b <= q; ++b) {
                  double acc = 0;
                  for (int k1 = std::max(0, b - b0); k1 <= std::min(b0, b); ++k1)
                    acc += a[k1] * (cc * c[b - k1] + cd * c0[b - k1]);
                  o[b] += g.dl() * acc;
                }
              }
            }
        }
}

}  // namespace

BridgeSlice gamma_middle(const BridgeContext& ctx, const BridgeSlice& first,
                         const BridgeSlice& second, Exec exec) {
  if (exec == Exec::serial) {
    BridgeSlice out(ctx.grid(), ctx.np(), ctx.nm());
    gamma_middle_reference(ctx, first, second, out);
    return out;
  }
  LevelSpectra sp(ctx);
  auto acc = sp.zero_spectrum();
  sp.accumulate(sp.first_factor(first), sp.second_factor(second), acc);
  return sp.synthesize(acc);
}

}  // namespace fluidrisk
