#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mclock/core.hpp"
#include "mclock/fourier.hpp"
#include "mclock/model.hpp"

namespace mclock {

/// Density matrix in the quasi-momentum basis (grid order).
struct DensityMatrix {
  CMatrix rho;
  double time = 0.0;

  int size() const { return static_cast<int>(rho.rows()); }

  static DensityMatrix from_pure(const PureState& psi) {
    const PureState k = in_basis(psi, Basis::momentum);
    return {k.amps * k.amps.adjoint(), psi.time};
  }

  static DensityMatrix maximally_mixed(int n) {
    return {CMatrix::Identity(n, n) / static_cast<double>(n), 0.0};
  }

  static DensityMatrix diagonal(const RVector& p) {
    return {p.cast<cplx>().asDiagonal(), 0.0};
  }

  double hermiticity_defect() const { return (rho - rho.adjoint()).cwiseAbs().maxCoeff(); }
  double trace_defect() const { return std::abs(rho.trace() - cplx{1.0, 0.0}); }

  /// Hermitian, unit trace and positive semidefinite to `tol`; throws ConfigError otherwise.
  void validate(double tol = 1e-9) const {
    if (rho.rows() != rho.cols()) throw ConfigError("density matrix must be square");
    if (hermiticity_defect() > tol) throw ConfigError("density matrix is not Hermitian");
    if (trace_defect() > tol) throw ConfigError("density matrix does not have unit trace");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho);
    if (es.eigenvalues().minCoeff() < -tol)
      throw ConfigError("density matrix is not positive semidefinite");
  }
};

/// Occupations rho_kk of the diagonal sector.
struct DiagonalDistribution {
  RVector p;
  double time = 0.0;

  void validate(double tol = 1e-9) const {
    if ((p.array() < -tol).any()) throw ConfigError("negative occupation in diagonal distribution");
    if (std::abs(p.sum() - 1.0) > tol) throw ConfigError("occupations do not sum to one");
  }
};

/// Generator of the diagonal sector, L(k, alpha) = eta^2(alpha - k) - delta(k, alpha), without gamma.
inline RMatrix diagonal_generator(const AmplitudeTable& table) {
  const int n = table.n_sites;
  const MomentumGrid grid(n);
  const RVector kernel = table.kernel();
  RMatrix l(n, n);
  for (int k = 0; k < n; ++k)
    for (int a = 0; a < n; ++a) l(k, a) = kernel[grid.difference(a, k)] - (k == a ? 1.0 : 0.0);
  return l;
}

// ---------------------------------------------------------------------------
// Dense reference superoperator (arbitrary per-site rates)
// ---------------------------------------------------------------------------

/// Explicit N^2 x N^2 Liouvillian acting on rho flattened row-major, index k*N + k'.
///
/// Built column by column: the image of |k><k'| under the dissipators is
///   (1/N) sum_a gamma_a sum_{alpha,beta} eta(alpha-k) eta(k'-beta) e^{-ia(alpha-beta+k'-k)} |alpha><beta|
///   - (1/2N) sum_a gamma_a sum_{alpha,beta} eta(alpha-beta) eta(beta-k) e^{-ia(alpha-k)} |alpha><k'|
///   - (1/2N) sum_a gamma_a sum_{alpha,beta} eta(k'-alpha) eta(alpha-beta) e^{-ia(k'-beta)} |k><beta|
class DenseLiouvillian {
 public:
  static constexpr int kMaxSites = 32;

  DenseLiouvillian(const ModelConfig& config, const AmplitudeTable& table) : n_(config.n_sites) {
    config.validate();
    if (n_ > kMaxSites)
      throw ConfigError("dense superoperator refused for N=" + std::to_string(n_) + " > " +
                        std::to_string(kMaxSites) + "; use the uniform-rate path");
    const int n = n_;
    const int nn = n * n;
    const MomentumGrid grid(n);
    const RVector energies = band_energies(config);
    const RVector& eta = table.eta_by_difference;

    // rate_phase[d] = (1/N) sum_a gamma_a exp(-i a q_d)
    CVector rate_phase = CVector::Zero(n);
    for (int d = 0; d < n; ++d)
      for (int a = 0; a < n; ++a)
        rate_phase[d] += config.rates.at(a) * std::polar(1.0, -2.0 * std::numbers::pi * a * d / n);
    rate_phase /= static_cast<double>(n);

    // eta_conv[d] = sum_beta eta(q_d - q_beta) eta(q_beta)
    RVector eta_conv = RVector::Zero(n);
    for (int d = 0; d < n; ++d)
      for (int b = 0; b < n; ++b) eta_conv[d] += eta[grid.wrap(d - b)] * eta[b];

    super_ = CMatrix::Zero(nn, nn);
    auto idx = [n](int r, int c) { return r * n + c; };
    for (int k = 0; k < n; ++k) {
      for (int kp = 0; kp < n; ++kp) {
        const int col = idx(k, kp);
        super_(col, col) += -kI * (energies[k] - energies[kp]);
        for (int al = 0; al < n; ++al) {
          const double e1 = eta[grid.difference(al, k)];
          for (int be = 0; be < n; ++be) {
            const int phase = grid.wrap((al - be) + (kp - k));
            super_(idx(al, be), col) += e1 * eta[grid.difference(kp, be)] * rate_phase[phase];
          }
          super_(idx(al, kp), col) -= 0.5 * eta_conv[grid.difference(al, k)] *
                                      rate_phase[grid.difference(al, k)];
        }
        for (int be = 0; be < n; ++be)
          super_(idx(k, be), col) -= 0.5 * eta_conv[grid.difference(kp, be)] *
                                     rate_phase[grid.difference(kp, be)];
      }
    }
  }

  int size() const { return n_; }
  const CMatrix& matrix() const { return super_; }

  static CVector flatten(const CMatrix& rho) {
    const int n = static_cast<int>(rho.rows());
    CVector v(n * n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) v[r * n + c] = rho(r, c);
    return v;
  }

  static CMatrix unflatten(const CVector& v, int n) {
    CMatrix m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = v[r * n + c];
    return m;
  }

  CMatrix apply(const CMatrix& rho) const { return unflatten(super_ * flatten(rho), n_); }

 private:
  int n_;
  CMatrix super_;
};

inline CMatrix apply_liouvillian_dense(const ModelConfig& config, const AmplitudeTable& table,
                                       const DensityMatrix& rho) {
  return DenseLiouvillian(config, table).apply(rho.rho);
}

// ---------------------------------------------------------------------------
// Uniform-rate fast path
// ---------------------------------------------------------------------------

/// Liouvillian for gamma_a = gamma. Entries on one diagonal band, rho(j, j - d), only mix
/// among themselves through a circular convolution with eta^2, so each application costs
/// N FFT pairs instead of the O(N^4) dense product.
class UniformLiouvillian {
 public:
  UniformLiouvillian(const ModelConfig& config, const AmplitudeTable& table)
      : n_(config.n_sites),
        gamma_(config.rates.uniform_value()),
        energies_(band_energies(config)),
        conv_(table.kernel()),
        band_(config.n_sites),
        mixed_(config.n_sites) {
    config.validate();
  }

  int size() const { return n_; }
  double gamma() const { return gamma_; }

  void apply(const CMatrix& rho, CMatrix& out) {
    const int n = n_;
    out.resize(n, n);
    for (int d = 0; d < n; ++d) {
      for (int i = 0; i < n; ++i) band_[i] = rho(i, wrap(i - d));
      conv_.apply(band_, mixed_);
      for (int j = 0; j < n; ++j) {
        const int jp = wrap(j - d);
        out(j, jp) = (-kI * (energies_[j] - energies_[jp]) - gamma_) * band_[j] + gamma_ * mixed_[j];
      }
    }
  }

  CMatrix apply(const CMatrix& rho) {
    CMatrix out;
    apply(rho, out);
    return out;
  }

 private:
  int wrap(int j) const { return ((j % n_) + n_) % n_; }

  int n_;
  double gamma_;
  RVector energies_;
  CircularConvolution conv_;
  CVector band_;
  CVector mixed_;
};

inline CMatrix apply_liouvillian_uniform(const ModelConfig& config, const AmplitudeTable& table,
                                         const DensityMatrix& rho) {
  if (!config.rates.is_uniform())
    throw ConfigError("apply_liouvillian_uniform called with per-site rates");
  return UniformLiouvillian(config, table).apply(rho.rho);
}

/// Time evolution of a single band v_j = X(j, j - d) under the uniform-rate Liouvillian.
///
/// The band is held in its DFT conjugate variable r, where the eta^2 convolution is diagonal
/// and multiplication by cos k becomes a nearest-neighbour shift:
///   dv_r/dt = i t_hop (A v_{r-1} + B v_{r+1}) + gamma (lambda_r - 1) v_r
/// with A = c (1 - e^{-i q_d}), B = conj(c) (1 - e^{i q_d}) and c = exp(-2 pi i offset / N).
/// Steps are fixed-size RK4.
class BandPropagator {
 public:
  BandPropagator(const ModelConfig& config, const AmplitudeTable& table, int band, double dt_max)
      : n_(config.n_sites), dt_max_(dt_max), v_(n_), k1_(n_), k2_(n_), k3_(n_), k4_(n_), tmp_(n_) {
    config.validate();
    if (!(dt_max > 0.0)) throw ConfigError("dt must be > 0");
    const double gamma = config.rates.uniform_value();
    const MomentumGrid grid(n_);
    const double q = 2.0 * std::numbers::pi * band / n_;
    const cplx c = std::polar(1.0, -2.0 * std::numbers::pi * grid.offset() / n_);
    const cplx it = kI * config.t_hop;
    a_ = it * c * (1.0 - std::polar(1.0, -q));
    b_ = it * std::conj(c) * (1.0 - std::polar(1.0, q));
    CircularConvolution conv(table.kernel());
    decay_.resize(n_);
    for (int r = 0; r < n_; ++r) decay_[r] = gamma * (conv.spectrum()[r].real() - 1.0);
  }

  void load(const CVector& band_values) { fft_.fwd(v_, band_values); }

  CVector band() {
    CVector out(n_);
    fft_.inv(out, v_);
    return out;
  }

  void advance(double duration) {
    if (duration <= 0.0) return;
    const long steps = std::max(1L, static_cast<long>(std::ceil(duration / dt_max_ - 1e-9)));
    const double h = duration / static_cast<double>(steps);
    for (long s = 0; s < steps; ++s) rk4_step(h);
  }

 private:
  void derivative(const CVector& v, CVector& out) const {
    const int n = n_;
    const cplx* x = v.data();
    cplx* y = out.data();
    y[0] = a_ * x[n - 1] + b_ * x[1] + decay_[0] * x[0];
    for (int r = 1; r < n - 1; ++r) y[r] = a_ * x[r - 1] + b_ * x[r + 1] + decay_[r] * x[r];
    y[n - 1] = a_ * x[n - 2] + b_ * x[0] + decay_[n - 1] * x[n - 1];
  }

  void rk4_step(double h) {
    derivative(v_, k1_);
    tmp_ = v_ + (0.5 * h) * k1_;
    derivative(tmp_, k2_);
    tmp_ = v_ + (0.5 * h) * k2_;
    derivative(tmp_, k3_);
    tmp_ = v_ + h * k3_;
    derivative(tmp_, k4_);
    v_ += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

  int n_;
  double dt_max_;
  cplx a_, b_;
  RVector decay_;
  CVector v_, k1_, k2_, k3_, k4_, tmp_;
  Eigen::FFT<double> fft_;
};

/// Largest step allowed by the integrator rule dt <= 0.05 min(1/gamma, 1/(2 t_hop)).
inline double default_time_step(const ModelConfig& config) {
  double bound = 1.0 / (2.0 * std::abs(config.t_hop));
  const double g = config.rates.max_value();
  if (g > 0.0) bound = std::min(bound, 1.0 / g);
  return 0.05 * bound;
}

/// Tr(A X(t)) at each requested time, where X evolves from X0 under the uniform-rate
/// Liouvillian. Bands are independent and may be spread over `threads` workers; partial
/// traces are summed in band order so the result does not depend on the thread count.
inline std::vector<cplx> propagate_expectation(const ModelConfig& config, const AmplitudeTable& table,
                                               const CMatrix& x0, const CMatrix& observable,
                                               const std::vector<double>& times, double dt_max,
                                               int threads = 1) {
  const int n = config.n_sites;
  const MomentumGrid grid(n);
  if (x0.rows() != n || observable.rows() != n) throw ConfigError("matrix size does not match N");
  for (std::size_t s = 1; s < times.size(); ++s)
    if (times[s] < times[s - 1]) throw ConfigError("propagation times must be non-decreasing");
  if (!times.empty() && times.front() < 0.0) throw ConfigError("propagation times must be >= 0");

  std::vector<std::vector<cplx>> partial(n, std::vector<cplx>(times.size()));
  auto run_band = [&](int d) {
    BandPropagator prop(config, table, d, dt_max);
    CVector band(n);
    CVector weight(n);
    for (int j = 0; j < n; ++j) {
      band[j] = x0(j, grid.wrap(j - d));
      weight[j] = observable(grid.wrap(j - d), j);
    }
    prop.load(band);
    double t = 0.0;
    for (std::size_t s = 0; s < times.size(); ++s) {
      prop.advance(times[s] - t);
      t = times[s];
      partial[d][s] = weight.cwiseProduct(prop.band()).sum();
    }
  };

  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int d = 0; d < n; ++d) run_band(d);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (int d = w; d < n; d += threads) run_band(d);
      });
    for (auto& th : pool) th.join();
  }

  std::vector<cplx> out(times.size(), cplx{0.0, 0.0});
  for (int d = 0; d < n; ++d)
    for (std::size_t s = 0; s < times.size(); ++s) out[s] += partial[d][s];
  return out;
}

// ---------------------------------------------------------------------------
// Time stepping
// ---------------------------------------------------------------------------

enum class IntegrationMethod { rk4 };

struct IntegrationOptions {
  double t_final = 0.0;
  double dt = 0.0;
  double sample_dt = 0.0;
  IntegrationMethod method = IntegrationMethod::rk4;
  double trace_tolerance = 1e-6;
};

/// Sample grid 0, sample_dt, ..., t_final; t_final must be a multiple of sample_dt.
inline std::vector<double> sample_times(double t_final, double sample_dt) {
  if (!(sample_dt > 0.0)) throw ConfigError("sample_dt must be > 0");
  if (!(t_final >= 0.0)) throw ConfigError("t_final must be >= 0");
  const double ratio = t_final / sample_dt;
  const long count = std::lround(ratio);
  if (std::abs(ratio - static_cast<double>(count)) > 1e-9 * std::max(1.0, ratio))
    throw ConfigError("t_final must be an integer multiple of sample_dt");
  std::vector<double> t(static_cast<std::size_t>(count) + 1);
  for (long s = 0; s <= count; ++s) t[s] = static_cast<double>(s) * sample_dt;
  return t;
}

/// Substeps per sample interval so that the step never exceeds dt.
inline long substeps(double sample_dt, double dt) {
  return std::max(1L, static_cast<long>(std::ceil(sample_dt / dt - 1e-9)));
}

struct IntegrationDiagnostics {
  double max_trace_drift = 0.0;
  double max_hermiticity_defect = 0.0;
};

using DensityObserver = std::function<void(const DensityMatrix&)>;

/// Fixed-step RK4 of the master equation. Uniform rates take the fast path, per-site rates
/// the dense superoperator. After each step rho <- (rho + rho^dagger)/2; a trace drift above
/// the tolerance aborts with NumericalError.
inline IntegrationDiagnostics integrate(const ModelConfig& config, const AmplitudeTable& table,
                                        const DensityMatrix& rho0, const IntegrationOptions& options,
                                        const DensityObserver& observe) {
  config.validate();
  if (!(options.dt > 0.0)) throw ConfigError("dt must be > 0");
  if (rho0.size() != config.n_sites) throw ConfigError("initial state size does not match N");
  const std::vector<double> times = sample_times(options.t_final, options.sample_dt);
  const long sub = substeps(options.sample_dt, options.dt);
  const double h = options.sample_dt / static_cast<double>(sub);

  std::function<void(const CMatrix&, CMatrix&)> generator;
  std::optional<UniformLiouvillian> uniform;
  std::optional<DenseLiouvillian> dense;
  if (config.rates.is_uniform()) {
    uniform.emplace(config, table);
    generator = [&](const CMatrix& r, CMatrix& o) { uniform->apply(r, o); };
  } else {
    dense.emplace(config, table);
    generator = [&](const CMatrix& r, CMatrix& o) { o = dense->apply(r); };
  }

  IntegrationDiagnostics diag;
  const cplx trace0 = rho0.rho.trace();
  DensityMatrix state{rho0.rho, 0.0};
  CMatrix k1, k2, k3, k4, tmp;
  observe(state);
  for (std::size_t s = 1; s < times.size(); ++s) {
    for (long i = 0; i < sub; ++i) {
      generator(state.rho, k1);
      tmp = state.rho + (0.5 * h) * k1;
      generator(tmp, k2);
      tmp = state.rho + (0.5 * h) * k2;
      generator(tmp, k3);
      tmp = state.rho + h * k3;
      generator(tmp, k4);
      state.rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!state.rho.allFinite())
        throw NumericalError("density matrix became non-finite at t=" +
                             std::to_string(times[s - 1] + (i + 1) * h) + "; reduce dt");
      diag.max_hermiticity_defect = std::max(diag.max_hermiticity_defect, state.hermiticity_defect());
      tmp = 0.5 * (state.rho + state.rho.adjoint());
      state.rho = tmp;
      const double drift = std::abs(state.rho.trace() - trace0);
      diag.max_trace_drift = std::max(diag.max_trace_drift, drift);
      if (!(drift <= options.trace_tolerance))
        throw NumericalError("trace drift " + std::to_string(drift) + " at t=" +
                             std::to_string(times[s - 1] + (i + 1) * h) +
                             " exceeds tolerance; reduce dt");
    }
    state.time = times[s];
    observe(state);
  }
  return diag;
}

struct DensitySeries {
  std::vector<DensityMatrix> samples;
  IntegrationDiagnostics diagnostics;
};

inline DensitySeries integrate(const ModelConfig& config, const AmplitudeTable& table,
                               const DensityMatrix& rho0, const IntegrationOptions& options) {
  DensitySeries out;
  out.diagnostics =
      integrate(config, table, rho0, options, [&](const DensityMatrix& r) { out.samples.push_back(r); });
  return out;
}

// ---------------------------------------------------------------------------
// Closed-form diagonal sector
// ---------------------------------------------------------------------------

/// dp_k/dt = gamma (sum_alpha eta^2(alpha - k) p_alpha - p_k). The generator is circulant, so
/// p(t) = IDFT(exp(gamma (lambda_m - 1) t) DFT(p0)) with lambda the DFT of eta^2.
inline std::vector<DiagonalDistribution> solve_diagonal_exact(const AmplitudeTable& table,
                                                              const DiagonalDistribution& p0,
                                                              double gamma,
                                                              const std::vector<double>& times) {
  const int n = table.n_sites;
  if (p0.p.size() != n) throw ConfigError("initial distribution size does not match N");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  CircularConvolution conv(table.kernel());
  Eigen::FFT<double> fft;
  CVector p0c = p0.p.cast<cplx>();
  CVector modes(n);
  fft.fwd(modes, p0c);
  std::vector<DiagonalDistribution> out;
  out.reserve(times.size());
  CVector evolved(n);
  CVector back(n);
  for (double t : times) {
    for (int m = 0; m < n; ++m)
      evolved[m] = modes[m] * std::exp(gamma * (conv.spectrum()[m].real() - 1.0) * t);
    fft.inv(back, evolved);
    out.push_back({back.real(), t});
  }
  return out;
}

}  // namespace mclock
