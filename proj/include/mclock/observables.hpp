#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "mclock/core.hpp"
#include "mclock/liouville.hpp"
#include "mclock/model.hpp"

namespace mclock {

// ---------------------------------------------------------------------------
// Single-state observables
// ---------------------------------------------------------------------------

/// Net probability current J = sum_a Im(conj(psi_a) psi_{a+1}), periodic in a.
inline double current_expectation(const PureState& psi) {
  const PureState pos = in_basis(psi, Basis::position);
  const int n = pos.size();
  double j = 0.0;
  for (int a = 0; a < n; ++a) j += (std::conj(pos.amps[a]) * pos.amps[(a + 1) % n]).imag();
  return j;
}

/// Same quantity from quasi-momentum occupations: J = sum_k |psi_k|^2 sin k.
inline double current_expectation_momentum(const PureState& psi) {
  const PureState mom = in_basis(psi, Basis::momentum);
  const MomentumGrid grid(mom.size());
  double j = 0.0;
  for (int k = 0; k < mom.size(); ++k) j += std::norm(mom.amps[k]) * std::sin(grid.k(k));
  return j;
}

/// Inverse participation ratio in the position basis, 1 / sum_b |psi_b|^4.
inline double ipr(const PureState& psi) {
  const PureState pos = in_basis(psi, Basis::position);
  return 1.0 / pos.amps.cwiseAbs2().array().square().sum();
}

inline double ipr_of_density(const RVector& position_density) {
  return 1.0 / position_density.array().square().sum();
}

/// Site of the largest |psi_b|^2, smallest index on ties.
inline int peak_site(const RVector& position_density) {
  int best = 0;
  for (int b = 1; b < position_density.size(); ++b)
    if (position_density[b] > position_density[best]) best = b;
  return best;
}

/// Ring angle 2 pi j* / N of the peak amplitude (0-based site j*).
inline double peak_angle(const RVector& position_density) {
  return 2.0 * std::numbers::pi * peak_site(position_density) /
         static_cast<double>(position_density.size());
}

/// y_j = sin(phi_j) for a sequence of position-basis densities.
inline std::vector<double> peak_angle_series(const std::vector<RVector>& position_densities) {
  std::vector<double> y;
  y.reserve(position_densities.size());
  for (const auto& p : position_densities) y.push_back(std::sin(peak_angle(p)));
  return y;
}

// ---------------------------------------------------------------------------
// Steady-state two-time correlator
// ---------------------------------------------------------------------------

struct CorrelationSeries {
  std::vector<double> tau;
  std::vector<cplx> raw;            // <D_a(tau) D_a>_ss
  std::vector<double> normalized;   // Re C_{a,ss}(tau)
  std::vector<double> imag;         // Im C_{a,ss}(tau), diagnostic
  int site = 0;                     // 0-based
  int n_sites = 0;
  double gamma = 0.0;
  double sigma = 0.0;
  double period = 0.0;              // N / (2 t_hop)
  double max_imag = 0.0;

  /// True when Im C stays below 1e-6 max|C|.
  bool imag_within_tolerance() const {
    double peak = 0.0;
    for (double c : normalized) peak = std::max(peak, std::abs(c));
    return max_imag <= 1e-6 * std::max(peak, 1.0);
  }
};

/// Steady-state correlator of D_a by quantum regression: X(0) = D_a rho_ss with rho_ss = 1/N is
/// propagated by the uniform-rate Liouvillian and traced against D_a. The normalised form
/// subtracts <D_a>_ss^2 = (Tr D_a)^2 / N^2 and divides by its tau = 0 value.
inline CorrelationSeries correlator_ss(const ModelConfig& config, const AmplitudeTable& table,
                                       int site, const std::vector<double>& tau, double dt,
                                       int threads = 1) {
  config.validate();
  const double gamma = config.rates.uniform_value();
  const int n = config.n_sites;
  if (site < 0 || site >= n) throw ConfigError("correlator site out of range");

  const CMatrix d = lindblad_operator_momentum(table, site);
  const CMatrix x0 = d / static_cast<double>(n);
  const cplx mean = d.trace() / static_cast<double>(n);
  const cplx at_zero = (d * d).trace() / static_cast<double>(n);
  const cplx variance = at_zero - mean * mean;
  if (std::abs(variance) < 1e-14)
    throw ModelError("D_a has vanishing steady-state variance; normalised correlator undefined");

  CorrelationSeries out;
  out.tau = tau;
  out.site = site;
  out.n_sites = n;
  out.gamma = gamma;
  out.sigma = config.sigma;
  out.period = config.clock_period();
  out.raw = propagate_expectation(config, table, x0, d, tau, dt, threads);
  out.normalized.reserve(tau.size());
  out.imag.reserve(tau.size());
  for (const cplx& c : out.raw) {
    const cplx z = (c - mean * mean) / variance;
    out.normalized.push_back(z.real());
    out.imag.push_back(z.imag());
    out.max_imag = std::max(out.max_imag, std::abs(z.imag()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral analysis
// ---------------------------------------------------------------------------

struct SpectrumSeries {
  std::vector<double> omega;  // 2 pi m / (N_t dt), m = 0..N_t-1
  std::vector<double> power;
  double dt = 0.0;
  int n_samples = 0;          // samples per segment
  int segments = 1;
};

struct PsdOptions {
  bool remove_mean = true;
  int welch_segments = 1;  // 1 = single rectangular periodogram
};

namespace detail {

inline std::vector<double> periodogram(const std::vector<double>& y, double dt, bool remove_mean) {
  const int n = static_cast<int>(y.size());
  const double mean = remove_mean ? std::accumulate(y.begin(), y.end(), 0.0) / n : 0.0;
  std::vector<cplx> in(n);
  for (int j = 0; j < n; ++j) in[j] = y[j] - mean;
  std::vector<cplx> out;
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  const double scale = dt * dt / (n * dt);
  std::vector<double> s(n);
  for (int m = 0; m < n; ++m) s[m] = scale * std::norm(out[m]);
  return s;
}

}  // namespace detail

/// S(omega) = (dt^2 / T) |sum_j y_j exp(-i omega j dt)|^2 on the DFT grid, T = N_t dt.
/// With welch_segments = K > 1 the series is cut into K half-overlapping segments whose
/// periodograms are averaged.
inline SpectrumSeries power_spectral_density(const std::vector<double>& y, double dt,
                                             const PsdOptions& options = {}) {
  if (y.size() < 8) throw ConfigError("power spectral density needs at least 8 samples");
  if (!(dt > 0.0)) throw ConfigError("sampling interval must be > 0");
  if (options.welch_segments < 1) throw ConfigError("welch_segments must be >= 1");
  const int total = static_cast<int>(y.size());
  const int k = options.welch_segments;
  const int len = k == 1 ? total : (2 * total) / (k + 1);
  if (len < 8) throw ConfigError("Welch segments shorter than 8 samples");

  SpectrumSeries s;
  s.dt = dt;
  s.n_samples = len;
  s.segments = k;
  s.power.assign(len, 0.0);
  const int stride = k == 1 ? 0 : len / 2;
  for (int seg = 0; seg < k; ++seg) {
    std::vector<double> part(y.begin() + seg * stride, y.begin() + seg * stride + len);
    const auto p = detail::periodogram(part, dt, options.remove_mean);
    for (int m = 0; m < len; ++m) s.power[m] += p[m] / k;
  }
  s.omega.resize(len);
  for (int m = 0; m < len; ++m) s.omega[m] = 2.0 * std::numbers::pi * m / (len * dt);
  return s;
}

/// Frequency of the largest S over 0 < omega <= Nyquist; smallest omega on ties.
inline double peak_frequency(const SpectrumSeries& s) {
  int best = 1;
  for (int m = 2; m <= s.n_samples / 2; ++m)
    if (s.power[m] > s.power[best]) best = m;
  return s.omega[best];
}

/// Dominant angular frequency of a uniformly sampled real series, from the mean-removed
/// periodogram zero-padded to `padding` times its length, searched over omega >= omega_min.
inline double dominant_frequency(const std::vector<double>& y, double dt, double omega_min,
                                 int padding = 8) {
  if (y.size() < 8) throw ConfigError("dominant frequency needs at least 8 samples");
  const int n = static_cast<int>(y.size());
  const int len = n * std::max(1, padding);
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  std::vector<cplx> in(len, cplx{0.0, 0.0});
  for (int j = 0; j < n; ++j) in[j] = y[j] - mean;
  std::vector<cplx> out;
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  int best = -1;
  for (int m = 1; m <= len / 2; ++m) {
    const double w = 2.0 * std::numbers::pi * m / (len * dt);
    if (w < omega_min) continue;
    if (best < 0 || std::norm(out[m]) > std::norm(out[best])) best = m;
  }
  if (best < 0) throw ConfigError("omega_min is above the Nyquist frequency");
  return 2.0 * std::numbers::pi * best / (len * dt);
}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

struct BimodalityReport {
  int left_mode = 0;
  int right_mode = 0;
  int central_bin = 0;
  double dip_ratio = 0.0;   // count[central] / mean(count[left], count[right])
  double mean_left = 0.0;   // mean of the negative values
  double mean_right = 0.0;  // mean of the positive values
};

struct Histogram {
  std::vector<double> centers;
  std::vector<long> counts;
  double lo = 0.0;
  double hi = 0.0;
  BimodalityReport bimodality;
};

/// Equal-width bins over [min, max] of the data; a degenerate range becomes [v-0.5, v+0.5].
inline Histogram histogram(const std::vector<double>& values, int bins) {
  if (values.size() < 2) throw ConfigError("histogram needs at least 2 values");
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  Histogram h;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  h.lo = *mn;
  h.hi = *mx;
  if (h.hi == h.lo) {
    h.lo -= 0.5;
    h.hi += 0.5;
  }
  const double width = (h.hi - h.lo) / bins;
  h.counts.assign(bins, 0);
  h.centers.resize(bins);
  for (int b = 0; b < bins; ++b) h.centers[b] = h.lo + (b + 0.5) * width;
  for (double v : values) {
    int b = static_cast<int>((v - h.lo) / width);
    h.counts[std::clamp(b, 0, bins - 1)]++;
  }

  auto& r = h.bimodality;
  for (int b = 1; b < bins; ++b)
    if (std::abs(h.centers[b]) < std::abs(h.centers[r.central_bin])) r.central_bin = b;
  const int z = r.central_bin;
  r.left_mode = z;
  for (int b = 0; b < z; ++b)
    if (r.left_mode == z || h.counts[b] > h.counts[r.left_mode]) r.left_mode = b;
  r.right_mode = z;
  for (int b = z + 1; b < bins; ++b)
    if (r.right_mode == z || h.counts[b] > h.counts[r.right_mode]) r.right_mode = b;
  const double mode_mean = 0.5 * static_cast<double>(h.counts[r.left_mode] + h.counts[r.right_mode]);
  r.dip_ratio = mode_mean > 0.0 ? h.counts[z] / mode_mean : std::numeric_limits<double>::infinity();

  double sl = 0.0, sr = 0.0;
  long nl = 0, nr = 0;
  for (double v : values) {
    if (v < 0.0) { sl += v; ++nl; }
    if (v > 0.0) { sr += v; ++nr; }
  }
  r.mean_left = nl ? sl / nl : 0.0;
  r.mean_right = nr ? sr / nr : 0.0;
  return h;
}

}  // namespace mclock
