#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "mclock/core.hpp"
#include "mclock/fourier.hpp"

namespace mclock {

/// Measurement rates gamma_a, either one value for every site or one per site.
class Rates {
 public:
  static Rates uniform(double gamma) { return Rates(gamma, {}); }
  static Rates per_site(std::vector<double> gammas) { return Rates(0.0, std::move(gammas)); }

  bool is_uniform() const { return per_site_.empty(); }

  /// Uniform rate; throws for per-site rates.
  double uniform_value() const {
    if (!is_uniform()) throw ConfigError("operation requires uniform measurement rates");
    return uniform_;
  }

  double at(int site) const { return is_uniform() ? uniform_ : per_site_.at(site); }
  const std::vector<double>& per_site_values() const { return per_site_; }

  double max_value() const {
    return is_uniform() ? uniform_ : *std::max_element(per_site_.begin(), per_site_.end());
  }

  bool operator==(const Rates&) const = default;

 private:
  Rates(double u, std::vector<double> p) : uniform_(u), per_site_(std::move(p)) {}
  double uniform_ = 0.0;
  std::vector<double> per_site_;
};

/// Parameters of one ring. Sites are 0-based in code and 1-based in anything a user reads.
struct ModelConfig {
  int n_sites = 0;
  double t_hop = 1.0;
  double sigma = 1.0;
  Rates rates = Rates::uniform(1.0);

  void validate() const {
    if (n_sites < 4) throw ConfigError("N must be >= 4, got " + std::to_string(n_sites));
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be > 0");
    if (!std::isfinite(t_hop)) throw ConfigError("t_hop must be finite");
    if (!rates.is_uniform() && static_cast<int>(rates.per_site_values().size()) != n_sites)
      throw ConfigError("per-site rates need exactly N=" + std::to_string(n_sites) + " values");
    if (rates.is_uniform()) {
      if (!(rates.uniform_value() >= 0.0) || !std::isfinite(rates.uniform_value()))
        throw ConfigError("gamma must be >= 0");
    } else {
      for (double g : rates.per_site_values())
        if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("every gamma_a must be >= 0");
    }
  }

  /// Lap time at the maximal group velocity 2 t_hop.
  double clock_period() const { return n_sites / (2.0 * t_hop); }

  bool operator==(const ModelConfig&) const = default;
};

/// Precomputed Gaussian measurement profiles and their spectra.
struct AmplitudeTable {
  int n_sites = 0;
  double sigma = 0.0;
  double norm_constant = 0.0;  // N_h
  RMatrix h;                   // h(a, b) = h_a(b)
  RVector eta;                 // eta(k_j) on the grid order of MomentumGrid
  RVector eta_by_difference;   // eta(2 pi d / N), d = 0..N-1
  RVector eta2;                // eta(k_j)^2, grid order
  RVector h4sum;               // sum_b h_a(b)^4 per site
  std::vector<std::string> warnings;

  /// eta^2 indexed by momentum difference; the kernel of the diagonal-sector generator.
  RVector kernel() const { return eta_by_difference.array().square().matrix(); }
};

/// Tight-binding band energy eps_k = -2 t_hop cos k.
inline double dispersion(const ModelConfig& config, double k) {
  MomentumGrid(config.n_sites).index_of(k);
  return -2.0 * config.t_hop * std::cos(k);
}

/// Band energies in grid order.
inline RVector band_energies(const ModelConfig& config) {
  const MomentumGrid grid(config.n_sites);
  RVector e(config.n_sites);
  for (int j = 0; j < config.n_sites; ++j) e[j] = -2.0 * config.t_hop * std::cos(grid.k(j));
  return e;
}

/// Free propagator exp(-i eps_k dt) in grid order.
inline CVector hamiltonian_phases(const ModelConfig& config, double dt) {
  const RVector e = band_energies(config);
  CVector out(e.size());
  for (Eigen::Index j = 0; j < e.size(); ++j) out[j] = std::polar(1.0, -e[j] * dt);
  return out;
}

namespace detail {

// Two-image Gaussian; d is the signed site separation b - a in (-N, N).
inline double gaussian_profile(int d, int n, double sigma) {
  const double near = static_cast<double>(d) / sigma;
  const double far = static_cast<double>(n - std::abs(d)) / sigma;
  return std::exp(-0.5 * near * near) + std::exp(-0.5 * far * far);
}

}  // namespace detail

inline AmplitudeTable build_amplitude_table(const ModelConfig& config) {
  config.validate();
  const int n = config.n_sites;
  AmplitudeTable t;
  t.n_sites = n;
  t.sigma = config.sigma;
  if (config.sigma > 0.25 * n)
    t.warnings.push_back("sigma=" + std::to_string(config.sigma) + " exceeds N/4; the two-image "
                         "Gaussian no longer approximates a periodic profile");

  RMatrix raw(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) raw(a, b) = detail::gaussian_profile(b - a, n, config.sigma);

  // N_h = sum_a raw_a(b)^2 must be the same for every b.
  const RVector column_norms = raw.array().square().colwise().sum().transpose();
  t.norm_constant = column_norms[0];
  if ((column_norms.array() - t.norm_constant).abs().maxCoeff() > 1e-12 * t.norm_constant)
    throw NumericalError("amplitude normalisation depends on b; profile is not translation invariant");
  t.h = raw / std::sqrt(t.norm_constant);

  // eta(q) = N^{-1/2} sum_b h_0(b) exp(+i q b)
  const MomentumGrid grid(n);
  t.eta.resize(n);
  t.eta_by_difference.resize(n);
  double max_imag = 0.0;
  for (int j = 0; j < n; ++j) {
    cplx s{0.0, 0.0};
    for (int b = 0; b < n; ++b) s += t.h(0, b) * std::polar(1.0, grid.k(j) * b);
    s /= std::sqrt(static_cast<double>(n));
    max_imag = std::max(max_imag, std::abs(s.imag()));
    t.eta[j] = s.real();
  }
  if (max_imag > 1e-10)
    throw NumericalError("Fourier transform of the amplitude profile is not real (|Im| = " +
                         std::to_string(max_imag) + ")");
  for (int d = 0; d < n; ++d) t.eta_by_difference[d] = t.eta[grid.wrap(d + grid.offset())];
  t.eta2 = t.eta.array().square();
  t.h4sum = t.h.array().pow(4).rowwise().sum();
  return t;
}

/// Normalised single-particle state with its basis tag.
struct PureState {
  CVector amps;
  Basis basis = Basis::momentum;
  double time = 0.0;

  int size() const { return static_cast<int>(amps.size()); }
  double norm() const { return amps.norm(); }
  void normalize() { amps /= amps.norm(); }

  static PureState momentum_eigenstate(int n_sites, int m) {
    const MomentumGrid grid(n_sites);
    PureState s{CVector::Zero(n_sites), Basis::momentum, 0.0};
    s.amps[grid.index_of_m(m)] = 1.0;
    return s;
  }

  /// site is 0-based.
  static PureState position_eigenstate(int n_sites, int site) {
    if (site < 0 || site >= n_sites) throw ConfigError("site index out of range");
    PureState s{CVector::Zero(n_sites), Basis::position, 0.0};
    s.amps[site] = 1.0;
    return s;
  }

  static PureState uniform_superposition(int n_sites) {
    return {CVector::Constant(n_sites, 1.0 / std::sqrt(static_cast<double>(n_sites))),
            Basis::position, 0.0};
  }
};

inline PureState in_basis(const PureState& psi, Basis target, BasisTransform& xf) {
  if (psi.basis == target) return psi;
  PureState out{target == Basis::momentum ? xf.to_momentum(psi.amps) : xf.to_position(psi.amps),
                target, psi.time};
  return out;
}

inline PureState in_basis(const PureState& psi, Basis target) {
  if (psi.basis == target) return psi;
  BasisTransform xf(psi.size());
  return in_basis(psi, target, xf);
}

/// D_a psi, unnormalised. The result's squared norm is the jump weight ||D_a psi||^2.
/// `out` selects the basis of the returned amplitudes; by default the input basis is kept.
inline PureState apply_D(const AmplitudeTable& table, int site, const PureState& psi,
                         BasisTransform& xf, std::optional<Basis> out = std::nullopt) {
  if (site < 0 || site >= table.n_sites) throw ConfigError("site index out of range");
  PureState pos = in_basis(psi, Basis::position, xf);
  pos.amps = pos.amps.cwiseProduct(table.h.row(site).transpose().cast<cplx>());
  return in_basis(pos, out.value_or(psi.basis), xf);
}

inline PureState apply_D(const AmplitudeTable& table, int site, const PureState& psi,
                         std::optional<Basis> out = std::nullopt) {
  BasisTransform xf(table.n_sites);
  return apply_D(table, site, psi, xf, out);
}

/// D_a as a dense matrix in the quasi-momentum basis,
/// <k|D_a|k'> = N^{-1/2} eta(k - k') exp(-i a (k - k')).
inline CMatrix lindblad_operator_momentum(const AmplitudeTable& table, int site) {
  const int n = table.n_sites;
  const MomentumGrid grid(n);
  CMatrix d(n, n);
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < n; ++j)
    for (int jp = 0; jp < n; ++jp) {
      const int diff = grid.difference(j, jp);
      const double q = 2.0 * std::numbers::pi * diff / n;
      d(j, jp) = inv_sqrt_n * table.eta_by_difference[diff] * std::polar(1.0, -q * site);
    }
  return d;
}

}  // namespace mclock
