#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/FFT>

#include "mclock/core.hpp"

namespace mclock {

/// Quasi-momentum grid of a ring with N sites and unit lattice constant.
///
/// Storage index j maps to m = j - N/2 (integer division) and k_j = 2*pi*m/N,
/// so even N covers m in [-N/2, N/2-1] and odd N covers [-(N-1)/2, (N-1)/2].
class MomentumGrid {
 public:
  explicit MomentumGrid(int n_sites) : n_(n_sites), offset_(n_sites / 2) {
    if (n_sites < 1) throw ConfigError("momentum grid needs at least one site");
  }

  int size() const { return n_; }
  int offset() const { return offset_; }
  int m_min() const { return -offset_; }
  int m_max() const { return n_ - 1 - offset_; }

  int m(int j) const { return j - offset_; }
  double k(int j) const { return 2.0 * std::numbers::pi * m(j) / n_; }

  int wrap(int j) const { return ((j % n_) + n_) % n_; }

  int index_of_m(int m) const {
    if (m < m_min() || m > m_max())
      throw ConfigError("quasi-momentum index m=" + std::to_string(m) + " outside [" +
                        std::to_string(m_min()) + ", " + std::to_string(m_max()) + "]");
    return m + offset_;
  }

  /// Grid index of k; throws if k is not within 1e-9 of an allowed value.
  int index_of(double k) const {
    const double x = k * n_ / (2.0 * std::numbers::pi);
    const double r = std::round(x);
    if (std::abs(x - r) > 1e-9 || r < m_min() || r > m_max())
      throw ConfigError("k=" + std::to_string(k) + " is not on the quasi-momentum grid");
    return static_cast<int>(r) + offset_;
  }

  /// Index d in [0, N) of the difference k_j - k_jp, read as q_d = 2*pi*d/N.
  int difference(int j, int jp) const { return wrap(j - jp); }

 private:
  int n_;
  int offset_;
};

/// Unitary change between position and quasi-momentum amplitudes.
///
///   <b|k> = exp(+i k b) / sqrt(N),   b = 0..N-1
///   psi_k = N^{-1/2} sum_b exp(-i k b) psi_b
///   psi_b = N^{-1/2} sum_k exp(+i k b) psi_k
///
/// Owns an FFT plan cache, so an instance must not be shared between threads.
class BasisTransform {
 public:
  explicit BasisTransform(int n_sites) : grid_(n_sites), twist_(n_sites), work_(n_sites) {
    const double scale = 2.0 * std::numbers::pi * grid_.offset() / n_sites;
    for (int b = 0; b < n_sites; ++b) twist_[b] = std::polar(1.0, scale * b);
  }

  int size() const { return grid_.size(); }
  const MomentumGrid& grid() const { return grid_; }

  CVector to_momentum(const CVector& position) {
    check_size(position);
    work_ = position.cwiseProduct(twist_);
    CVector out(size());
    fft_.fwd(out, work_);
    out /= std::sqrt(static_cast<double>(size()));
    return out;
  }

  CVector to_position(const CVector& momentum) {
    check_size(momentum);
    CVector out(size());
    fft_.inv(out, momentum);
    out = out.cwiseProduct(twist_.conjugate()) * std::sqrt(static_cast<double>(size()));
    return out;
  }

 private:
  void check_size(const CVector& v) const {
    if (v.size() != size())
      throw std::invalid_argument("basis transform: vector length " + std::to_string(v.size()) +
                                  " does not match N=" + std::to_string(size()));
  }

  MomentumGrid grid_;
  CVector twist_;
  CVector work_;
  Eigen::FFT<double> fft_;
};

/// Circular convolution with a fixed real kernel, w_j = sum_i K[(j - i) mod N] v_i.
class CircularConvolution {
 public:
  explicit CircularConvolution(const RVector& kernel)
      : n_(static_cast<int>(kernel.size())), spectrum_(kernel.size()), work_(kernel.size()) {
    CVector k = kernel.cast<cplx>();
    fft_.fwd(spectrum_, k);
  }

  int size() const { return n_; }

  /// Unnormalised DFT of the kernel, sum_d K[d] exp(-2 pi i m d / N).
  const CVector& spectrum() const { return spectrum_; }

  void apply(const CVector& v, CVector& out) {
    fft_.fwd(work_, v);
    work_ = work_.cwiseProduct(spectrum_);
    fft_.inv(out, work_);
  }

  CVector apply(const CVector& v) {
    CVector out(n_);
    apply(v, out);
    return out;
  }

 private:
  int n_;
  CVector spectrum_;
  CVector work_;
  Eigen::FFT<double> fft_;
};

}  // namespace mclock
