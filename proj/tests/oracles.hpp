#pragma once

// Independent reference implementations used only by tests. Nothing here calls into the
// FFT or band-structured code paths of the library.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "mclock/core.hpp"

namespace oracle {

using mclock::cplx;
using mclock::CMatrix;
using mclock::CVector;
using mclock::RMatrix;
using mclock::RVector;

inline constexpr double kPi = std::numbers::pi;

inline int m_of(int j, int n) { return j - n / 2; }
inline double k_of(int j, int n) { return 2.0 * kPi * m_of(j, n) / n; }

// U(b, j) = <b|k_j> = exp(i k_j b) / sqrt(N)
inline CMatrix momentum_basis(int n) {
  CMatrix u(n, n);
  for (int b = 0; b < n; ++b)
    for (int j = 0; j < n; ++j) u(b, j) = std::polar(1.0 / std::sqrt(double(n)), k_of(j, n) * b);
  return u;
}

// Periodic Gaussian profile normalised so that sum_a h_a(b)^2 = 1, built from the minimum
// image distance rather than the two-image sum.
inline RMatrix gaussian_profiles(int n, double sigma) {
  RMatrix h(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const int d = std::abs(b - a);
      h(a, b) = std::exp(-0.5 * d * d / (sigma * sigma)) +
                std::exp(-0.5 * double(n - d) * (n - d) / (sigma * sigma));
    }
  double norm = 0.0;
  for (int a = 0; a < n; ++a) norm += h(a, 0) * h(a, 0);
  return h / std::sqrt(norm);
}

// eta(k_j) = N^{-1/2} sum_b h_0(b) exp(i k_j b), by direct summation
inline CVector eta_direct(const RMatrix& h) {
  const int n = int(h.rows());
  CVector e(n);
  for (int j = 0; j < n; ++j) {
    cplx s = 0.0;
    for (int b = 0; b < n; ++b) s += h(0, b) * std::polar(1.0, k_of(j, n) * b);
    e[j] = s / std::sqrt(double(n));
  }
  return e;
}

// D_a in the momentum basis as U^dagger diag(h_a) U
inline CMatrix lindblad_momentum(const RMatrix& h, int a) {
  const CMatrix u = momentum_basis(int(h.rows()));
  return u.adjoint() * h.row(a).transpose().cast<cplx>().asDiagonal() * u;
}

inline CMatrix hamiltonian_momentum(int n, double t_hop) {
  CMatrix hm = CMatrix::Zero(n, n);
  for (int j = 0; j < n; ++j) hm(j, j) = -2.0 * t_hop * std::cos(k_of(j, n));
  return hm;
}

// Hopping Hamiltonian written in the position basis, -t sum (|b+1><b| + h.c.)
inline CMatrix hamiltonian_position(int n, double t_hop) {
  CMatrix hm = CMatrix::Zero(n, n);
  for (int b = 0; b < n; ++b) {
    hm((b + 1) % n, b) -= t_hop;
    hm(b, (b + 1) % n) -= t_hop;
  }
  return hm;
}

// d rho/dt from explicit operators
inline CMatrix lindblad_rhs(const CMatrix& ham, const std::vector<CMatrix>& ops,
                            const std::vector<double>& rates, const CMatrix& rho) {
  const cplx i{0.0, 1.0};
  CMatrix out = -i * (ham * rho - rho * ham);
  for (std::size_t a = 0; a < ops.size(); ++a) {
    const CMatrix& l = ops[a];
    const CMatrix ldl = l.adjoint() * l;
    out += rates[a] * (l * rho * l.adjoint() - 0.5 * (ldl * rho + rho * ldl));
  }
  return out;
}

// Superoperator on row-major vec(rho): vec(A X B) = (A kron B^T) vec(X)
inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline CMatrix lindblad_superoperator(const CMatrix& ham, const std::vector<CMatrix>& ops,
                                      const std::vector<double>& rates) {
  const int n = int(ham.rows());
  const cplx i{0.0, 1.0};
  const CMatrix id = CMatrix::Identity(n, n);
  CMatrix s = -i * (kron(ham, id) - kron(id, ham.transpose()));
  for (std::size_t a = 0; a < ops.size(); ++a) {
    const CMatrix& l = ops[a];
    const CMatrix ldl = l.adjoint() * l;
    s += rates[a] * (kron(l, l.adjoint().transpose()) - 0.5 * kron(ldl, id) - 0.5 * kron(id, ldl.transpose()));
  }
  return s;
}

inline CVector vec(const CMatrix& m) {
  const int n = int(m.rows());
  CVector v(n * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) v[r * n + c] = m(r, c);
  return v;
}

inline CMatrix unvec(const CVector& v, int n) {
  CMatrix m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m(r, c) = v[r * n + c];
  return m;
}

// Classical RK4 for dx/dt = A x with a fixed step
inline RVector rk4_linear(const RMatrix& a, RVector x, double t, int steps) {
  const double h = t / steps;
  for (int s = 0; s < steps; ++s) {
    const RVector k1 = a * x;
    const RVector k2 = a * (x + 0.5 * h * k1);
    const RVector k3 = a * (x + 0.5 * h * k2);
    const RVector k4 = a * (x + h * k3);
    x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return x;
}

inline CMatrix random_density(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMatrix a(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) a(r, c) = cplx(g(rng), g(rng));
  CMatrix rho = a * a.adjoint();
  return rho / rho.trace();
}

inline CMatrix random_hermitian(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMatrix a(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) a(r, c) = cplx(g(rng), g(rng));
  return 0.5 * (a + a.adjoint());
}

inline CVector random_state(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CVector v(n);
  for (int i = 0; i < n; ++i) v[i] = cplx(g(rng), g(rng));
  return v / v.norm();
}

inline double max_abs(const CMatrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace oracle
