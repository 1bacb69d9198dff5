#pragma once

// Poisson solves for the self-consistent field.
//   1D: -phi'' = s on [a, b] with phi(a) = phi(b) = 0 (tridiagonal, second
//       order), or a mean-free periodic spectral solve.
//   2D: periodic spectral solve; E = -grad phi evaluated spectrally.

#include <unsupported/Eigen/FFT>

#include <complex>
#include <numbers>
#include <vector>

#include "vpctl/grid.hpp"

namespace vpctl {

enum class PoissonBoundary { dirichlet, periodic };

/// Green's function of -d^2/dx^2 on [a, b] with zero Dirichlet data.
template <typename Scalar>
Scalar greens_1d(Scalar x, Scalar y, Scalar a, Scalar b) {
  if (!(a < b)) throw std::domain_error("greens_1d: requires a < b");
  if (x < a || x > b || y < a || y > b) throw std::domain_error("greens_1d: x, y must lie in [a, b]");
  if (x <= y) return (x - a) * (b - y) / (b - a);
  return (y - a) * (b - x) / (b - a);
}

template <typename Scalar>
struct PotentialField {
  SpatialField<Scalar> phi;
  SpatialField<Scalar> E;
};

namespace detail {

/// Solves the (n x n) system tridiag(-1, 2, -1) u = rhs by the Thomas algorithm.
template <typename Scalar>
Vector<Scalar> solve_laplacian_tridiagonal(const Vector<Scalar>& rhs) {
  const Eigen::Index n = rhs.size();
  Vector<Scalar> c(n), d(n), u(n);
  Scalar denom = 2;
  c(0) = Scalar(-1) / denom;
  d(0) = rhs(0) / denom;
  for (Eigen::Index i = 1; i < n; ++i) {
    denom = Scalar(2) + c(i - 1);
    c(i) = Scalar(-1) / denom;
    d(i) = (rhs(i) + d(i - 1)) / denom;
  }
  u(n - 1) = d(n - 1);
  for (Eigen::Index i = n - 2; i >= 0; --i) u(i) = d(i) - c(i) * u(i + 1);
  return u;
}

/// Angular wavenumbers in FFT order for n samples on a period of length L.
template <typename Scalar>
Vector<Scalar> fft_wavenumbers(int n, Scalar length) {
  Vector<Scalar> k(n);
  const Scalar base = Scalar(2) * std::numbers::pi_v<Scalar> / length;
  for (int m = 0; m < n; ++m) k(m) = base * Scalar(m <= n / 2 ? m : m - n);
  return k;
}

/// Wavenumbers used for first derivatives: the Nyquist mode is dropped.
template <typename Scalar>
Vector<Scalar> fft_derivative_wavenumbers(int n, Scalar length) {
  Vector<Scalar> k = fft_wavenumbers(n, length);
  if (n % 2 == 0) k(n / 2) = 0;
  return k;
}

template <typename Scalar>
using ComplexMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
ComplexMatrix<Scalar> fft2(Eigen::FFT<Scalar>& fft, const Matrix<Scalar>& in) {
  const Eigen::Index n0 = in.rows(), n1 = in.cols();
  ComplexMatrix<Scalar> out(n0, n1);
  std::vector<Scalar> rbuf(n0);
  std::vector<std::complex<Scalar>> cbuf;
  for (Eigen::Index c = 0; c < n1; ++c) {
    for (Eigen::Index r = 0; r < n0; ++r) rbuf[r] = in(r, c);
    fft.fwd(cbuf, rbuf);
    for (Eigen::Index r = 0; r < n0; ++r) out(r, c) = cbuf[r];
  }
  std::vector<std::complex<Scalar>> src(n1), dst;
  for (Eigen::Index r = 0; r < n0; ++r) {
    for (Eigen::Index c = 0; c < n1; ++c) src[c] = out(r, c);
    fft.fwd(dst, src);
    for (Eigen::Index c = 0; c < n1; ++c) out(r, c) = dst[c];
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> ifft2_real(Eigen::FFT<Scalar>& fft, ComplexMatrix<Scalar> in) {
  const Eigen::Index n0 = in.rows(), n1 = in.cols();
  std::vector<std::complex<Scalar>> src(n1), dst;
  for (Eigen::Index r = 0; r < n0; ++r) {
    for (Eigen::Index c = 0; c < n1; ++c) src[c] = in(r, c);
    fft.inv(dst, src);
    for (Eigen::Index c = 0; c < n1; ++c) in(r, c) = dst[c];
  }
  Matrix<Scalar> out(n0, n1);
  src.resize(n0);
  for (Eigen::Index c = 0; c < n1; ++c) {
    for (Eigen::Index r = 0; r < n0; ++r) src[r] = in(r, c);
    fft.inv(dst, src);
    for (Eigen::Index r = 0; r < n0; ++r) out(r, c) = dst[r].real();
  }
  return out;
}

}  // namespace detail

/// -phi'' = source with phi = 0 at both ends of [x_min, x_max]; E = -phi'
/// by central differences (one-sided second order at x_min). Node x_max is
/// not stored: it is the periodic image of x_min and carries phi = 0.
template <typename Scalar>
PotentialField<Scalar> solve_field_1d(const SpatialField<Scalar>& source) {
  const auto& g = source.grid;
  if (g.dim() != 1) throw UsageError("solve_field_1d: grid must be 1D");
  const int nx = g.nx();
  const Scalar dx = g.dx();
  Vector<Scalar> rhs = source.values.col(0).segment(1, nx - 1) * (dx * dx);
  Vector<Scalar> phi = Vector<Scalar>::Zero(nx + 1);
  phi.segment(1, nx - 1) = detail::solve_laplacian_tridiagonal(rhs);

  Vector<Scalar> E(nx);
  const Scalar inv2dx = Scalar(1) / (Scalar(2) * dx);
  E(0) = -(-Scalar(3) * phi(0) + Scalar(4) * phi(1) - phi(2)) * inv2dx;
  for (int i = 1; i < nx; ++i) E(i) = -(phi(i + 1) - phi(i - 1)) * inv2dx;
  return {SpatialField<Scalar>(g, Matrix<Scalar>(phi.head(nx))), SpatialField<Scalar>(g, Matrix<Scalar>(E))};
}

/// Mean-free periodic spectral solve in 1D (sensitivity option).
template <typename Scalar>
PotentialField<Scalar> solve_field_1d_periodic(const SpatialField<Scalar>& source) {
  const auto& g = source.grid;
  if (g.dim() != 1) throw UsageError("solve_field_1d_periodic: grid must be 1D");
  const int nx = g.nx();
  Eigen::FFT<Scalar> fft;
  std::vector<Scalar> s(source.values.data(), source.values.data() + nx);
  std::vector<std::complex<Scalar>> sh;
  fft.fwd(sh, s);
  const Vector<Scalar> k = detail::fft_wavenumbers(nx, g.length());
  const Vector<Scalar> kd = detail::fft_derivative_wavenumbers(nx, g.length());
  std::vector<std::complex<Scalar>> ph(nx), eh(nx);
  const std::complex<Scalar> I(0, 1);
  for (int m = 0; m < nx; ++m) {
    ph[m] = m == 0 ? std::complex<Scalar>(0) : sh[m] / (k(m) * k(m));
    eh[m] = -I * kd(m) * ph[m];
  }
  std::vector<std::complex<Scalar>> pc, ec;
  fft.inv(pc, ph);
  fft.inv(ec, eh);
  Matrix<Scalar> phi(nx, 1), E(nx, 1);
  for (int m = 0; m < nx; ++m) {
    phi(m, 0) = pc[m].real();
    E(m, 0) = ec[m].real();
  }
  return {SpatialField<Scalar>(g, std::move(phi)), SpatialField<Scalar>(g, std::move(E))};
}

/// -Laplace phi = source - mean(source) on the periodic square; returns
/// E = -grad phi with two components and zero mean.
template <typename Scalar>
SpatialField<Scalar> solve_field_2d_periodic(const SpatialField<Scalar>& source) {
  const auto& g = source.grid;
  if (g.dim() != 2) throw UsageError("solve_field_2d_periodic: grid must be 2D");
  const int n = g.nx();
  Eigen::FFT<Scalar> fft;
  const Matrix<Scalar> s = Eigen::Map<const Matrix<Scalar>>(source.values.data(), n, n);
  detail::ComplexMatrix<Scalar> sh = detail::fft2(fft, s);
  const Vector<Scalar> k = detail::fft_wavenumbers(n, g.length());
  const Vector<Scalar> kd = detail::fft_derivative_wavenumbers(n, g.length());
  detail::ComplexMatrix<Scalar> ex(n, n), ey(n, n);
  const std::complex<Scalar> I(0, 1);
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const Scalar k2 = k(ix) * k(ix) + k(iy) * k(iy);
      const std::complex<Scalar> ph = (ix == 0 && iy == 0) ? std::complex<Scalar>(0) : sh(ix, iy) / k2;
      ex(ix, iy) = -I * kd(ix) * ph;
      ey(ix, iy) = -I * kd(iy) * ph;
    }
  }
  SpatialField<Scalar> E(g, 2);
  Eigen::Map<Matrix<Scalar>>(E.values.col(0).data(), n, n) = detail::ifft2_real(fft, std::move(ex));
  Eigen::Map<Matrix<Scalar>>(E.values.col(1).data(), n, n) = detail::ifft2_real(fft, std::move(ey));
  return E;
}

/// Dispatches to the configured Poisson path for a grid and returns E.
template <typename Scalar>
class FieldSolver {
 public:
  explicit FieldSolver(PoissonBoundary bc_1d = PoissonBoundary::dirichlet) : bc_1d_(bc_1d) {}

  PoissonBoundary boundary_1d() const { return bc_1d_; }

  SpatialField<Scalar> electric_field(const SpatialField<Scalar>& source) const {
    if (source.grid.dim() == 2) return solve_field_2d_periodic(source);
    if (bc_1d_ == PoissonBoundary::periodic) return solve_field_1d_periodic(source).E;
    return solve_field_1d(source).E;
  }

 private:
  PoissonBoundary bc_1d_;
};

}  // namespace vpctl
