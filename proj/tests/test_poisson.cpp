#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>
#include <random>

#include "vpctl/poisson.hpp"

using namespace vpctl;
using Grid = PhaseGrid<double>;
using SField = SpatialField<double>;

namespace {

constexpr double kPi = std::numbers::pi;

SField spatial(const Grid& g, const std::function<double(double)>& fn) {
  SField s(g, 1);
  for (int i = 0; i < g.nx(); ++i) s.values(i, 0) = fn(g.x(i));
  return s;
}

double manufactured_error(int nx) {
  const Grid g = Grid::standard(1, nx, 8);
  const auto sol = solve_field_1d(spatial(g, [](double x) { return std::sin(x / 5); }));
  double e = 0;
  for (int i = 0; i < nx; ++i) {
    e = std::max(e, std::abs(sol.phi.values(i, 0) - 25 * std::sin(g.x(i) / 5)));
    e = std::max(e, std::abs(sol.E.values(i, 0) + 5 * std::cos(g.x(i) / 5)));
  }
  return e;
}

}  // namespace

TEST_CASE("greens_1d examples") {
  CHECK(greens_1d(0.5, 0.5, 0.0, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 5.0);
  for (int k = 0; k < 50; ++k) {
    const double y = u(rng), x = u(rng);
    CHECK(greens_1d(-2.0, y, -2.0, 5.0) == 0.0);
    CHECK(greens_1d(x, y, -2.0, 5.0) == doctest::Approx(greens_1d(y, x, -2.0, 5.0)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(greens_1d(2.0, 0.5, 0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(greens_1d(0.5, 0.5, 1.0, 1.0), std::domain_error);
}

TEST_CASE("1D Dirichlet solve: zero source") {
  const Grid g = Grid::standard(1, 50, 8);
  const auto sol = solve_field_1d(SField(g, 1));
  CHECK(sol.phi.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sol.E.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("1D Dirichlet solve is second order on the manufactured solution") {
  const double ratio = manufactured_error(100) / manufactured_error(200);
  CHECK(ratio >= 3.5);
  CHECK(ratio <= 4.5);
}

TEST_CASE("1D Dirichlet solve matches a dense linear solve") {
  const int nx = 40;
  const Grid g = Grid::standard(1, nx, 8);
  // cos(x/5) minus its boundary value makes a source compatible with phi = 0 at both ends.
  const SField src = spatial(g, [](double x) { return std::cos(x / 5) - 1.0 + 0.3 * std::sin(2 * x / 5); });
  const auto sol = solve_field_1d(src);

  const int n = nx - 1;
  const double dx = g.dx();
  Matrix<double> A = Matrix<double>::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    A(i, i) = 2 / (dx * dx);
    if (i > 0) A(i, i - 1) = -1 / (dx * dx);
    if (i + 1 < n) A(i, i + 1) = -1 / (dx * dx);
  }
  const Vector<double> rhs = src.values.col(0).segment(1, n);
  const Vector<double> phi = A.fullPivLu().solve(rhs);
  const double rel = (sol.phi.values.col(0).segment(1, n) - phi).norm() / phi.norm();
  CHECK(rel < 1e-12);
  CHECK(sol.phi.values(0, 0) == 0.0);
}

TEST_CASE("1D Dirichlet solve is linear") {
  const Grid g = Grid::standard(1, 32, 8);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  SField a(g, 1), b(g, 1);
  for (int i = 0; i < 32; ++i) {
    a.values(i, 0) = n(rng);
    b.values(i, 0) = n(rng);
  }
  const SField c(g, Matrix<double>(2.5 * a.values - 0.7 * b.values));
  const Matrix<double> lhs = solve_field_1d(c).E.values;
  const Matrix<double> rhs = 2.5 * solve_field_1d(a).E.values - 0.7 * solve_field_1d(b).E.values;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10 * rhs.cwiseAbs().maxCoeff());
}

TEST_CASE("periodic 1D spectral solve is exact on a single mode") {
  const Grid g = Grid::standard(1, 64, 8);
  const auto sol = solve_field_1d_periodic(spatial(g, [](double x) { return std::cos(2 * x / 5) + 0.4; }));
  for (int i = 0; i < 64; ++i) {
    CHECK(sol.phi.values(i, 0) == doctest::Approx(6.25 * std::cos(2 * g.x(i) / 5)).epsilon(1e-12));
    CHECK(std::abs(sol.E.values(i, 0) - 2.5 * std::sin(2 * g.x(i) / 5)) < 1e-12);
  }
}

TEST_CASE("Dirichlet and periodic E converge to each other for a Dirichlet-compatible source") {
  // sin(x/5) has a potential vanishing at both ends, so both paths approximate the same E;
  // the periodic path is exact and the finite-difference path is second order.
  auto gap = [](int nx) {
    const Grid g = Grid::standard(1, nx, 8);
    const SField s = spatial(g, [](double x) { return std::sin(x / 5); });
    return (solve_field_1d(s).E.values - solve_field_1d_periodic(s).E.values).cwiseAbs().maxCoeff();
  };
  const double coarse = gap(200), fine = gap(400);
  CHECK(coarse < 5e-3);
  CHECK(coarse / fine > 3.5);
  CHECK(coarse / fine < 4.5);
}

TEST_CASE("2D periodic spectral solve") {
  const Grid g = Grid::standard(2, 24, 4);
  SField s(g, 1);
  for (Eigen::Index k = 0; k < g.spatial_size(); ++k) {
    const auto ij = g.spatial_index(k);
    s.values(k, 0) = std::sin(g.x(ij[0]) / 5) * std::cos(g.x(ij[1]) / 5);
  }
  SUBCASE("zero source") { CHECK(solve_field_2d_periodic(SField(g, 1)).values.cwiseAbs().maxCoeff() == 0.0); }
  SUBCASE("manufactured eigenfunction") {
    const SField E = solve_field_2d_periodic(s);
    REQUIRE(E.components() == 2);
    double err = 0;
    for (Eigen::Index k = 0; k < g.spatial_size(); ++k) {
      const auto ij = g.spatial_index(k);
      const double x = g.x(ij[0]), y = g.x(ij[1]);
      // phi = 12.5 sin(x/5) cos(y/5); E = -grad phi
      err = std::max(err, std::abs(E.values(k, 0) + 2.5 * std::cos(x / 5) * std::cos(y / 5)));
      err = std::max(err, std::abs(E.values(k, 1) - 2.5 * std::sin(x / 5) * std::sin(y / 5)));
    }
    CHECK(err < 1e-10);
    CHECK(std::abs(E.values.col(0).mean()) < 1e-13);
    CHECK(std::abs(E.values.col(1).mean()) < 1e-13);
  }
  SUBCASE("nonzero mean is projected out") {
    SField shifted = s;
    shifted.values.array() += 0.7;
    CHECK((solve_field_2d_periodic(shifted).values - solve_field_2d_periodic(s).values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("spectral divergence of E recovers the source") {
    SField band = s;
    for (Eigen::Index k = 0; k < g.spatial_size(); ++k) {
      const auto ij = g.spatial_index(k);
      band.values(k, 0) += 0.3 * std::cos(3 * g.x(ij[0]) / 5 + 2 * g.x(ij[1]) / 5);
    }
    const SField E = solve_field_2d_periodic(band);
    // d/dx of each component through the same FFT machinery
    const int n = g.nx();
    Eigen::FFT<double> fft;
    const Vector<double> kd = detail::fft_derivative_wavenumbers(n, g.length());
    auto deriv = [&](const Vector<double>& col, int axis) {
      const Matrix<double> m = Eigen::Map<const Matrix<double>>(col.data(), n, n);
      detail::ComplexMatrix<double> h = detail::fft2(fft, m);
      for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) h(ix, iy) *= std::complex<double>(0, axis == 0 ? kd(ix) : kd(iy));
      return detail::ifft2_real(fft, h);
    };
    const Matrix<double> div = deriv(E.values.col(0), 0) + deriv(E.values.col(1), 1);
    const Matrix<double> src = Eigen::Map<const Matrix<double>>(band.values.data(), n, n);
    CHECK((div - src).cwiseAbs().maxCoeff() < 1e-10 * src.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("FieldSolver dispatch") {
  const Grid g1 = Grid::standard(1, 32, 8);
  const SField s = spatial(g1, [](double x) { return std::sin(x / 5); });
  CHECK(FieldSolver<double>().electric_field(s).values == solve_field_1d(s).E.values);
  CHECK(FieldSolver<double>(PoissonBoundary::periodic).electric_field(s).values == solve_field_1d_periodic(s).E.values);
  CHECK_THROWS_AS(solve_field_2d_periodic(s), UsageError);
}
