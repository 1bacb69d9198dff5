#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>
#include <random>

#include "oracles.hpp"
#include "vpctl/equilibria.hpp"

using namespace vpctl;
using Grid = PhaseGrid<double>;
using Field = DistributionField<double>;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_CASE("two-stream equilibrium values") {
  const EquilibriumSpec ts = EquilibriumSpec::two_stream();
  // exp(-2.88) / sqrt(2 pi), computed directly
  CHECK(equilibrium_value(ts, 0.0) == doctest::Approx(0.0223945302948429).epsilon(1e-13));
  CHECK(equilibrium_value(ts, 0.0) == doctest::Approx(std::exp(-2.4 * 2.4 / 2) / std::sqrt(2 * kPi)).epsilon(1e-14));
  const Grid g = Grid::standard(1, 8, 200);
  const Field f = equilibrium(ts, g);
  for (int j = 0; j < 200; ++j) {
    CHECK(f.values(0, j) == doctest::Approx(f.values(0, 199 - j)).epsilon(1e-13));
    CHECK(f.values(0, j) == doctest::Approx(oracle::two_stream(g.v(j))).epsilon(1e-13));
  }
  // spatially uniform
  CHECK((f.values.rowwise() - f.values.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bump-on-tail equilibrium values") {
  const EquilibriumSpec bt = EquilibriumSpec::bump_on_tail();
  const double bump = 0.1 / std::sqrt(kPi / 2);
  CHECK(bump == doctest::Approx(0.07978845608028655).epsilon(1e-14));
  const double tail = 0.9 * std::exp(-5.5 * 5.5 / 2) / std::sqrt(2 * kPi);
  CHECK(equilibrium_value(bt, 3.5) == doctest::Approx(bump + tail).epsilon(1e-14));
  CHECK(equilibrium_value(bt, 1.3) == doctest::Approx(oracle::bump_on_tail(1.3)).epsilon(1e-14));
  // d/dv of the bump vanishes at its centre
  const double first_only = -0.9 * (3.5 + 2.0) * std::exp(-5.5 * 5.5 / 2) / std::sqrt(2 * kPi);
  CHECK(equilibrium_derivative(bt, 3.5) == doctest::Approx(first_only).epsilon(1e-13));
}

TEST_CASE("equilibrium derivatives") {
  const EquilibriumSpec ts = EquilibriumSpec::two_stream();
  CHECK(equilibrium_derivative(ts, 0.0) == 0.0);
  for (double v : {0.3, 1.7, 2.4, 5.1})
    CHECK(equilibrium_derivative(ts, v) == doctest::Approx(-equilibrium_derivative(ts, -v)).epsilon(1e-14));
  for (double v : {-3.0, -0.4, 0.9, 3.6}) {
    for (const auto& spec : {EquilibriumSpec::two_stream(), EquilibriumSpec::bump_on_tail()}) {
      const double fd = oracle::central_difference([&](double u) { return equilibrium_value(spec, u); }, v, 1e-5);
      CHECK(equilibrium_derivative(spec, v) == doctest::Approx(fd).epsilon(1e-8));
    }
  }
  // 2D partial derivatives
  const EquilibriumSpec s2 = EquilibriumSpec::two_stream_2d();
  for (auto [a, b] : {std::pair{0.5, -1.0}, std::pair{2.2, 1.9}}) {
    const double fx = oracle::central_difference([&](double u) { return equilibrium_value_2d(s2, u, b); }, a, 1e-5);
    const double fy = oracle::central_difference([&](double u) { return equilibrium_value_2d(s2, a, u); }, b, 1e-5);
    CHECK(equilibrium_derivative_2d(s2, a, b, 0) == doctest::Approx(fx).epsilon(1e-8));
    CHECK(equilibrium_derivative_2d(s2, a, b, 1) == doctest::Approx(fy).epsilon(1e-8));
  }
}

TEST_CASE("nodal derivative field matches ddv to second order") {
  auto err = [](int nv) {
    const Grid g = Grid::standard(1, 4, nv);
    const EquilibriumSpec s = EquilibriumSpec::bump_on_tail();
    return (equilibrium_dv(s, g).values - ddv(equilibrium(s, g)).values).cwiseAbs().maxCoeff();
  };
  const double r = err(400) / err(800);
  CHECK(r > 3.5);
  CHECK(r < 4.5);
}

TEST_CASE("equilibria have unit density") {
  const Grid g = Grid::standard(1, 4, 200);
  for (const auto& spec : {EquilibriumSpec::two_stream(), EquilibriumSpec::bump_on_tail()})
    CHECK((integrate_v(equilibrium(spec, g)).values.array() - 1.0).abs().maxCoeff() < 1e-6);
  const Grid g2 = Grid::standard(2, 4, 120);
  CHECK((integrate_v(equilibrium(EquilibriumSpec::two_stream_2d(), g2)).values.array() - 1.0).abs().maxCoeff() < 1e-6);
}

TEST_CASE("equilibrium spec validation") {
  EquilibriumSpec bad = EquilibriumSpec::bump_on_tail();
  bad.w1 = 0.8;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(equilibrium_kind_from_string("three_stream"), ConfigError);
  CHECK_THROWS_AS(equilibrium(EquilibriumSpec::two_stream_2d(), Grid::standard(1, 8, 8)), ConfigError);
}

TEST_CASE("initial conditions") {
  const Grid g = Grid::standard(1, 100, 64);
  const EquilibriumSpec ts = EquilibriumSpec::two_stream();
  const Field fbar = equilibrium(ts, g);
  SUBCASE("two-stream default at cos = 1") {
    const Field f0 = initial_condition(InitialPreset::two_stream_default, g);
    for (int j = 0; j < 64; ++j) CHECK(f0.values(0, j) == doctest::Approx(1.001 * fbar.values(0, j)).epsilon(1e-15));
  }
  SUBCASE("eps = 0 reproduces the equilibrium") {
    for (auto p : {InitialPreset::two_stream_default, InitialPreset::two_stream_alt})
      CHECK(initial_condition(p, ts, g, 0.0).values == fbar.values);
  }
  SUBCASE("alternate state") {
    const Field f0 = initial_condition(InitialPreset::two_stream_alt, g);
    const int i = 17;
    const double x = g.x(i);
    CHECK(f0.values(i, 20) ==
          doctest::Approx((1 - 1e-3 * std::sin(x / 5) + 2e-3 * std::cos(2 * x / 5)) * fbar.values(i, 20)).epsilon(1e-14));
  }
  SUBCASE("bump-on-tail perturbation is localised near the bump and proportional to sin(x/5)") {
    const EquilibriumSpec bt = EquilibriumSpec::bump_on_tail();
    const Field df(g, Matrix<double>(initial_condition(InitialPreset::bump_on_tail_default, g).values -
                                     equilibrium(bt, g).values));
    for (int j = 0; j < 64; ++j) {
      if (std::abs(g.v(j) - 3.5) > 3.0) CHECK(df.values.col(j).cwiseAbs().maxCoeff() < 1e-10);
    }
    const int jb = int(std::lround((3.5 + 8.0) / g.dv()));
    for (int i = 0; i < 100; ++i)
      CHECK(std::abs(df.values(i, jb) - df.values(25, jb) * std::sin(g.x(i) / 5)) < 1e-12 * std::abs(df.values(25, jb)));
    const double peak = 3e-3 * 0.1 / std::sqrt(2 * kPi * 0.25);
    CHECK(df.values.cwiseAbs().maxCoeff() <= peak * (1 + 1e-12));
  }
  SUBCASE("2D default") {
    const Grid g2 = Grid::standard(2, 8, 6);
    const Field f0 = initial_condition(InitialPreset::two_stream_2d_default, g2);
    const Field fb = equilibrium(EquilibriumSpec::two_stream_2d(), g2);
    const Eigen::Index s = 3 + 8 * 5;
    const double m = 1 + 1e-2 * std::sin(g2.x(3) / 5) * std::cos(g2.x(5) / 5);
    CHECK((f0.values.row(s) - m * fb.values.row(s)).cwiseAbs().maxCoeff() < 1e-16);
  }
  CHECK_THROWS_AS(initial_preset_from_string("nope"), ConfigError);
}

TEST_CASE("Hermite functions") {
  CHECK(hermite_fn(0, 0.0) == doctest::Approx(0.6316187777460647).epsilon(1e-14));
  CHECK(hermite_fn(0, 0.0) == doctest::Approx(std::pow(2 * kPi, -0.25)).epsilon(1e-14));
  CHECK(hermite_fn(1, 0.0) == 0.0);
  // He_3(v) = v^3 - 3v
  const double v = 1.3;
  const double norm3 = std::sqrt(std::sqrt(2 * kPi) * 6.0);
  CHECK(hermite_fn(3, v) == doctest::Approx((v * v * v - 3 * v) * std::exp(-v * v / 4) / norm3).epsilon(1e-14));

  const Grid g = Grid::standard(1, 4, 200);
  const Vector<double> w = velocity_weights(g);
  double worst = 0;
  for (int m = 0; m <= 5; ++m)
    for (int n = 0; n <= 5; ++n) {
      double s = 0;
      for (int j = 0; j < 200; ++j) s += hermite_fn(m, g.v(j)) * hermite_fn(n, g.v(j)) * w(j);
      worst = std::max(worst, std::abs(s - (m == n ? 1.0 : 0.0)));
    }
  CHECK(worst < 1e-6);
}

TEST_CASE("normalized trig basis is orthonormal on the periodic grid") {
  const Grid g = Grid::standard(1, 100, 8);
  const Matrix<double> b = normalized_trig_basis(g, 11);
  const Matrix<double> gram = b * b.transpose() * g.dx();
  CHECK((gram - Matrix<double>::Identity(11, 11)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(b(1, 10) == doctest::Approx(std::sqrt(2 / (10 * kPi)) * std::sin(g.x(10) / 5)).epsilon(1e-14));
  CHECK(b(2, 10) == doctest::Approx(std::sqrt(2 / (10 * kPi)) * std::cos(g.x(10) / 5)).epsilon(1e-14));
}

TEST_CASE("unit-ball sampling") {
  std::mt19937_64 rng(5);
  double mean_radius = 0;
  for (int k = 0; k < 2000; ++k) {
    const Vector<double> w = sample_unit_ball<double>(66, rng);
    CHECK(w.norm() <= 1.0);
    mean_radius += w.norm() / 2000;
  }
  // E|w| = d / (d + 1) for the uniform ball
  CHECK(mean_radius == doctest::Approx(66.0 / 67.0).epsilon(5e-3));
}

TEST_CASE("training perturbation") {
  const Grid g = Grid::standard(1, 100, 200);
  const PerturbationSpec spec;
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Field fp = sample_training_perturbation(spec, g, rng);
    CHECK(std::sqrt(weighted_norm_squared(g, fp.values)) <= spec.eps_p * (1 + 1e-4));
  }
  SUBCASE("deterministic for a fixed seed") {
    std::mt19937_64 a(9), b(9);
    CHECK(sample_training_perturbation(spec, g, a).values == sample_training_perturbation(spec, g, b).values);
  }
  SUBCASE("no projection onto Hermite orders above the basis") {
    std::mt19937_64 r(1);
    const Field fp = sample_training_perturbation(spec, g, r);
    const Vector<double> w = velocity_weights(g);
    for (int m = 6; m <= 8; ++m) {
      Vector<double> hm(200);
      for (int j = 0; j < 200; ++j) hm(j) = hermite_fn(m, g.v(j)) * w(j);
      CHECK((fp.values * hm).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  PerturbationSpec bad;
  bad.eps_p = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
