#pragma once

// Target equilibria (Gaussian mixtures in velocity), their analytic
// velocity derivatives, the perturbed initial states and the random
// perturbation sampler used while training controllers.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include "vpctl/grid.hpp"

namespace vpctl {

enum class EquilibriumKind { two_stream_1d, bump_on_tail_1d, two_stream_2d };

struct EquilibriumSpec {
  EquilibriumKind kind = EquilibriumKind::two_stream_1d;
  double vbar = 2.4;  // two-stream beam speed
  // bump-on-tail
  double w1 = 0.9, w2 = 0.1, vbar1 = -2.0, vbar2 = 3.5, vt = 0.25;
  // 2D two-stream drift vector
  double vbar_x = 2.0, vbar_y = 2.0;

  static EquilibriumSpec two_stream(double vbar = 2.4) {
    EquilibriumSpec s;
    s.kind = EquilibriumKind::two_stream_1d;
    s.vbar = vbar;
    return s;
  }
  static EquilibriumSpec bump_on_tail() {
    EquilibriumSpec s;
    s.kind = EquilibriumKind::bump_on_tail_1d;
    return s;
  }
  static EquilibriumSpec two_stream_2d(double vx = 2.0, double vy = 2.0) {
    EquilibriumSpec s;
    s.kind = EquilibriumKind::two_stream_2d;
    s.vbar_x = vx;
    s.vbar_y = vy;
    return s;
  }

  int dim() const { return kind == EquilibriumKind::two_stream_2d ? 2 : 1; }

  void validate() const {
    if (kind == EquilibriumKind::bump_on_tail_1d) {
      if (!(w1 > 0 && w2 > 0)) throw ConfigError("equilibrium: weights must be positive");
      if (std::abs(w1 + w2 - 1.0) > 1e-12) throw ConfigError("equilibrium: w1 + w2 must equal 1");
      if (!(vt > 0)) throw ConfigError("equilibrium.vt must be positive");
    }
  }
};

inline std::string_view to_string(EquilibriumKind k) {
  switch (k) {
    case EquilibriumKind::two_stream_1d: return "two_stream_1d";
    case EquilibriumKind::bump_on_tail_1d: return "bump_on_tail_1d";
    case EquilibriumKind::two_stream_2d: return "two_stream_2d";
  }
  return "?";
}

inline EquilibriumKind equilibrium_kind_from_string(std::string_view s) {
  if (s == "two_stream_1d") return EquilibriumKind::two_stream_1d;
  if (s == "bump_on_tail_1d") return EquilibriumKind::bump_on_tail_1d;
  if (s == "two_stream_2d") return EquilibriumKind::two_stream_2d;
  throw ConfigError("equilibrium.kind: unknown kind '" + std::string(s) + "'");
}

namespace detail {

template <typename Scalar>
Scalar gaussian(Scalar v, Scalar mean, Scalar var) {
  const Scalar d = v - mean;
  return std::exp(-d * d / (Scalar(2) * var)) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar> * var);
}

}  // namespace detail

/// f_bar(v) for 1D kinds.
template <typename Scalar>
Scalar equilibrium_value(const EquilibriumSpec& spec, Scalar v) {
  using detail::gaussian;
  switch (spec.kind) {
    case EquilibriumKind::two_stream_1d:
      return Scalar(0.5) * (gaussian(v, Scalar(spec.vbar), Scalar(1)) + gaussian(v, Scalar(-spec.vbar), Scalar(1)));
    case EquilibriumKind::bump_on_tail_1d:
      return Scalar(spec.w1) * gaussian(v, Scalar(spec.vbar1), Scalar(1)) +
             Scalar(spec.w2) * gaussian(v, Scalar(spec.vbar2), Scalar(spec.vt));
    default: throw UsageError("equilibrium_value: 1D kind required");
  }
}

/// d f_bar / dv for 1D kinds.
template <typename Scalar>
Scalar equilibrium_derivative(const EquilibriumSpec& spec, Scalar v) {
  using detail::gaussian;
  switch (spec.kind) {
    case EquilibriumKind::two_stream_1d: {
      const Scalar a = Scalar(spec.vbar);
      return Scalar(0.5) * (-(v - a) * gaussian(v, a, Scalar(1)) - (v + a) * gaussian(v, -a, Scalar(1)));
    }
    case EquilibriumKind::bump_on_tail_1d: {
      const Scalar m1 = Scalar(spec.vbar1), m2 = Scalar(spec.vbar2), vt = Scalar(spec.vt);
      return -Scalar(spec.w1) * (v - m1) * gaussian(v, m1, Scalar(1)) -
             Scalar(spec.w2) * (v - m2) / vt * gaussian(v, m2, vt);
    }
    default: throw UsageError("equilibrium_derivative: 1D kind required");
  }
}

/// 2D two-stream: (1/4pi) [exp(-|v - vbar|^2/2) + exp(-|v + vbar|^2/2)].
template <typename Scalar>
Scalar equilibrium_value_2d(const EquilibriumSpec& spec, Scalar v1, Scalar v2) {
  const Scalar a = Scalar(spec.vbar_x), b = Scalar(spec.vbar_y);
  const Scalar c = Scalar(1) / (Scalar(4) * std::numbers::pi_v<Scalar>);
  const Scalar p = ((v1 - a) * (v1 - a) + (v2 - b) * (v2 - b)) / Scalar(2);
  const Scalar m = ((v1 + a) * (v1 + a) + (v2 + b) * (v2 + b)) / Scalar(2);
  return c * (std::exp(-p) + std::exp(-m));
}

template <typename Scalar>
Scalar equilibrium_derivative_2d(const EquilibriumSpec& spec, Scalar v1, Scalar v2, int axis) {
  const Scalar a = Scalar(spec.vbar_x), b = Scalar(spec.vbar_y);
  const Scalar c = Scalar(1) / (Scalar(4) * std::numbers::pi_v<Scalar>);
  const Scalar ep = std::exp(-((v1 - a) * (v1 - a) + (v2 - b) * (v2 - b)) / Scalar(2));
  const Scalar em = std::exp(-((v1 + a) * (v1 + a) + (v2 + b) * (v2 + b)) / Scalar(2));
  if (axis == 0) return c * (-(v1 - a) * ep - (v1 + a) * em);
  return c * (-(v2 - b) * ep - (v2 + b) * em);
}

/// Nodal f_bar on the grid (spatially uniform).
template <typename Scalar>
DistributionField<Scalar> equilibrium(const EquilibriumSpec& spec, const PhaseGrid<Scalar>& grid) {
  spec.validate();
  if (spec.dim() != grid.dim()) throw ConfigError("equilibrium: kind does not match grid dimension");
  Vector<Scalar> profile(grid.velocity_size());
  for (Eigen::Index w = 0; w < profile.size(); ++w) {
    const auto j = grid.velocity_index(w);
    profile(w) = grid.dim() == 1 ? equilibrium_value(spec, grid.v(j[0]))
                                 : equilibrium_value_2d(spec, grid.v(j[0]), grid.v(j[1]));
  }
  return DistributionField<Scalar>(grid, Matrix<Scalar>(Vector<Scalar>::Ones(grid.spatial_size()) * profile.transpose()));
}

/// Analytic d f_bar / dv_axis on the grid.
template <typename Scalar>
DistributionField<Scalar> equilibrium_dv(const EquilibriumSpec& spec, const PhaseGrid<Scalar>& grid, int axis = 0) {
  spec.validate();
  if (spec.dim() != grid.dim()) throw ConfigError("equilibrium: kind does not match grid dimension");
  Vector<Scalar> profile(grid.velocity_size());
  for (Eigen::Index w = 0; w < profile.size(); ++w) {
    const auto j = grid.velocity_index(w);
    profile(w) = grid.dim() == 1 ? equilibrium_derivative(spec, grid.v(j[0]))
                                 : equilibrium_derivative_2d(spec, grid.v(j[0]), grid.v(j[1]), axis);
  }
  return DistributionField<Scalar>(grid, Matrix<Scalar>(Vector<Scalar>::Ones(grid.spatial_size()) * profile.transpose()));
}

enum class InitialPreset { two_stream_default, two_stream_alt, bump_on_tail_default, two_stream_2d_default };

inline InitialPreset initial_preset_from_string(std::string_view s) {
  if (s == "two_stream_default") return InitialPreset::two_stream_default;
  if (s == "two_stream_alt") return InitialPreset::two_stream_alt;
  if (s == "bump_on_tail_default") return InitialPreset::bump_on_tail_default;
  if (s == "two_stream_2d_default") return InitialPreset::two_stream_2d_default;
  throw ConfigError("initial_condition.preset: unknown preset '" + std::string(s) + "'");
}

inline std::string_view to_string(InitialPreset p) {
  switch (p) {
    case InitialPreset::two_stream_default: return "two_stream_default";
    case InitialPreset::two_stream_alt: return "two_stream_alt";
    case InitialPreset::bump_on_tail_default: return "bump_on_tail_default";
    case InitialPreset::two_stream_2d_default: return "two_stream_2d_default";
  }
  return "?";
}

/// Default perturbation amplitude of each preset.
inline double default_amplitude(InitialPreset p) {
  switch (p) {
    case InitialPreset::two_stream_default: return 1e-3;
    case InitialPreset::two_stream_alt: return 1e-3;
    case InitialPreset::bump_on_tail_default: return 3e-3;
    case InitialPreset::two_stream_2d_default: return 1e-2;
  }
  return 0;
}

/// Equilibrium the preset perturbs.
inline EquilibriumSpec preset_equilibrium(InitialPreset p) {
  switch (p) {
    case InitialPreset::bump_on_tail_default: return EquilibriumSpec::bump_on_tail();
    case InitialPreset::two_stream_2d_default: return EquilibriumSpec::two_stream_2d();
    default: return EquilibriumSpec::two_stream();
  }
}

/// Perturbed initial state of a preset with amplitude eps:
///   two_stream_default    (1 + eps cos(x/5)) f_bar
///   two_stream_alt        (1 - eps sin(x/5) + 2 eps cos(2x/5)) f_bar
///   bump_on_tail_default  f_bar + eps w2 N(v; vbar2, vt) sin(x/5)
///   two_stream_2d_default (1 + eps sin(x/5) cos(y/5)) f_bar
/// The spatial wavenumber 1/5 is 2 pi / L on the default domain.
template <typename Scalar>
DistributionField<Scalar> initial_condition(InitialPreset preset, const EquilibriumSpec& spec,
                                            const PhaseGrid<Scalar>& grid, double eps) {
  DistributionField<Scalar> f = equilibrium(spec, grid);
  const Scalar k = Scalar(2) * std::numbers::pi_v<Scalar> / grid.length();
  const Scalar e = Scalar(eps);
  const Vector<Scalar> x = spatial_coordinates(grid, 0);
  switch (preset) {
    case InitialPreset::two_stream_default: {
      const Vector<Scalar> m = Scalar(1) + e * (k * x.array()).cos();
      f.values = m.asDiagonal() * f.values;
      break;
    }
    case InitialPreset::two_stream_alt: {
      const Vector<Scalar> m = Scalar(1) - e * (k * x.array()).sin() + Scalar(2) * e * (Scalar(2) * k * x.array()).cos();
      f.values = m.asDiagonal() * f.values;
      break;
    }
    case InitialPreset::bump_on_tail_default: {
      if (spec.kind != EquilibriumKind::bump_on_tail_1d) throw ConfigError("initial_condition: bump_on_tail_default needs a bump_on_tail_1d equilibrium");
      Vector<Scalar> bump(grid.velocity_size());
      for (int j = 0; j < grid.nv(); ++j)
        bump(j) = Scalar(spec.w2) * detail::gaussian(grid.v(j), Scalar(spec.vbar2), Scalar(spec.vt));
      const Vector<Scalar> sx = (k * x.array()).sin();
      f.values += e * sx * bump.transpose();
      break;
    }
    case InitialPreset::two_stream_2d_default: {
      if (grid.dim() != 2) throw ConfigError("initial_condition: two_stream_2d_default needs a 2D grid");
      const Vector<Scalar> y = spatial_coordinates(grid, 1);
      const Vector<Scalar> m = Scalar(1) + e * (k * x.array()).sin() * (k * y.array()).cos();
      f.values = m.asDiagonal() * f.values;
      break;
    }
  }
  return f;
}

template <typename Scalar>
DistributionField<Scalar> initial_condition(InitialPreset preset, const PhaseGrid<Scalar>& grid) {
  return initial_condition(preset, preset_equilibrium(preset), grid, default_amplitude(preset));
}

/// Orthonormal Hermite function h_n(v) = He_n(v) exp(-v^2/4) / sqrt(sqrt(2 pi) n!).
template <typename Scalar>
Scalar hermite_fn(int n, Scalar v) {
  Scalar he_prev = 1, he = v;
  if (n == 0) he = 1;
  for (int m = 1; m < n; ++m) {
    const Scalar next = v * he - Scalar(m) * he_prev;
    he_prev = he;
    he = next;
  }
  const Scalar norm = std::sqrt(std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>) * std::tgamma(Scalar(n + 1)));
  return he * std::exp(-v * v / Scalar(4)) / norm;
}

struct PerturbationSpec {
  double eps_p = 1e-3;
  int k_modes = 11;  // constant + sin/cos of l x / 5, l = 1..5
  int n_modes = 6;   // Hermite orders 0..5

  void validate() const {
    if (!(eps_p > 0)) throw ConfigError("training.perturbation.eps_p must be positive");
    if (k_modes < 1 || n_modes < 1) throw ConfigError("training.perturbation: mode counts must be >= 1");
    if (k_modes % 2 == 0) throw ConfigError("training.perturbation.k_modes must be odd (constant + sin/cos pairs)");
  }
};

/// Orthonormal periodic trig basis on [x_min, x_max]: sqrt(1/L), then
/// sqrt(2/L) sin(l k x), sqrt(2/L) cos(l k x) for l = 1.. with k = 2 pi / L.
/// Returned as (modes x nx).
template <typename Scalar>
Matrix<Scalar> normalized_trig_basis(const PhaseGrid<Scalar>& grid, int modes) {
  const Scalar L = grid.length();
  const Scalar k = Scalar(2) * std::numbers::pi_v<Scalar> / L;
  Matrix<Scalar> b(modes, grid.nx());
  for (int i = 0; i < grid.nx(); ++i) {
    const Scalar x = grid.x(i);
    b(0, i) = std::sqrt(Scalar(1) / L);
    for (int m = 1; m < modes; ++m) {
      const int l = (m + 1) / 2;
      b(m, i) = std::sqrt(Scalar(2) / L) * (m % 2 == 1 ? std::sin(Scalar(l) * k * x) : std::cos(Scalar(l) * k * x));
    }
  }
  return b;
}

/// Uniform sample from the unit ball in R^d: normal direction times U^(1/d).
template <typename Scalar, typename Rng>
Vector<Scalar> sample_unit_ball(int d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vector<Scalar> g(d);
  for (int i = 0; i < d; ++i) g(i) = Scalar(normal(rng));
  const Scalar r = Scalar(std::pow(uniform(rng), 1.0 / d));
  return g * (r / g.norm());
}

/// f_p(x, v) = eps_p sum_{k, n} omega_{kn} phi_k(x) h_n(v), omega uniform
/// on the unit ball. 1D grids only.
template <typename Scalar, typename Rng>
DistributionField<Scalar> sample_training_perturbation(const PerturbationSpec& spec, const PhaseGrid<Scalar>& grid,
                                                       Rng& rng) {
  spec.validate();
  if (grid.dim() != 1) throw UsageError("sample_training_perturbation: 1D grid required");
  const Vector<Scalar> omega = sample_unit_ball<Scalar>(spec.k_modes * spec.n_modes, rng);
  const Matrix<Scalar> phi = normalized_trig_basis(grid, spec.k_modes);  // K x nx
  Matrix<Scalar> h(spec.n_modes, grid.nv());
  for (int n = 0; n < spec.n_modes; ++n)
    for (int j = 0; j < grid.nv(); ++j) h(n, j) = hermite_fn(n, grid.v(j));
  const Eigen::Map<const Matrix<Scalar>> w(omega.data(), spec.k_modes, spec.n_modes);
  return DistributionField<Scalar>(grid, Matrix<Scalar>(Scalar(spec.eps_p) * phi.transpose() * w * h));
}

}  // namespace vpctl
