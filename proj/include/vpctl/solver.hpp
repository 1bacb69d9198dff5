#pragma once

// Semi-Lagrangian Vlasov-Poisson integrator.
//
// Forward step (Strang splitting):
//   f1(x, v)    = f^n(x - dt/2 v, v)
//   f2(x, v)    = f1(x, v - (E[f1] + H[f1 - f_bar]) dt)
//   f^{n+1}     = f2(x - dt/2 v, v)
// Backward adjoint step with f_half = (f^n + f^{n-1}) / 2, a = E + H at f_half:
//   l1 = lambda^n(x + dt/2 v, v);  l2 = l1(x, v + dt/2 a);  l3 = l2 - dt (f_half - f_bar)
//   l4 = l3(x, v + dt/2 a);        lambda^{n-1} = l4(x + dt/2 v, v)
// Interpolation is linear per axis (bilinear / multilinear overall), periodic
// in space and zero-extended beyond the velocity bounds.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "vpctl/controllers.hpp"
#include "vpctl/diagnostics.hpp"
#include "vpctl/equilibria.hpp"
#include "vpctl/poisson.hpp"

namespace vpctl {

struct SolverConfig {
  double dt = 0.2;
  double t_end = 70.0;
  bool store_trajectory = false;
  int record_every = 1;

  void validate() const {
    if (!(dt > 0)) throw ConfigError("solver.dt must be > 0");
    if (t_end < 0) throw ConfigError("solver.t_end must be >= 0");
    if (t_end > 0 && t_end < dt * (1 - 1e-12)) throw ConfigError("solver.t_end must be >= solver.dt");
    if (record_every < 1) throw ConfigError("solver.record_every must be >= 1");
  }
  int steps() const { return int(std::lround(t_end / dt)); }
};

/// |f| above this, or any non-finite entry, aborts the run.
inline constexpr double kBlowupThreshold = 1e6;

/// Blowup raised from run_forward; carries the diagnostics recorded so far.
class ForwardBlowup : public NumericalBlowup {
 public:
  ForwardBlowup(const NumericalBlowup& e, DiagnosticSeries partial)
      : NumericalBlowup(e), partial_(std::move(partial)) {}
  const DiagnosticSeries& partial() const { return partial_; }

 private:
  DiagnosticSeries partial_;
};

// ---------------------------------------------------------------------------
// Interpolation kernels

namespace detail {

/// out[i*stride] = in evaluated at position i - shift, periodic, linear.
template <typename Scalar>
void shift_periodic(const Scalar* in, Scalar* out, int n, Eigen::Index stride, Scalar shift) {
  const Scalar fl = std::floor(shift);
  const Scalar a = shift - fl;  // weight of node (i - k - 1)
  int k = int(std::fmod(fl, Scalar(n)));
  if (k < 0) k += n;
  for (int i = 0; i < n; ++i) {
    int i0 = i - k;
    if (i0 < 0) i0 += n;
    int i1 = i0 - 1;
    if (i1 < 0) i1 += n;
    out[i * stride] = (Scalar(1) - a) * in[i0 * stride] + a * in[i1 * stride];
  }
}

/// out[j*stride] = in evaluated at position j - shift, zero outside [0, n-1], linear.
template <typename Scalar>
void shift_zero(const Scalar* in, Scalar* out, int n, Eigen::Index stride, Scalar shift) {
  const Scalar fl = std::floor(shift);
  const Scalar a = shift - fl;
  if (std::abs(fl) > Scalar(2 * n)) {
    for (int j = 0; j < n; ++j) out[j * stride] = 0;
    return;
  }
  const int k = int(fl);
  for (int j = 0; j < n; ++j) {
    const int j0 = j - k, j1 = j0 - 1;
    const Scalar v0 = (j0 >= 0 && j0 < n) ? in[j0 * stride] : Scalar(0);
    const Scalar v1 = (j1 >= 0 && j1 < n) ? in[j1 * stride] : Scalar(0);
    out[j * stride] = (Scalar(1) - a) * v0 + a * v1;
  }
}

}  // namespace detail

/// f(x - tau v, v): spatial transport over time tau (tau may be negative).
template <typename Scalar>
Matrix<Scalar> advect_x(const PhaseGrid<Scalar>& g, const Matrix<Scalar>& f, Scalar tau) {
  const int nx = g.nx();
  const Scalar dx = g.dx();
  Matrix<Scalar> out(f.rows(), f.cols());
  if (g.dim() == 1) {
    for (Eigen::Index w = 0; w < f.cols(); ++w)
      detail::shift_periodic(f.col(w).data(), out.col(w).data(), nx, 1, tau * g.v(int(w)) / dx);
    return out;
  }
  Vector<Scalar> tmp(g.spatial_size());
  for (Eigen::Index w = 0; w < f.cols(); ++w) {
    const auto j = g.velocity_index(w);
    const Scalar sx = tau * g.v(j[0]) / dx, sy = tau * g.v(j[1]) / dx;
    const Scalar* src = f.col(w).data();
    Scalar* dst = out.col(w).data();
    for (int iy = 0; iy < nx; ++iy) detail::shift_periodic(src + iy * nx, tmp.data() + iy * nx, nx, 1, sx);
    for (int ix = 0; ix < nx; ++ix) detail::shift_periodic(tmp.data() + ix, dst + ix, nx, nx, sy);
  }
  return out;
}

/// f(x, v - a(x) tau): velocity kick by acceleration a over time tau.
template <typename Scalar>
Matrix<Scalar> kick_v(const PhaseGrid<Scalar>& g, const Matrix<Scalar>& f, const Matrix<Scalar>& accel, Scalar tau) {
  if (accel.rows() != f.rows() || accel.cols() != g.dim()) throw UsageError("kick_v: acceleration shape mismatch");
  const int nv = g.nv();
  const Scalar dv = g.dv();
  Matrix<Scalar> out(f.rows(), f.cols());
  const Eigen::Index ns = f.rows();
  if (g.dim() == 1) {
    for (Eigen::Index s = 0; s < ns; ++s)
      detail::shift_zero(f.data() + s, out.data() + s, nv, ns, accel(s, 0) * tau / dv);
    return out;
  }
  Vector<Scalar> a(g.velocity_size()), b(g.velocity_size());
  for (Eigen::Index s = 0; s < ns; ++s) {
    a = f.row(s).transpose();
    const Scalar s1 = accel(s, 0) * tau / dv, s2 = accel(s, 1) * tau / dv;
    for (int j2 = 0; j2 < nv; ++j2) detail::shift_zero(a.data() + j2 * nv, b.data() + j2 * nv, nv, 1, s1);
    for (int j1 = 0; j1 < nv; ++j1) detail::shift_zero(b.data() + j1, a.data() + j1, nv, nv, s2);
    out.row(s) = a.transpose();
  }
  return out;
}

/// Bilinear interpolation at an arbitrary (x, v) on a 1D grid.
template <typename Scalar>
Scalar interp_bilinear(const DistributionField<Scalar>& f, Scalar xq, Scalar vq) {
  const auto& g = f.grid;
  if (g.dim() != 1) throw UsageError("interp_bilinear: 1D grid required");
  const Scalar px = (xq - g.x_min()) / g.dx();
  const Scalar pv = (vq - g.v_min()) / g.dv();
  const Scalar fx = std::floor(px), fv = std::floor(pv);
  const Scalar ax = px - fx, av = pv - fv;
  int i0 = int(std::fmod(fx, Scalar(g.nx())));
  if (i0 < 0) i0 += g.nx();
  const int i1 = (i0 + 1) % g.nx();
  const int j0 = int(fv), j1 = j0 + 1;
  auto at = [&](int i, int j) { return (j >= 0 && j < g.nv()) ? f.values(i, j) : Scalar(0); };
  if (fv < Scalar(-2) || fv > Scalar(g.nv() + 1)) return 0;
  return (1 - ax) * ((1 - av) * at(i0, j0) + av * at(i0, j1)) + ax * ((1 - av) * at(i1, j0) + av * at(i1, j1));
}

/// Multilinear interpolation at (x, y, v1, v2) on a 2D grid.
template <typename Scalar>
Scalar interp_multilinear(const DistributionField<Scalar>& f, Scalar xq, Scalar yq, Scalar v1q, Scalar v2q) {
  const auto& g = f.grid;
  if (g.dim() != 2) throw UsageError("interp_multilinear: 2D grid required");
  const int n = g.nx(), m = g.nv();
  const Scalar p[4] = {(xq - g.x_min()) / g.dx(), (yq - g.x_min()) / g.dx(), (v1q - g.v_min()) / g.dv(),
                       (v2q - g.v_min()) / g.dv()};
  int lo[4];
  Scalar frac[4];
  for (int d = 0; d < 4; ++d) {
    const Scalar fl = std::floor(p[d]);
    if (d >= 2 && (fl < Scalar(-2) || fl > Scalar(m + 1))) return 0;
    frac[d] = p[d] - fl;
    lo[d] = d < 2 ? int(std::fmod(fl, Scalar(n))) : int(fl);
    if (d < 2 && lo[d] < 0) lo[d] += n;
  }
  Scalar sum = 0;
  for (int corner = 0; corner < 16; ++corner) {
    int idx[4];
    Scalar wgt = 1;
    for (int d = 0; d < 4; ++d) {
      const int bit = (corner >> d) & 1;
      idx[d] = lo[d] + bit;
      wgt *= bit ? frac[d] : (1 - frac[d]);
    }
    idx[0] %= n;
    idx[1] %= n;
    if (idx[2] < 0 || idx[2] >= m || idx[3] < 0 || idx[3] >= m || wgt == Scalar(0)) continue;
    sum += wgt * f.values(idx[0] + Eigen::Index(n) * idx[1], idx[2] + Eigen::Index(m) * idx[3]);
  }
  return sum;
}

/// delta f + sigma N with i.i.d. standard normal N at every node.
template <typename Scalar, typename Rng>
DistributionField<Scalar> add_feedback_noise(const DistributionField<Scalar>& df, double sigma, Rng& rng) {
  if (sigma < 0) throw ConfigError("noise.sigma must be >= 0");
  if (sigma == 0) return df;
  std::normal_distribution<double> normal(0.0, 1.0);
  DistributionField<Scalar> out = df;
  Scalar* p = out.values.data();
  for (Eigen::Index i = 0; i < out.values.size(); ++i) p[i] += Scalar(sigma * normal(rng));
  return out;
}

/// Measurement noise on the controller input, fresh draws on every call.
struct FeedbackNoise {
  double sigma = 0;
  std::mt19937_64 rng;
  FeedbackNoise(double s, std::uint64_t seed) : sigma(s), rng(seed) {}
};

template <typename Scalar = double>
struct TrajectoryBuffer {
  PhaseGrid<Scalar> grid;
  double dt = 0;
  std::vector<Matrix<Scalar>> states;          // f^0 .. f^N (only when stored)
  std::vector<SpatialField<Scalar>> controls;  // H applied in step n -> n+1
  std::vector<SpatialField<Scalar>> fields;    // E applied in step n -> n+1
  int steps() const { return int(controls.size()); }
};

template <typename Scalar = double>
struct StepResult {
  Matrix<Scalar> f_next;
  SpatialField<Scalar> E;
  SpatialField<Scalar> H;
};

template <typename Scalar = double>
struct ForwardRun {
  TrajectoryBuffer<Scalar> trajectory;
  DiagnosticSeries series;
  Matrix<Scalar> final_state;
};

/// Per-record callback: (step, time, f^n).
template <typename Scalar>
using StateObserver = std::function<void(int, double, const DistributionField<Scalar>&)>;

template <typename Scalar>
void check_finite(const Matrix<Scalar>& f, int step, const char* what) {
  const Scalar* p = f.data();
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    if (!std::isfinite(p[i]) || std::abs(p[i]) > Scalar(kBlowupThreshold))
      throw NumericalBlowup(step, std::string(what) + " left the finite range");
  }
}

/// Controlled Vlasov-Poisson system around a fixed equilibrium.
template <typename Scalar = double>
class VlasovPoisson {
 public:
  /// With neutralize_with_equilibrium the ion background is the discrete
  /// density of f_bar (so E[f_bar] == 0 exactly); otherwise it is 1.
  VlasovPoisson(const PhaseGrid<Scalar>& grid, const EquilibriumSpec& spec,
                FieldSolver<Scalar> solver = FieldSolver<Scalar>(), bool neutralize_with_equilibrium = true)
      : grid_(grid), spec_(spec), solver_(solver), f_bar_(equilibrium(spec, grid)) {
    rho_bg_ = neutralize_with_equilibrium ? Vector<Scalar>(integrate_v(f_bar_).values.col(0))
                                          : Vector<Scalar>::Ones(grid.spatial_size());
  }

  const PhaseGrid<Scalar>& grid() const { return grid_; }
  const EquilibriumSpec& spec() const { return spec_; }
  const DistributionField<Scalar>& f_bar() const { return f_bar_; }
  const FieldSolver<Scalar>& field_solver() const { return solver_; }

  SpatialField<Scalar> electric_field(const Matrix<Scalar>& f) const {
    SpatialField<Scalar> source(grid_, Matrix<Scalar>(f * velocity_weights(grid_)));
    source.values.col(0) -= rho_bg_;
    return solver_.electric_field(source);
  }

  DistributionField<Scalar> perturbation(const Matrix<Scalar>& f) const {
    return DistributionField<Scalar>(grid_, Matrix<Scalar>(f - f_bar_.values));
  }

  StepResult<Scalar> forward_step(const Matrix<Scalar>& f, const Controller<Scalar>& controller, Scalar dt,
                                  FeedbackNoise* noise = nullptr, int step = 0) const {
    Matrix<Scalar> f1 = advect_x(grid_, f, dt / 2);
    SpatialField<Scalar> E = electric_field(f1);
    DistributionField<Scalar> df1 = perturbation(f1);
    if (noise && noise->sigma > 0) df1 = add_feedback_noise(df1, noise->sigma, noise->rng);
    SpatialField<Scalar> H = controller.apply(df1);
    if (H.values.rows() != E.values.rows() || H.values.cols() != E.values.cols())
      throw UsageError("controller output does not match the grid");
    const Matrix<Scalar> accel = E.values + H.values;
    check_finite(accel, step, "acceleration");
    Matrix<Scalar> f2 = kick_v(grid_, f1, accel, dt);
    Matrix<Scalar> fn = advect_x(grid_, f2, dt / 2);
    check_finite(fn, step, "distribution");
    return {std::move(fn), std::move(E), std::move(H)};
  }

  ForwardRun<Scalar> run_forward(const DistributionField<Scalar>& f0, const Controller<Scalar>& controller,
                                 const SolverConfig& cfg, FeedbackNoise* noise = nullptr,
                                 const StateObserver<Scalar>& observer = {}) const {
    cfg.validate();
    if (!(f0.grid == grid_)) throw UsageError("run_forward: initial state lives on a different grid");
    ForwardRun<Scalar> run;
    run.trajectory.grid = grid_;
    run.trajectory.dt = cfg.dt;
    const int n_steps = cfg.steps();
    Matrix<Scalar> f = f0.values;
    if (cfg.store_trajectory) run.trajectory.states.push_back(f);
    record(run.series, 0.0, f, controller);
    if (observer) observer(0, 0.0, DistributionField<Scalar>(grid_, f));
    for (int n = 0; n < n_steps; ++n) {
      StepResult<Scalar> r;
      try {
        r = forward_step(f, controller, Scalar(cfg.dt), noise, n + 1);
      } catch (const NumericalBlowup& e) {
        throw ForwardBlowup(e, run.series);
      }
      f = std::move(r.f_next);
      run.trajectory.controls.push_back(std::move(r.H));
      run.trajectory.fields.push_back(std::move(r.E));
      if (cfg.store_trajectory) run.trajectory.states.push_back(f);
      const double t = (n + 1) * cfg.dt;
      if ((n + 1) % cfg.record_every == 0 || n + 1 == n_steps) {
        record(run.series, t, f, controller);
        if (observer) observer(n + 1, t, DistributionField<Scalar>(grid_, f));
      }
    }
    run.final_state = std::move(f);
    return run;
  }

  Matrix<Scalar> adjoint_step_backward(const Matrix<Scalar>& lambda, const Matrix<Scalar>& f_n,
                                       const Matrix<Scalar>& f_prev, const Controller<Scalar>& controller, Scalar dt,
                                       int step = 0) const {
    const Matrix<Scalar> f_half = Scalar(0.5) * (f_n + f_prev);
    const DistributionField<Scalar> df_half = perturbation(f_half);
    const SpatialField<Scalar> E = electric_field(f_half);
    const SpatialField<Scalar> H = controller.apply(df_half);
    const Matrix<Scalar> accel = E.values + H.values;
    Matrix<Scalar> l = advect_x(grid_, lambda, -dt / 2);
    l = kick_v(grid_, l, accel, -dt / 2);
    l -= dt * df_half.values;
    l = kick_v(grid_, l, accel, -dt / 2);
    l = advect_x(grid_, l, -dt / 2);
    check_finite(l, step, "adjoint");
    return l;
  }

  /// lambda^0 .. lambda^N with lambda^N = 0.
  std::vector<Matrix<Scalar>> run_adjoint(const TrajectoryBuffer<Scalar>& traj,
                                          const Controller<Scalar>& controller) const {
    if (traj.states.empty()) throw UsageError("run_adjoint: forward trajectory was not stored");
    const int n_steps = int(traj.states.size()) - 1;
    std::vector<Matrix<Scalar>> lambda(n_steps + 1);
    lambda[n_steps] = Matrix<Scalar>::Zero(grid_.spatial_size(), grid_.velocity_size());
    for (int n = n_steps; n >= 1; --n)
      lambda[n - 1] = adjoint_step_backward(lambda[n], traj.states[n], traj.states[n - 1], controller,
                                            Scalar(traj.dt), n);
    return lambda;
  }

 private:
  void record(DiagnosticSeries& s, double t, const Matrix<Scalar>& f, const Controller<Scalar>& controller) const {
    const DistributionField<Scalar> field(grid_, f);
    const SpatialField<Scalar> E = electric_field(f);
    const SpatialField<Scalar> H = controller.apply(perturbation(f));
    s.push(t, double(l2_perturbation(field, f_bar_)), double(electric_energy(E)), double(electric_energy(H)),
           double(total_mass(field)));
  }

  PhaseGrid<Scalar> grid_;
  EquilibriumSpec spec_;
  FieldSolver<Scalar> solver_;
  DistributionField<Scalar> f_bar_;
  Vector<Scalar> rho_bg_;
};

}  // namespace vpctl
