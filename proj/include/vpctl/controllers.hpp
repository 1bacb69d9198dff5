#pragma once

// External-field laws H[delta f]. Every controller maps a perturbation
// delta f = f - f_bar on its grid to a SpatialField with one component per
// spatial dimension.

#include <cmath>
#include <memory>
#include <numbers>
#include <string_view>

#include "vpctl/equilibria.hpp"
#include "vpctl/mlp.hpp"
#include "vpctl/poisson.hpp"

namespace vpctl {

enum class ControllerKind { zero, time_independent, low_rank_operator, cancellation, cancellation_ratio };

inline std::string_view to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::zero: return "zero";
    case ControllerKind::time_independent: return "time_independent";
    case ControllerKind::low_rank_operator: return "low_rank_operator";
    case ControllerKind::cancellation: return "cancellation";
    case ControllerKind::cancellation_ratio: return "cancellation_ratio";
  }
  return "?";
}

inline ControllerKind controller_kind_from_string(std::string_view s) {
  if (s == "zero" || s == "none") return ControllerKind::zero;
  if (s == "time_independent") return ControllerKind::time_independent;
  if (s == "low_rank_operator") return ControllerKind::low_rank_operator;
  if (s == "cancellation") return ControllerKind::cancellation;
  if (s == "cancellation_ratio") return ControllerKind::cancellation_ratio;
  throw ConfigError("controller.kind: unknown kind '" + std::string(s) + "'");
}

inline constexpr int kTrigRank = 31;

/// Fixed trigonometric basis, (rank x nx): row 0 = 1, row 2l-1 = sin(l k x),
/// row 2l = cos(l k x) for l = 1..(rank-1)/2, k = 2 pi / L.
template <typename Scalar>
Matrix<Scalar> trig_basis(const PhaseGrid<Scalar>& grid, int rank = kTrigRank) {
  const Scalar k = Scalar(2) * std::numbers::pi_v<Scalar> / grid.length();
  Matrix<Scalar> b(rank, grid.nx());
  for (int i = 0; i < grid.nx(); ++i) {
    const Scalar x = grid.x(i);
    b(0, i) = 1;
    for (int r = 1; r < rank; ++r) {
      const int l = (r + 1) / 2;
      b(r, i) = r % 2 == 1 ? std::sin(Scalar(l) * k * x) : std::cos(Scalar(l) * k * x);
    }
  }
  return b;
}

/// Trig-basis row of time-independent coefficient theta_idx (0-based):
/// theta_0..14 -> sin(l k x), l = 1..15; theta_15..30 -> cos(l k x), l = 0..15.
inline int time_independent_basis_row(int theta_idx) {
  if (theta_idx < 15) return 2 * (theta_idx + 1) - 1;
  const int l = theta_idx - 15;
  return l == 0 ? 0 : 2 * l;
}

/// Basis for the time-independent field as an (nx x 31) matrix so H = B theta.
template <typename Scalar>
Matrix<Scalar> time_independent_basis(const PhaseGrid<Scalar>& grid) {
  const Matrix<Scalar> t = trig_basis(grid);
  Matrix<Scalar> b(grid.nx(), kTrigRank);
  for (int k = 0; k < kTrigRank; ++k) b.col(k) = t.row(time_independent_basis_row(k)).transpose();
  return b;
}

/// H(x) = sum_{k=1}^{15} theta_k sin(k x/5) + sum_{k=0}^{15} theta_{k+16} cos(k x/5).
template <typename Scalar>
SpatialField<Scalar> apply_time_independent(const PhaseGrid<Scalar>& grid, const Vector<Scalar>& theta) {
  if (grid.dim() != 1) throw UsageError("time-independent control is 1D only");
  if (theta.size() != kTrigRank) throw UsageError("time-independent control needs 31 coefficients");
  return SpatialField<Scalar>(grid, Matrix<Scalar>(time_independent_basis(grid) * theta));
}

template <typename Scalar = double>
class Controller {
 public:
  virtual ~Controller() = default;
  virtual ControllerKind kind() const = 0;
  virtual SpatialField<Scalar> apply(const DistributionField<Scalar>& delta_f) const = 0;
  /// True when apply(0) == 0 and apply is linear in delta f.
  virtual bool is_linear() const { return true; }
};

template <typename Scalar = double>
class ZeroController final : public Controller<Scalar> {
 public:
  ControllerKind kind() const override { return ControllerKind::zero; }
  SpatialField<Scalar> apply(const DistributionField<Scalar>& df) const override {
    return SpatialField<Scalar>(df.grid, df.grid.dim());
  }
};

template <typename Scalar = double>
class TimeIndependentController final : public Controller<Scalar> {
 public:
  TimeIndependentController(const PhaseGrid<Scalar>& grid, Vector<Scalar> theta = Vector<Scalar>::Zero(kTrigRank))
      : grid_(grid), basis_(time_independent_basis(grid)), theta_(std::move(theta)) {
    if (theta_.size() != kTrigRank) throw UsageError("time-independent control needs 31 coefficients");
  }

  ControllerKind kind() const override { return ControllerKind::time_independent; }
  bool is_linear() const override { return false; }
  SpatialField<Scalar> apply(const DistributionField<Scalar>&) const override {
    return SpatialField<Scalar>(grid_, Matrix<Scalar>(basis_ * theta_));
  }

  const Vector<Scalar>& theta() const { return theta_; }
  Vector<Scalar>& mutable_theta() { return theta_; }
  /// (nx x 31): column k is dH/dtheta_k.
  const Matrix<Scalar>& basis() const { return basis_; }

 private:
  PhaseGrid<Scalar> grid_;
  Matrix<Scalar> basis_;
  Vector<Scalar> theta_;
};

/// H_i = sum_k phi_k(x_i) sum_{l,m} psi_k(x_l, v_m) delta f(x_l, v_m) dx w_m
/// with a fixed trig basis phi and an MLP kernel psi. The kernel is tabulated
/// on the grid; the table must be refreshed after any parameter change.
template <typename Scalar = double>
class LowRankController final : public Controller<Scalar> {
 public:
  LowRankController(const PhaseGrid<Scalar>& grid, MlpParams<Scalar> params)
      : grid_(grid), basis_(trig_basis(grid)), params_(std::move(params)) {
    if (grid.dim() != 1) throw UsageError("low-rank control is 1D only");
    if (params_.input_dim() != 2 || params_.output_dim() != kTrigRank)
      throw UsageError("low-rank kernel network must map R^2 -> R^31");
    inputs_ = kernel_inputs(grid);
    quad_ = Vector<Scalar>(grid.spatial_size() * grid.velocity_size());
    const Vector<Scalar> w = velocity_weights(grid);
    for (Eigen::Index m = 0; m < w.size(); ++m)
      quad_.segment(m * grid.spatial_size(), grid.spatial_size()).setConstant(w(m) * grid.dx());
    refresh_kernel();
  }

  ControllerKind kind() const override { return ControllerKind::low_rank_operator; }

  SpatialField<Scalar> apply(const DistributionField<Scalar>& df) const override {
    if (!fresh_) throw std::logic_error("LowRankController: kernel table is stale; call refresh_kernel()");
    const Vector<Scalar> c = weighted_kernel_ * df.values.reshaped();
    return SpatialField<Scalar>(grid_, Matrix<Scalar>(basis_.transpose() * c));
  }

  const MlpParams<Scalar>& params() const { return params_; }
  /// Invalidates the kernel table.
  MlpParams<Scalar>& mutable_params() {
    fresh_ = false;
    return params_;
  }
  void refresh_kernel() {
    kernel_ = mlp_forward_batch(params_, inputs_);
    weighted_kernel_ = kernel_ * quad_.asDiagonal();
    fresh_ = true;
  }
  bool fresh() const { return fresh_; }

  /// Network inputs, one column per node (column index s + w * nx):
  /// (2 (x - x_min)/L - 1, 2 (v - v_min)/(v_max - v_min) - 1).
  static Matrix<Scalar> kernel_inputs(const PhaseGrid<Scalar>& grid) {
    const Eigen::Index ns = grid.spatial_size(), nw = grid.velocity_size();
    Matrix<Scalar> in(2, ns * nw);
    for (Eigen::Index w = 0; w < nw; ++w)
      for (Eigen::Index s = 0; s < ns; ++s) {
        in(0, s + w * ns) = Scalar(2) * (grid.x(int(s)) - grid.x_min()) / grid.length() - Scalar(1);
        in(1, s + w * ns) = Scalar(2) * (grid.v(int(w)) - grid.v_min()) / (grid.v_max() - grid.v_min()) - Scalar(1);
      }
    return in;
  }

  const Matrix<Scalar>& inputs() const { return inputs_; }
  /// (31 x nx) basis phi.
  const Matrix<Scalar>& basis() const { return basis_; }
  /// (31 x nodes) kernel table psi.
  const Matrix<Scalar>& kernel() const { return kernel_; }
  /// Per-node quadrature weight dx * w_v.
  const Vector<Scalar>& quadrature() const { return quad_; }
  const PhaseGrid<Scalar>& grid() const { return grid_; }

 private:
  PhaseGrid<Scalar> grid_;
  Matrix<Scalar> basis_;
  MlpParams<Scalar> params_;
  Matrix<Scalar> inputs_;
  Vector<Scalar> quad_;
  Matrix<Scalar> kernel_;
  Matrix<Scalar> weighted_kernel_;
  bool fresh_ = false;
};

/// Free-function form of the low-rank map (controller must be fresh).
template <typename Scalar>
SpatialField<Scalar> apply_low_rank(const LowRankController<Scalar>& c, const DistributionField<Scalar>& df) {
  return c.apply(df);
}

enum class CancellationVariant { linear, ratio };

struct CancellationParams {
  double gamma = 1.0;
  CancellationVariant variant = CancellationVariant::linear;
  double eps_bias = 1e-8;

  void validate() const {
    if (!(gamma > 0)) throw ConfigError("controller.gamma must be > 0");
    if (!(eps_bias > 0)) throw ConfigError("controller.eps_bias must be > 0");
  }
};

/// Precomputed context of the cancellation law: (d f_bar / dv_a) * w_v per
/// velocity axis and the Poisson path shared with the forward solver.
template <typename Scalar>
struct CancellationContext {
  PhaseGrid<Scalar> grid;
  FieldSolver<Scalar> field_solver;
  Matrix<Scalar> weighted_dv;  // velocity_size x dim

  CancellationContext(const EquilibriumSpec& spec, const PhaseGrid<Scalar>& g, FieldSolver<Scalar> solver)
      : grid(g), field_solver(solver), weighted_dv(g.velocity_size(), g.dim()) {
    const Vector<Scalar> w = velocity_weights(g);
    for (int a = 0; a < g.dim(); ++a)
      weighted_dv.col(a) = equilibrium_dv(spec, g, a).values.row(0).transpose().cwiseProduct(w);
  }
};

/// delta E[delta f]: field generated by delta rho = int delta f dv.
template <typename Scalar>
SpatialField<Scalar> perturbation_field(const CancellationContext<Scalar>& ctx, const DistributionField<Scalar>& df) {
  return ctx.field_solver.electric_field(integrate_v(df));
}

/// H = -delta E + gamma int delta f grad_v f_bar dv.
template <typename Scalar>
SpatialField<Scalar> apply_cancellation(const CancellationContext<Scalar>& ctx, const CancellationParams& p,
                                        const DistributionField<Scalar>& df) {
  SpatialField<Scalar> H = perturbation_field(ctx, df);
  H.values = -H.values + Scalar(p.gamma) * (df.values * ctx.weighted_dv);
  return H;
}

/// H = -delta E + gamma int |delta f|^2 dv / (int delta f d_v f_bar dv + eps),
/// eps carrying the sign of the denominator (+ when it is exactly zero).
/// Applied per component in 2D.
template <typename Scalar>
SpatialField<Scalar> apply_cancellation_ratio(const CancellationContext<Scalar>& ctx, const CancellationParams& p,
                                              const DistributionField<Scalar>& df) {
  SpatialField<Scalar> H = perturbation_field(ctx, df);
  const Vector<Scalar> q = df.values.cwiseAbs2() * velocity_weights(ctx.grid);
  const Matrix<Scalar> d = df.values * ctx.weighted_dv;
  const Scalar eps = Scalar(p.eps_bias);
  for (Eigen::Index a = 0; a < d.cols(); ++a)
    for (Eigen::Index s = 0; s < d.rows(); ++s) {
      const Scalar den = d(s, a) + (d(s, a) < Scalar(0) ? -eps : eps);
      H.values(s, a) = -H.values(s, a) + Scalar(p.gamma) * q(s) / den;
    }
  return H;
}

template <typename Scalar = double>
class CancellationController final : public Controller<Scalar> {
 public:
  CancellationController(const EquilibriumSpec& spec, const PhaseGrid<Scalar>& grid, CancellationParams params,
                         FieldSolver<Scalar> solver = FieldSolver<Scalar>())
      : ctx_(spec, grid, solver), params_(params) {
    params_.validate();
  }

  ControllerKind kind() const override {
    return params_.variant == CancellationVariant::linear ? ControllerKind::cancellation
                                                          : ControllerKind::cancellation_ratio;
  }
  bool is_linear() const override { return params_.variant == CancellationVariant::linear; }

  SpatialField<Scalar> apply(const DistributionField<Scalar>& df) const override {
    return params_.variant == CancellationVariant::linear ? apply_cancellation(ctx_, params_, df)
                                                          : apply_cancellation_ratio(ctx_, params_, df);
  }

  const CancellationParams& params() const { return params_; }
  const CancellationContext<Scalar>& context() const { return ctx_; }

 private:
  CancellationContext<Scalar> ctx_;
  CancellationParams params_;
};

}  // namespace vpctl
