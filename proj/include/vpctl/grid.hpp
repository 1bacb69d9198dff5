#pragma once

// Phase-space grids, nodal field containers and the quadrature /
// finite-difference helpers shared by every other module.
//
// Storage convention: a distribution is a (spatial nodes) x (velocity nodes)
// column-major matrix. Spatial nodes are ordered x fastest then y, velocity
// nodes v1 fastest then v2. A column therefore holds the whole spatial slab
// for one velocity node and a row holds the velocity slab of one point.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "vpctl/errors.hpp"

namespace vpctl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar = double>
class PhaseGrid {
 public:
  PhaseGrid() = default;

  PhaseGrid(int dim, int nx, int nv, Scalar x_min, Scalar x_max, Scalar v_min, Scalar v_max)
      : dim_(dim), nx_(nx), nv_(nv), x_min_(x_min), x_max_(x_max), v_min_(v_min), v_max_(v_max) {
    if (dim != 1 && dim != 2) throw ConfigError("grid.dim must be 1 or 2");
    if (nx < 4) throw ConfigError("grid.nx must be >= 4");
    if (nv < 4) throw ConfigError("grid.nv must be >= 4");
    if (!(x_max > x_min)) throw ConfigError("grid.x_bounds must satisfy x_min < x_max");
    if (!(v_max > v_min)) throw ConfigError("grid.v_bounds must satisfy v_min < v_max");
  }

  /// Default domain [0, 10 pi] x [-8, 8] (per axis in 2D).
  static PhaseGrid standard(int dim, int nx, int nv) {
    return PhaseGrid(dim, nx, nv, Scalar(0), Scalar(10) * std::numbers::pi_v<Scalar>, Scalar(-8),
                     Scalar(8));
  }

  int dim() const { return dim_; }
  int nx() const { return nx_; }
  int nv() const { return nv_; }
  Scalar x_min() const { return x_min_; }
  Scalar x_max() const { return x_max_; }
  Scalar v_min() const { return v_min_; }
  Scalar v_max() const { return v_max_; }
  Scalar length() const { return x_max_ - x_min_; }

  // Periodic spatial axes: nx cells, x_max identified with x_min.
  Scalar dx() const { return (x_max_ - x_min_) / Scalar(nx_); }
  // Closed velocity axes including both endpoints.
  Scalar dv() const { return (v_max_ - v_min_) / Scalar(nv_ - 1); }

  Scalar x(int i) const { return x_min_ + Scalar(i) * dx(); }
  Scalar v(int j) const { return v_min_ + Scalar(j) * dv(); }

  Eigen::Index spatial_size() const { return dim_ == 1 ? nx_ : Eigen::Index(nx_) * nx_; }
  Eigen::Index velocity_size() const { return dim_ == 1 ? nv_ : Eigen::Index(nv_) * nv_; }
  /// Spatial cell measure dx^dim.
  Scalar cell_volume() const { return dim_ == 1 ? dx() : dx() * dx(); }

  /// Axis indices of a flat spatial / velocity node.
  std::array<int, 2> spatial_index(Eigen::Index s) const {
    return {int(s % nx_), int(s / nx_)};
  }
  std::array<int, 2> velocity_index(Eigen::Index w) const {
    return {int(w % nv_), int(w / nv_)};
  }

  friend bool operator==(const PhaseGrid& a, const PhaseGrid& b) {
    return a.dim_ == b.dim_ && a.nx_ == b.nx_ && a.nv_ == b.nv_ && a.x_min_ == b.x_min_ &&
           a.x_max_ == b.x_max_ && a.v_min_ == b.v_min_ && a.v_max_ == b.v_max_;
  }

 private:
  int dim_ = 1;
  int nx_ = 4;
  int nv_ = 4;
  Scalar x_min_ = 0;
  Scalar x_max_ = 1;
  Scalar v_min_ = -1;
  Scalar v_max_ = 1;
};

/// Nodal values of f, delta f or the adjoint on a phase grid.
template <typename Scalar = double>
struct DistributionField {
  PhaseGrid<Scalar> grid;
  Matrix<Scalar> values;  // spatial_size x velocity_size

  DistributionField() = default;
  explicit DistributionField(const PhaseGrid<Scalar>& g)
      : grid(g), values(Matrix<Scalar>::Zero(g.spatial_size(), g.velocity_size())) {}
  DistributionField(const PhaseGrid<Scalar>& g, Matrix<Scalar> v) : grid(g), values(std::move(v)) {
    if (values.rows() != g.spatial_size() || values.cols() != g.velocity_size())
      throw UsageError("DistributionField: value shape does not match grid");
  }
};

/// Nodal values of a function of space only; one column per vector component.
template <typename Scalar = double>
struct SpatialField {
  PhaseGrid<Scalar> grid;
  Matrix<Scalar> values;  // spatial_size x components

  SpatialField() = default;
  SpatialField(const PhaseGrid<Scalar>& g, int components)
      : grid(g), values(Matrix<Scalar>::Zero(g.spatial_size(), components)) {}
  SpatialField(const PhaseGrid<Scalar>& g, Matrix<Scalar> v) : grid(g), values(std::move(v)) {
    if (values.rows() != g.spatial_size())
      throw UsageError("SpatialField: value rows do not match grid");
  }

  int components() const { return int(values.cols()); }
};

/// Trapezoid weights on the closed velocity grid (tensor product in 2D).
template <typename Scalar>
Vector<Scalar> velocity_weights(const PhaseGrid<Scalar>& grid) {
  const int nv = grid.nv();
  Vector<Scalar> w1 = Vector<Scalar>::Constant(nv, grid.dv());
  w1(0) *= Scalar(0.5);
  w1(nv - 1) *= Scalar(0.5);
  if (grid.dim() == 1) return w1;
  Vector<Scalar> w(grid.velocity_size());
  for (int j2 = 0; j2 < nv; ++j2) w.segment(Eigen::Index(j2) * nv, nv) = w1 * w1(j2);
  return w;
}

/// Spatial coordinates of every node along one axis (0 = x, 1 = y).
template <typename Scalar>
Vector<Scalar> spatial_coordinates(const PhaseGrid<Scalar>& grid, int axis = 0) {
  Vector<Scalar> c(grid.spatial_size());
  for (Eigen::Index s = 0; s < c.size(); ++s) c(s) = grid.x(grid.spatial_index(s)[axis]);
  return c;
}

/// Velocity coordinates of every node along one axis (0 = v1, 1 = v2).
template <typename Scalar>
Vector<Scalar> velocity_coordinates(const PhaseGrid<Scalar>& grid, int axis = 0) {
  Vector<Scalar> c(grid.velocity_size());
  for (Eigen::Index w = 0; w < c.size(); ++w) c(w) = grid.v(grid.velocity_index(w)[axis]);
  return c;
}

/// rho(x) = sum_j f(x, v_j) w_j.
template <typename Scalar>
SpatialField<Scalar> integrate_v(const DistributionField<Scalar>& f) {
  return SpatialField<Scalar>(f.grid, Matrix<Scalar>(f.values * velocity_weights(f.grid)));
}

template <typename Scalar>
Scalar total_mass(const DistributionField<Scalar>& f) {
  return (f.values * velocity_weights(f.grid)).sum() * f.grid.cell_volume();
}

/// Grid-weighted squared L2 norm over phase space (no 1/2 factor).
template <typename Scalar, typename Derived>
Scalar weighted_norm_squared(const PhaseGrid<Scalar>& grid, const Eigen::MatrixBase<Derived>& values) {
  return (values.cwiseAbs2() * velocity_weights(grid)).sum() * grid.cell_volume();
}

/// Derivative along one velocity axis: central in the interior, one-sided
/// second order at both endpoints.
template <typename Scalar>
DistributionField<Scalar> ddv(const DistributionField<Scalar>& f, int axis = 0) {
  const auto& g = f.grid;
  if (axis < 0 || axis >= g.dim()) throw UsageError("ddv: velocity axis out of range");
  const int nv = g.nv();
  const Scalar inv2dv = Scalar(1) / (Scalar(2) * g.dv());
  const Eigen::Index stride = axis == 0 ? 1 : nv;
  DistributionField<Scalar> out(g);
  for (Eigen::Index w = 0; w < g.velocity_size(); ++w) {
    const int j = g.velocity_index(w)[axis];
    auto col = [&](int dj) { return f.values.col(w + dj * stride); };
    if (j == 0) {
      out.values.col(w) = (-Scalar(3) * col(0) + Scalar(4) * col(1) - col(2)) * inv2dv;
    } else if (j == nv - 1) {
      out.values.col(w) = (Scalar(3) * col(0) - Scalar(4) * col(-1) + col(-2)) * inv2dv;
    } else {
      out.values.col(w) = (col(1) - col(-1)) * inv2dv;
    }
  }
  return out;
}

}  // namespace vpctl
