#pragma once

#include <vector>

#include "vpctl/grid.hpp"

namespace vpctl {

/// Time series recorded by forward runs.
struct DiagnosticSeries {
  std::vector<double> times;
  std::vector<double> l2_perturbation;  // 1/2 ||f - f_bar||^2
  std::vector<double> electric_energy;  // 1/2 int |E|^2
  std::vector<double> control_energy;   // 1/2 int |H|^2
  std::vector<double> mass;

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }

  void push(double t, double l2, double ee, double ce, double m) {
    times.push_back(t);
    l2_perturbation.push_back(l2);
    electric_energy.push_back(ee);
    control_energy.push_back(ce);
    mass.push_back(m);
  }
};

/// 1/2 ||f - f_bar||^2 with the phase-space quadrature weights.
template <typename Scalar>
Scalar l2_perturbation(const DistributionField<Scalar>& f, const DistributionField<Scalar>& f_bar) {
  if (!(f.grid == f_bar.grid)) throw UsageError("l2_perturbation: fields live on different grids");
  return Scalar(0.5) * weighted_norm_squared(f.grid, f.values - f_bar.values);
}

/// 1/2 int |E|^2 dx (all components).
template <typename Scalar>
Scalar electric_energy(const SpatialField<Scalar>& E) {
  return Scalar(0.5) * E.values.squaredNorm() * E.grid.cell_volume();
}

}  // namespace vpctl
