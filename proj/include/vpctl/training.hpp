#pragma once

// Adjoint-state training of the time-independent and low-rank controllers.
//
// Gradient (frozen-perturbation approximation):
//   dJ/dtheta ~= sum_n dt sum_{i,j} (dH/dtheta)[delta f^n](x_i) lambda^n d_v f^n w_ij
// with lambda from the backward semi-Lagrangian sweep. Loss and gradient use
// the left-endpoint rule over steps n = 0..N-1.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

#include "vpctl/controllers.hpp"
#include "vpctl/optim.hpp"
#include "vpctl/solver.hpp"

namespace vpctl {

using System = VlasovPoisson<double>;

struct TrainConfig {
  PhaseGrid<double> grid = PhaseGrid<double>::standard(1, 100, 200);
  EquilibriumSpec equilibrium = EquilibriumSpec::two_stream();
  InitialPreset preset = InitialPreset::two_stream_default;
  double ic_eps = 1e-3;
  PoissonBoundary poisson = PoissonBoundary::dirichlet;
  double dt = 0.2;
  double horizon = 30.0;
  int iterations = 3000;
  int adagrad_steps = 200;
  double lr_adagrad = 5e-3;
  double lr_adam = 5e-4;
  PerturbationSpec perturbation;
  bool perturb_initial_data = true;
  int eval_every = 10;
  ControllerKind controller = ControllerKind::low_rank_operator;
  std::vector<int> layer_dims = {2, 64, 32, 31};
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainIteration {
  int iteration = 0;
  double running_loss = std::numeric_limits<double>::quiet_NaN();
  double future_loss = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
  bool skipped = false;
};

struct TrainRecord {
  std::vector<TrainIteration> rows;  // one per iteration, plus a final evaluation row
  int best_iteration = 0;            // number of updates applied to the best snapshot
  double best_future_loss = std::numeric_limits<double>::infinity();
  double initial_future_loss = std::numeric_limits<double>::infinity();
};

struct TrainResult {
  ControllerKind kind = ControllerKind::low_rank_operator;
  Vector<double> best_params;   // flat: theta or flattened MLP
  Vector<double> final_params;
  std::vector<int> layer_dims;  // MLP only
  TrainRecord record;
};

/// 1/2 sum_{n<N} ||f^n - f_bar||^2 dt.
double running_loss(const TrajectoryBuffer<double>& traj, const DistributionField<double>& f_bar);

/// ||f(t_end) - f_bar||_2 for a noise-free run (infinity on blowup).
double deviation_norm_at(const System& system, const DistributionField<double>& f0, const Controller<double>& c,
                         double dt, double t_end);

/// Noise-free running loss over [0, horizon].
double evaluate_running_loss(const System& system, const DistributionField<double>& f0, const Controller<double>& c,
                             double dt, double horizon);

Vector<double> assemble_gradient_time_independent(const TrajectoryBuffer<double>& traj,
                                                  const std::vector<Matrix<double>>& lambda,
                                                  const TimeIndependentController<double>& c);

MlpParams<double> assemble_gradient_low_rank(const TrajectoryBuffer<double>& traj,
                                             const std::vector<Matrix<double>>& lambda, const System& system,
                                             const LowRankController<double>& c);

/// Flat gradient for either trainable controller.
Vector<double> assemble_gradient(const TrajectoryBuffer<double>& traj, const std::vector<Matrix<double>>& lambda,
                                 const System& system, const Controller<double>& c);

/// Trainable controller built from flat parameters.
std::unique_ptr<Controller<double>> make_trained_controller(ControllerKind kind, const PhaseGrid<double>& grid,
                                                            const Vector<double>& flat,
                                                            const std::vector<int>& layer_dims);

using TrainProgress = std::function<void(const TrainIteration&)>;

TrainResult train(const TrainConfig& cfg, const TrainProgress& progress = {});

void write_train_record_csv(const TrainRecord& record, const std::filesystem::path& path);

}  // namespace vpctl
