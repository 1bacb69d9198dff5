#include "vpctl/training.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>

namespace vpctl {

void TrainConfig::validate() const {
  if (grid.dim() != 1) throw ConfigError("training: only 1D grids are trainable");
  if (!(horizon > 0)) throw ConfigError("training.horizon must be > 0");
  if (!(dt > 0)) throw ConfigError("solver.dt must be > 0");
  if (iterations < 0) throw ConfigError("training.iterations must be >= 0");
  if (adagrad_steps < 0 || adagrad_steps > iterations)
    throw ConfigError("training.adagrad_steps must lie in [0, iterations]");
  if (eval_every < 1) throw ConfigError("training.eval_every must be >= 1");
  if (!(lr_adagrad > 0) || !(lr_adam > 0)) throw ConfigError("training: learning rates must be > 0");
  if (controller != ControllerKind::time_independent && controller != ControllerKind::low_rank_operator)
    throw ConfigError("training.controller must be time_independent or low_rank_operator");
  perturbation.validate();
}

double running_loss(const TrajectoryBuffer<double>& traj, const DistributionField<double>& f_bar) {
  if (traj.states.empty()) throw UsageError("running_loss: trajectory was not stored");
  double sum = 0;
  for (std::size_t n = 0; n + 1 < traj.states.size(); ++n)
    sum += weighted_norm_squared(traj.grid, traj.states[n] - f_bar.values);
  return 0.5 * sum * traj.dt;
}

double deviation_norm_at(const System& system, const DistributionField<double>& f0, const Controller<double>& c,
                         double dt, double t_end) {
  SolverConfig cfg;
  cfg.dt = dt;
  cfg.t_end = t_end;
  cfg.record_every = std::max(1, int(std::lround(t_end / dt)));
  try {
    const auto run = system.run_forward(f0, c, cfg);
    return std::sqrt(weighted_norm_squared(system.grid(), run.final_state - system.f_bar().values));
  } catch (const NumericalBlowup&) {
    return std::numeric_limits<double>::infinity();
  }
}

double evaluate_running_loss(const System& system, const DistributionField<double>& f0, const Controller<double>& c,
                             double dt, double horizon) {
  SolverConfig cfg;
  cfg.dt = dt;
  cfg.t_end = horizon;
  cfg.store_trajectory = true;
  cfg.record_every = std::max(1, int(std::lround(horizon / dt)));
  try {
    return running_loss(system.run_forward(f0, c, cfg).trajectory, system.f_bar());
  } catch (const NumericalBlowup&) {
    return std::numeric_limits<double>::infinity();
  }
}

namespace {

void check_buffers(const TrajectoryBuffer<double>& traj, const std::vector<Matrix<double>>& lambda) {
  if (traj.states.empty()) throw UsageError("assemble_gradient: trajectory was not stored");
  if (lambda.size() != traj.states.size()) throw UsageError("assemble_gradient: adjoint and trajectory lengths differ");
}

// g^n(x_i) = sum_j lambda^n d_v f^n w_j for each step n < N, as columns.
Matrix<double> adjoint_sensitivity(const TrajectoryBuffer<double>& traj, const std::vector<Matrix<double>>& lambda) {
  const int steps = int(traj.states.size()) - 1;
  const Vector<double> w = velocity_weights(traj.grid);
  Matrix<double> g(traj.grid.spatial_size(), steps);
  for (int n = 0; n < steps; ++n) {
    const DistributionField<double> dfdv = ddv(DistributionField<double>(traj.grid, traj.states[n]));
    g.col(n) = lambda[n].cwiseProduct(dfdv.values) * w;
  }
  return g;
}

}  // namespace

Vector<double> assemble_gradient_time_independent(const TrajectoryBuffer<double>& traj,
                                                  const std::vector<Matrix<double>>& lambda,
                                                  const TimeIndependentController<double>& c) {
  check_buffers(traj, lambda);
  const Matrix<double> g = adjoint_sensitivity(traj, lambda);
  return c.basis().transpose() * g.rowwise().sum() * (traj.grid.dx() * traj.dt);
}

MlpParams<double> assemble_gradient_low_rank(const TrajectoryBuffer<double>& traj,
                                             const std::vector<Matrix<double>>& lambda, const System& system,
                                             const LowRankController<double>& c) {
  check_buffers(traj, lambda);
  const Matrix<double> g = adjoint_sensitivity(traj, lambda);  // nx x N
  const Matrix<double> a = c.basis() * g * traj.grid.dx();     // 31 x N
  const int steps = int(g.cols());
  const Eigen::Index nodes = traj.grid.spatial_size() * traj.grid.velocity_size();
  Matrix<double> df(nodes, steps);
  for (int n = 0; n < steps; ++n) df.col(n) = (traj.states[n] - system.f_bar().values).reshaped();
  Matrix<double> cot = (a * df.transpose()) * traj.dt;
  cot = cot * c.quadrature().asDiagonal();
  return mlp_backward_params_batch(c.params(), c.inputs(), cot);
}

Vector<double> assemble_gradient(const TrajectoryBuffer<double>& traj, const std::vector<Matrix<double>>& lambda,
                                 const System& system, const Controller<double>& c) {
  if (auto* ti = dynamic_cast<const TimeIndependentController<double>*>(&c))
    return assemble_gradient_time_independent(traj, lambda, *ti);
  if (auto* lr = dynamic_cast<const LowRankController<double>*>(&c))
    return assemble_gradient_low_rank(traj, lambda, system, *lr).flatten();
  throw UsageError("assemble_gradient: controller has no trainable parameters");
}

std::unique_ptr<Controller<double>> make_trained_controller(ControllerKind kind, const PhaseGrid<double>& grid,
                                                            const Vector<double>& flat,
                                                            const std::vector<int>& layer_dims) {
  if (kind == ControllerKind::time_independent) return std::make_unique<TimeIndependentController<double>>(grid, flat);
  if (kind == ControllerKind::low_rank_operator) {
    MlpParams<double> p(layer_dims);
    p.unflatten(flat);
    return std::make_unique<LowRankController<double>>(grid, std::move(p));
  }
  throw UsageError("make_trained_controller: kind is not trainable");
}

namespace {

// Mutable view over the trainable controller's flat parameters.
class Trainable {
 public:
  Trainable(const TrainConfig& cfg) : kind_(cfg.controller) {
    if (kind_ == ControllerKind::time_independent) {
      ti_ = std::make_unique<TimeIndependentController<double>>(cfg.grid);
    } else {
      lr_ = std::make_unique<LowRankController<double>>(cfg.grid, mlp_init<double>(cfg.seed ^ 0x9e3779b97f4a7c15ull,
                                                                                   cfg.layer_dims));
    }
  }

  const Controller<double>& controller() const {
    return ti_ ? static_cast<const Controller<double>&>(*ti_) : *lr_;
  }

  Vector<double> flat() const { return ti_ ? ti_->theta() : lr_->params().flatten(); }

  void set_flat(const Vector<double>& p) {
    if (ti_) {
      ti_->mutable_theta() = p;
    } else {
      lr_->mutable_params().unflatten(p);
      lr_->refresh_kernel();
    }
  }

 private:
  ControllerKind kind_;
  std::unique_ptr<TimeIndependentController<double>> ti_;
  std::unique_ptr<LowRankController<double>> lr_;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainProgress& progress) {
  cfg.validate();
  const System system(cfg.grid, cfg.equilibrium, FieldSolver<double>(cfg.poisson));
  const DistributionField<double> f0 = initial_condition(cfg.preset, cfg.equilibrium, cfg.grid, cfg.ic_eps);
  Trainable model(cfg);
  std::mt19937_64 rng(cfg.seed);

  Vector<double> params = model.flat();
  OptimizerState<double> opt(OptimizerKind::adagrad, cfg.lr_adagrad, params.size());

  TrainResult result;
  result.kind = cfg.controller;
  result.layer_dims = cfg.controller == ControllerKind::low_rank_operator ? cfg.layer_dims : std::vector<int>{};
  TrainRecord& rec = result.record;

  auto evaluate = [&](int updates) {
    const double fl = deviation_norm_at(system, f0, model.controller(), cfg.dt, 2 * cfg.horizon);
    if (updates == 0) rec.initial_future_loss = fl;
    if (fl < rec.best_future_loss) {
      rec.best_future_loss = fl;
      rec.best_iteration = updates;
      result.best_params = params;
    }
    return fl;
  };

  SolverConfig scfg;
  scfg.dt = cfg.dt;
  scfg.t_end = cfg.horizon;
  scfg.store_trajectory = true;
  scfg.record_every = std::max(1, scfg.steps());

  for (int it = 0; it < cfg.iterations; ++it) {
    TrainIteration row;
    row.iteration = it;
    if (it % cfg.eval_every == 0) row.future_loss = evaluate(it);
    if (it == cfg.adagrad_steps) opt.reset(OptimizerKind::adam, cfg.lr_adam);

    DistributionField<double> start = f0;
    if (cfg.perturb_initial_data) start.values += sample_training_perturbation(cfg.perturbation, cfg.grid, rng).values;

    try {
      const auto run = system.run_forward(start, model.controller(), scfg);
      row.running_loss = running_loss(run.trajectory, system.f_bar());
      const auto lambda = system.run_adjoint(run.trajectory, model.controller());
      const Vector<double> grad = assemble_gradient(run.trajectory, lambda, system, model.controller());
      if (!grad.allFinite()) throw NumericalBlowup(it, "gradient");
      optimizer_step(opt, Eigen::Ref<Vector<double>>(params), grad);
      model.set_flat(params);
    } catch (const NumericalBlowup&) {
      row.skipped = true;
    }
    rec.rows.push_back(row);
    if (progress) progress(row);
  }
  TrainIteration last;
  last.iteration = cfg.iterations;
  last.future_loss = evaluate(cfg.iterations);
  rec.rows.push_back(last);
  if (progress) progress(last);

  result.final_params = params;
  if (result.best_params.size() == 0) result.best_params = params;
  return result;
}

namespace {
std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::general, 17);
  return std::string(buf.data(), p);
}
}  // namespace

void write_train_record_csv(const TrainRecord& record, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "iteration,running_loss,future_loss,skipped\n";
  for (const auto& r : record.rows)
    os << r.iteration << ',' << fmt(r.running_loss) << ',' << fmt(r.future_loss) << ',' << (r.skipped ? 1 : 0) << '\n';
}

}  // namespace vpctl
