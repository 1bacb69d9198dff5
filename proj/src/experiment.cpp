#include "vpctl/experiment.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <mutex>
#include <sstream>
#include <thread>

#include "vpctl/io.hpp"

namespace vpctl {

using nlohmann::json;

Scale scale_from_string(const std::string& s) {
  if (s == "desk") return Scale::desk;
  if (s == "paper") return Scale::paper;
  throw ConfigError("scale: expected 'desk' or 'paper', got '" + s + "'");
}

std::string to_string(Scale s) { return s == Scale::desk ? "desk" : "paper"; }

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name must not be empty");
  equilibrium.validate();
  if (equilibrium.dim() != grid.dim()) throw ConfigError("equilibrium.kind: does not match grid.dim");
  const bool needs_2d = initial == InitialPreset::two_stream_2d_default;
  if (needs_2d != (grid.dim() == 2)) throw ConfigError("initial_condition.preset: does not match grid.dim");
  if (initial == InitialPreset::bump_on_tail_default && equilibrium.kind != EquilibriumKind::bump_on_tail_1d)
    throw ConfigError("initial_condition.preset: bump_on_tail_default needs a bump_on_tail_1d equilibrium");
  if (!std::isfinite(ic_eps) || ic_eps < 0) throw ConfigError("initial_condition.eps must be >= 0");
  const bool trainable = controller == ControllerKind::time_independent || controller == ControllerKind::low_rank_operator;
  if (trainable && grid.dim() != 1) throw ConfigError("controller.kind: trainable controllers are 1D only");
  if (controller == ControllerKind::cancellation || controller == ControllerKind::cancellation_ratio)
    cancellation.validate();
  if (train && !trainable) throw ConfigError("training.enabled: controller.kind is not trainable");
  if (train && !checkpoint.empty()) throw ConfigError("controller.checkpoint: cannot be combined with training.enabled");
  solver_config().validate();
  if (train) train_config().validate();
  if (noise_sigmas.empty()) throw ConfigError("noise.sigma must list at least one value");
  for (double s : noise_sigmas)
    if (!std::isfinite(s) || s < 0) throw ConfigError("noise.sigma values must be >= 0");
  for (double t : snapshot_times)
    if (!std::isfinite(t) || t < 0 || t > t_end + 1e-9) throw ConfigError("output.snapshot_times must lie in [0, solver.t_end]");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.grid = grid;
  t.equilibrium = equilibrium;
  t.preset = initial;
  t.ic_eps = ic_eps;
  t.poisson = poisson;
  t.dt = dt;
  t.horizon = horizon;
  t.iterations = iterations;
  t.adagrad_steps = adagrad_steps;
  t.lr_adagrad = lr_adagrad;
  t.lr_adam = lr_adam;
  t.perturbation = perturbation;
  t.perturb_initial_data = perturb_initial_data;
  t.eval_every = eval_every;
  t.controller = controller;
  t.layer_dims = layer_dims;
  t.seed = seed;
  return t;
}

SolverConfig ExperimentConfig::solver_config() const {
  SolverConfig s;
  s.dt = dt;
  s.t_end = t_end;
  s.record_every = record_every;
  return s;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

ExperimentConfig one_d_base(Scale scale) {
  ExperimentConfig c;
  c.scale = scale;
  c.grid = scale == Scale::desk ? PhaseGrid<double>::standard(1, 64, 96) : PhaseGrid<double>::standard(1, 100, 200);
  c.dt = 0.2;
  c.t_end = 70.0;
  c.snapshot_times = {0.0, 35.0, 70.0};
  if (scale == Scale::desk) {
    c.horizon = 15.0;
    c.iterations = 300;
    c.adagrad_steps = 50;
  } else {
    c.horizon = 30.0;
    c.iterations = 3000;
    c.adagrad_steps = 200;
  }
  return c;
}

ExperimentConfig two_d_base(Scale scale) {
  ExperimentConfig c;
  c.scale = scale;
  c.grid = scale == Scale::desk ? PhaseGrid<double>::standard(2, 32, 48) : PhaseGrid<double>::standard(2, 70, 120);
  c.equilibrium = EquilibriumSpec::two_stream_2d();
  c.initial = InitialPreset::two_stream_2d_default;
  c.ic_eps = default_amplitude(c.initial);
  c.dt = 0.15;
  c.t_end = 30.0;
  c.snapshot_times = {0.0, 15.0, 30.0};
  return c;
}

void use_bump_on_tail(ExperimentConfig& c) {
  c.equilibrium = EquilibriumSpec::bump_on_tail();
  c.initial = InitialPreset::bump_on_tail_default;
  c.ic_eps = default_amplitude(c.initial);
  c.lr_adagrad = 2e-3;
  c.lr_adam = 3e-4;
}

}  // namespace

const std::vector<PresetInfo>& preset_catalog() {
  static const std::vector<PresetInfo> catalog = {
      {"two_stream_uncontrolled", "Sec. 3.2", "two-stream instability without external field"},
      {"two_stream_time_independent", "Sec. 3.2", "trained time-independent field, two-stream"},
      {"two_stream_feedback", "Sec. 3.2", "trained low-rank feedback operator, two-stream"},
      {"two_stream_cancellation", "Sec. 4.1", "cancellation-based control, gamma = 1"},
      {"two_stream_cancellation_alt_ic", "Sec. 4.1", "cancellation-based control on the alternate initial state"},
      {"two_stream_noise_sweep", "Sec. 3.4", "feedback operator under noisy measurements, sigma in {2e-5, 5e-5, 1e-4}"},
      {"bump_on_tail_uncontrolled", "Sec. 3.3", "bump-on-tail instability without external field"},
      {"bump_on_tail_time_independent", "Sec. 3.3", "trained time-independent field, bump-on-tail"},
      {"bump_on_tail_feedback", "Sec. 3.3", "trained low-rank feedback operator, bump-on-tail"},
      {"bump_on_tail_noise_sweep", "Sec. 3.4", "feedback operator under noisy measurements, sigma in {2.4e-5, 6e-5, 1.2e-4}"},
      {"two_stream_2d_uncontrolled", "Sec. 4.2", "2D2V two-stream instability without external field"},
      {"two_stream_2d_cancellation", "Sec. 4.2", "2D2V cancellation-based control, gamma = 2"},
  };
  return catalog;
}

bool has_preset(const std::string& name) {
  for (const auto& p : preset_catalog())
    if (p.name == name) return true;
  return false;
}

ExperimentConfig make_preset(const std::string& name, Scale scale) {
  if (!has_preset(name)) throw ConfigError("preset: unknown preset '" + name + "'");
  const bool bump = name.rfind("bump_on_tail_", 0) == 0;
  const bool two_d = name.rfind("two_stream_2d_", 0) == 0;
  ExperimentConfig c = two_d ? two_d_base(scale) : one_d_base(scale);
  if (bump) use_bump_on_tail(c);
  c.name = name;
  c.output_dir = std::filesystem::path("out") / name;

  const std::string prefix = two_d ? "two_stream_2d_" : bump ? "bump_on_tail_" : "two_stream_";
  const std::string variant = name.substr(prefix.size());
  if (variant == "uncontrolled") {
    c.controller = ControllerKind::zero;
  } else if (variant == "time_independent") {
    c.controller = ControllerKind::time_independent;
    c.train = true;
    c.companion_uncontrolled = true;
  } else if (variant == "feedback") {
    c.controller = ControllerKind::low_rank_operator;
    c.train = true;
    c.companion_uncontrolled = true;
  } else if (variant == "cancellation" || variant == "cancellation_alt_ic") {
    c.controller = ControllerKind::cancellation;
    c.cancellation.gamma = two_d ? 2.0 : 1.0;
    c.companion_uncontrolled = true;
    if (variant == "cancellation_alt_ic") {
      c.initial = InitialPreset::two_stream_alt;
      c.ic_eps = default_amplitude(c.initial);
    }
  } else if (variant == "noise_sweep") {
    c.controller = ControllerKind::low_rank_operator;
    c.train = true;
    c.companion_uncontrolled = true;
    c.noise_sigmas = bump ? std::vector<double>{2.4e-5, 6e-5, 1.2e-4} : std::vector<double>{2e-5, 5e-5, 1e-4};
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON <-> config

namespace {

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError((path.empty() ? "" : path + ".") + it.key() + ": unknown key");
  }
}

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

void read(const json& j, const std::string& path, const char* key, double& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(join(path, key) + ": expected a number");
  out = v.get<double>();
}

void read(const json& j, const std::string& path, const char* key, int& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(join(path, key) + ": expected an integer");
  out = v.get<int>();
}

void read(const json& j, const std::string& path, const char* key, std::uint64_t& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(join(path, key) + ": expected a non-negative integer");
  out = v.get<std::uint64_t>();
}

void read(const json& j, const std::string& path, const char* key, bool& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(join(path, key) + ": expected true or false");
  out = v.get<bool>();
}

void read(const json& j, const std::string& path, const char* key, std::string& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_string()) throw ConfigError(join(path, key) + ": expected a string");
  out = v.get<std::string>();
}

void read(const json& j, const std::string& path, const char* key, std::vector<double>& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (v.is_number()) {
    out = {v.get<double>()};
    return;
  }
  if (!v.is_array()) throw ConfigError(join(path, key) + ": expected a number or a list of numbers");
  out.clear();
  for (const auto& e : v) {
    if (!e.is_number()) throw ConfigError(join(path, key) + ": expected a list of numbers");
    out.push_back(e.get<double>());
  }
}

void read(const json& j, const std::string& path, const char* key, std::vector<int>& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array()) throw ConfigError(join(path, key) + ": expected a list of integers");
  out.clear();
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<int>() < 1) throw ConfigError(join(path, key) + ": expected positive integers");
    out.push_back(e.get<int>());
  }
}

template <typename Fn>
auto rethrow_with_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ConfigError(path + ": " + msg);
  }
}

std::string poisson_name(PoissonBoundary b) { return b == PoissonBoundary::dirichlet ? "dirichlet" : "periodic"; }

}  // namespace

ExperimentConfig apply_config_json(const json& doc, ExperimentConfig c) {
  check_keys(doc, "", {"name", "seed", "preset", "scale", "grid", "equilibrium", "initial_condition", "controller",
                       "solver", "training", "noise", "output"});
  read(doc, "", "name", c.name);
  read(doc, "", "seed", c.seed);
  if (doc.contains("scale")) {
    std::string s;
    read(doc, "", "scale", s);
    c.scale = rethrow_with_path("scale", [&] { return scale_from_string(s); });
  }

  if (doc.contains("grid")) {
    const json& g = doc.at("grid");
    check_keys(g, "grid", {"dim", "nx", "nv", "x_min", "x_max", "v_min", "v_max"});
    int dim = c.grid.dim(), nx = c.grid.nx(), nv = c.grid.nv();
    double x0 = c.grid.x_min(), x1 = c.grid.x_max(), v0 = c.grid.v_min(), v1 = c.grid.v_max();
    read(g, "grid", "dim", dim);
    read(g, "grid", "nx", nx);
    read(g, "grid", "nv", nv);
    read(g, "grid", "x_min", x0);
    read(g, "grid", "x_max", x1);
    read(g, "grid", "v_min", v0);
    read(g, "grid", "v_max", v1);
    c.grid = PhaseGrid<double>(dim, nx, nv, x0, x1, v0, v1);
  }

  if (doc.contains("equilibrium")) {
    const json& e = doc.at("equilibrium");
    check_keys(e, "equilibrium", {"kind", "vbar", "w1", "w2", "vbar1", "vbar2", "vt", "vbar_x", "vbar_y"});
    if (e.contains("kind")) {
      std::string k;
      read(e, "equilibrium", "kind", k);
      const EquilibriumKind kind = equilibrium_kind_from_string(k);
      if (kind != c.equilibrium.kind) {
        c.equilibrium = kind == EquilibriumKind::two_stream_1d   ? EquilibriumSpec::two_stream()
                        : kind == EquilibriumKind::bump_on_tail_1d ? EquilibriumSpec::bump_on_tail()
                                                                   : EquilibriumSpec::two_stream_2d();
      }
    }
    read(e, "equilibrium", "vbar", c.equilibrium.vbar);
    read(e, "equilibrium", "w1", c.equilibrium.w1);
    read(e, "equilibrium", "w2", c.equilibrium.w2);
    read(e, "equilibrium", "vbar1", c.equilibrium.vbar1);
    read(e, "equilibrium", "vbar2", c.equilibrium.vbar2);
    read(e, "equilibrium", "vt", c.equilibrium.vt);
    read(e, "equilibrium", "vbar_x", c.equilibrium.vbar_x);
    read(e, "equilibrium", "vbar_y", c.equilibrium.vbar_y);
  }

  if (doc.contains("initial_condition")) {
    const json& ic = doc.at("initial_condition");
    check_keys(ic, "initial_condition", {"preset", "eps"});
    if (ic.contains("preset")) {
      std::string p;
      read(ic, "initial_condition", "preset", p);
      c.initial = initial_preset_from_string(p);
      c.ic_eps = default_amplitude(c.initial);
    }
    read(ic, "initial_condition", "eps", c.ic_eps);
  }

  if (doc.contains("controller")) {
    const json& ct = doc.at("controller");
    check_keys(ct, "controller", {"kind", "gamma", "eps_bias", "checkpoint"});
    if (ct.contains("kind")) {
      std::string k;
      read(ct, "controller", "kind", k);
      c.controller = controller_kind_from_string(k);
      if (c.controller == ControllerKind::cancellation_ratio) c.cancellation.variant = CancellationVariant::ratio;
      if (c.controller == ControllerKind::cancellation) c.cancellation.variant = CancellationVariant::linear;
    }
    read(ct, "controller", "gamma", c.cancellation.gamma);
    read(ct, "controller", "eps_bias", c.cancellation.eps_bias);
    read(ct, "controller", "checkpoint", c.checkpoint);
  }

  if (doc.contains("solver")) {
    const json& s = doc.at("solver");
    check_keys(s, "solver", {"dt", "t_end", "record_every", "poisson"});
    read(s, "solver", "dt", c.dt);
    read(s, "solver", "t_end", c.t_end);
    read(s, "solver", "record_every", c.record_every);
    if (s.contains("poisson")) {
      std::string p;
      read(s, "solver", "poisson", p);
      if (p == "dirichlet") c.poisson = PoissonBoundary::dirichlet;
      else if (p == "periodic") c.poisson = PoissonBoundary::periodic;
      else throw ConfigError("solver.poisson: expected 'dirichlet' or 'periodic', got '" + p + "'");
    }
  }

  if (doc.contains("training")) {
    const json& t = doc.at("training");
    check_keys(t, "training", {"enabled", "horizon", "iterations", "adagrad_steps", "lr_adagrad", "lr_adam",
                               "eval_every", "perturb_initial_data", "perturbation", "layer_dims"});
    read(t, "training", "enabled", c.train);
    read(t, "training", "horizon", c.horizon);
    read(t, "training", "iterations", c.iterations);
    read(t, "training", "adagrad_steps", c.adagrad_steps);
    read(t, "training", "lr_adagrad", c.lr_adagrad);
    read(t, "training", "lr_adam", c.lr_adam);
    read(t, "training", "eval_every", c.eval_every);
    read(t, "training", "perturb_initial_data", c.perturb_initial_data);
    read(t, "training", "layer_dims", c.layer_dims);
    if (t.contains("perturbation")) {
      const json& p = t.at("perturbation");
      check_keys(p, "training.perturbation", {"eps_p", "k_modes", "n_modes"});
      read(p, "training.perturbation", "eps_p", c.perturbation.eps_p);
      read(p, "training.perturbation", "k_modes", c.perturbation.k_modes);
      read(p, "training.perturbation", "n_modes", c.perturbation.n_modes);
    }
  }

  if (doc.contains("noise")) {
    const json& n = doc.at("noise");
    check_keys(n, "noise", {"sigma"});
    read(n, "noise", "sigma", c.noise_sigmas);
  }

  if (doc.contains("output")) {
    const json& o = doc.at("output");
    check_keys(o, "output", {"dir", "snapshot_times", "companion_uncontrolled"});
    std::string dir = c.output_dir.string();
    read(o, "output", "dir", dir);
    c.output_dir = dir;
    read(o, "output", "snapshot_times", c.snapshot_times);
    read(o, "output", "companion_uncontrolled", c.companion_uncontrolled);
  }
  return c;
}

ExperimentConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig base;
  if (doc.contains("preset")) {
    std::string name, scale = "desk";
    read(doc, "", "preset", name);
    read(doc, "", "scale", scale);
    base = make_preset(name, rethrow_with_path("scale", [&] { return scale_from_string(scale); }));
  }
  ExperimentConfig c = apply_config_json(doc, std::move(base));
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return parse_config(doc);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["seed"] = c.seed;
  j["scale"] = to_string(c.scale);
  j["grid"] = {{"dim", c.grid.dim()},     {"nx", c.grid.nx()},       {"nv", c.grid.nv()},
               {"x_min", c.grid.x_min()}, {"x_max", c.grid.x_max()}, {"v_min", c.grid.v_min()},
               {"v_max", c.grid.v_max()}};
  const auto& e = c.equilibrium;
  j["equilibrium"] = {{"kind", std::string(to_string(e.kind))},
                      {"vbar", e.vbar},
                      {"w1", e.w1},
                      {"w2", e.w2},
                      {"vbar1", e.vbar1},
                      {"vbar2", e.vbar2},
                      {"vt", e.vt},
                      {"vbar_x", e.vbar_x},
                      {"vbar_y", e.vbar_y}};
  j["initial_condition"] = {{"preset", std::string(to_string(c.initial))}, {"eps", c.ic_eps}};
  j["controller"] = {{"kind", std::string(to_string(c.controller))},
                     {"gamma", c.cancellation.gamma},
                     {"eps_bias", c.cancellation.eps_bias},
                     {"checkpoint", c.checkpoint}};
  j["solver"] = {{"dt", c.dt}, {"t_end", c.t_end}, {"record_every", c.record_every}, {"poisson", poisson_name(c.poisson)}};
  j["training"] = {{"enabled", c.train},
                   {"horizon", c.horizon},
                   {"iterations", c.iterations},
                   {"adagrad_steps", c.adagrad_steps},
                   {"lr_adagrad", c.lr_adagrad},
                   {"lr_adam", c.lr_adam},
                   {"eval_every", c.eval_every},
                   {"perturb_initial_data", c.perturb_initial_data},
                   {"perturbation",
                    {{"eps_p", c.perturbation.eps_p},
                     {"k_modes", c.perturbation.k_modes},
                     {"n_modes", c.perturbation.n_modes}}},
                   {"layer_dims", c.layer_dims}};
  j["noise"] = {{"sigma", c.noise_sigmas}};
  j["output"] = {{"dir", c.output_dir.string()},
                 {"snapshot_times", c.snapshot_times},
                 {"companion_uncontrolled", c.companion_uncontrolled}};
  return j;
}

// ---------------------------------------------------------------------------
// Runner

int thread_count_from_env() {
  const char* env = std::getenv("VPCTL_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("VPCTL_THREADS must be a positive integer");
  return int(std::min<long>(n, 256));
}

namespace {

std::string time_label(double t) {
  std::ostringstream os;
  if (std::abs(t - std::round(t)) < 1e-9)
    os << std::llround(t);
  else
    os << t;
  return "t" + os.str();
}

std::string sigma_label(double s) {
  std::ostringstream os;
  os << "sigma_" << s;
  return os.str();
}

// Writes snapshots at the recorded steps nearest to the requested times.
class SnapshotWriter {
 public:
  SnapshotWriter(const ExperimentConfig& cfg, const DistributionField<double>& f_bar, std::filesystem::path dir)
      : times_(cfg.snapshot_times), half_window_(0.5 * cfg.dt * cfg.record_every + 1e-9), f_bar_(f_bar),
        dir_(std::move(dir)), done_(times_.size(), false) {}

  void operator()(int, double t, const DistributionField<double>& f) {
    for (std::size_t k = 0; k < times_.size(); ++k) {
      if (done_[k] || std::abs(t - times_[k]) > half_window_) continue;
      done_[k] = true;
      const std::string label = time_label(times_[k]);
      if (f.grid.dim() == 1) {
        io::write_field_snapshot(f, dir_ / ("f_" + label));
      } else {
        const DistributionField<double> df(f.grid, Matrix<double>(f.values - f_bar_.values));
        io::write_field_snapshot(integrate_v(df), dir_ / ("delta_rho_" + label));
        io::write_velocity_slice(f, f.grid.nx() / 2, f.grid.nx() / 2, dir_ / ("f_slice_" + label));
      }
    }
  }

 private:
  std::vector<double> times_;
  double half_window_;
  const DistributionField<double>& f_bar_;
  std::filesystem::path dir_;
  std::vector<bool> done_;
};

std::unique_ptr<Controller<double>> build_controller(const ExperimentConfig& cfg, const Vector<double>* trained,
                                                     const std::vector<int>& dims) {
  switch (cfg.controller) {
    case ControllerKind::zero: return std::make_unique<ZeroController<double>>();
    case ControllerKind::cancellation:
    case ControllerKind::cancellation_ratio: {
      CancellationParams p = cfg.cancellation;
      p.variant = cfg.controller == ControllerKind::cancellation ? CancellationVariant::linear : CancellationVariant::ratio;
      return std::make_unique<CancellationController<double>>(cfg.equilibrium, cfg.grid, p,
                                                              FieldSolver<double>(cfg.poisson));
    }
    case ControllerKind::time_independent:
    case ControllerKind::low_rank_operator: break;
  }
  if (trained) return make_trained_controller(cfg.controller, cfg.grid, *trained, dims);
  if (!cfg.checkpoint.empty()) {
    if (cfg.controller == ControllerKind::time_independent)
      return std::make_unique<TimeIndependentController<double>>(cfg.grid, io::checkpoint_read_theta(cfg.checkpoint));
    return std::make_unique<LowRankController<double>>(cfg.grid, io::checkpoint_read_mlp(cfg.checkpoint));
  }
  if (cfg.controller == ControllerKind::time_independent)
    return std::make_unique<TimeIndependentController<double>>(cfg.grid);
  return std::make_unique<LowRankController<double>>(cfg.grid, mlp_init<double>(cfg.seed, cfg.layer_dims));
}

struct ReplicaOutcome {
  DiagnosticSeries series;
  std::string error;
  int blowup_step = -1;
};

ReplicaOutcome run_replica(const ExperimentConfig& cfg, const System& system, const Controller<double>& controller,
                           const DistributionField<double>& f0, double sigma, std::uint64_t noise_seed,
                           const std::filesystem::path& dir) {
  ReplicaOutcome out;
  FeedbackNoise noise(sigma, noise_seed);
  SnapshotWriter snaps(cfg, system.f_bar(), dir / "snapshots");
  StateObserver<double> observer = [&](int n, double t, const DistributionField<double>& f) { snaps(n, t, f); };
  try {
    out.series = system.run_forward(f0, controller, cfg.solver_config(), sigma > 0 ? &noise : nullptr, observer).series;
  } catch (const ForwardBlowup& e) {
    out.series = e.partial();
    out.error = e.what();
    out.blowup_step = e.step();
  }
  io::write_series_csv(out.series, dir / "series.csv");
  return out;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const LogSink& log) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  std::filesystem::create_directories(cfg.output_dir);
  {
    std::ofstream os(cfg.output_dir / "config.json");
    if (!os) throw std::runtime_error("cannot write '" + (cfg.output_dir / "config.json").string() + "'");
    os << config_to_json(cfg).dump(2) << '\n';
  }

  const System system(cfg.grid, cfg.equilibrium, FieldSolver<double>(cfg.poisson));
  const DistributionField<double> f0 = initial_condition(cfg.initial, cfg.equilibrium, cfg.grid, cfg.ic_eps);

  std::unique_ptr<Controller<double>> controller;
  if (cfg.train) {
    say("training " + std::string(to_string(cfg.controller)) + " for " + std::to_string(cfg.iterations) + " iterations");
    const TrainResult tr = train(cfg.train_config(), [&](const TrainIteration& it) {
      if (!std::isnan(it.future_loss))
        say("  iteration " + std::to_string(it.iteration) + ": future loss " + std::to_string(it.future_loss));
    });
    write_train_record_csv(tr.record, cfg.output_dir / "train_record.csv");
    if (cfg.controller == ControllerKind::time_independent) {
      io::checkpoint_write(cfg.output_dir / "checkpoint.bin", tr.best_params);
    } else {
      MlpParams<double> p(tr.layer_dims);
      p.unflatten(tr.best_params);
      io::checkpoint_write(cfg.output_dir / "checkpoint.bin", p);
    }
    say("best iteration " + std::to_string(tr.record.best_iteration) + ", future loss " +
        std::to_string(tr.record.best_future_loss));
    controller = build_controller(cfg, &tr.best_params, tr.layer_dims);
  } else {
    controller = build_controller(cfg, nullptr, cfg.layer_dims);
  }

  // Replica i uses noise seed (seed + 1 + i); the uncontrolled companion is noise free.
  const std::size_t n_rep = cfg.noise_sigmas.size();
  const bool sweep = n_rep > 1;
  std::vector<ReplicaOutcome> outcomes(n_rep);
  std::vector<std::filesystem::path> dirs(n_rep);
  for (std::size_t i = 0; i < n_rep; ++i)
    dirs[i] = sweep ? cfg.output_dir / sigma_label(cfg.noise_sigmas[i]) : cfg.output_dir;

  const int threads = std::min<int>(thread_count_from_env(), int(n_rep));
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < n_rep; i = next++) {
      try {
        outcomes[i] = run_replica(cfg, system, *controller, f0, cfg.noise_sigmas[i], cfg.seed + 1 + i, dirs[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  RunSummary summary;
  for (std::size_t i = 0; i < n_rep; ++i) {
    summary.series_files.push_back(dirs[i] / "series.csv");
    if (sweep && !outcomes[i].series.empty())
      say("sigma " + std::to_string(cfg.noise_sigmas[i]) + ": final l2 " +
          std::to_string(outcomes[i].series.l2_perturbation.back()));
  }

  if (cfg.companion_uncontrolled) {
    const ZeroController<double> zero;
    const ReplicaOutcome comp = run_replica(cfg, system, zero, f0, 0.0, 0, cfg.output_dir / "uncontrolled");
    summary.series_files.push_back(cfg.output_dir / "uncontrolled" / "series.csv");
    if (!comp.series.empty()) say("uncontrolled companion: final l2 " + std::to_string(comp.series.l2_perturbation.back()));
  }

  summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (!outcomes.front().series.empty()) summary.final_l2 = outcomes.front().series.l2_perturbation.back();
  for (const auto& o : outcomes)
    if (o.blowup_step >= 0) throw NumericalBlowup(o.blowup_step, "run '" + cfg.name + "' diverged (partial series written)");
  return summary;
}

}  // namespace vpctl
