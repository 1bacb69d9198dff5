#pragma once

// Experiment configuration, named presets and the runner behind `vpctl run`.
//
// A config is a JSON document. It either names a preset (optionally with a
// scale) and overrides individual fields, or spells every block out:
//
//   {
//     "name": "my_run", "seed": 0, "preset": "two_stream_cancellation", "scale": "desk",
//     "grid": {"dim": 1, "nx": 64, "nv": 96, "x_min": 0, "x_max": 31.4159, "v_min": -8, "v_max": 8},
//     "equilibrium": {"kind": "two_stream_1d", "vbar": 2.4},
//     "initial_condition": {"preset": "two_stream_default", "eps": 0.001},
//     "controller": {"kind": "cancellation", "gamma": 1.0, "eps_bias": 1e-8, "checkpoint": ""},
//     "solver": {"dt": 0.2, "t_end": 70, "record_every": 1, "poisson": "dirichlet"},
//     "training": {"enabled": false, "horizon": 30, "iterations": 3000, ...},
//     "noise": {"sigma": [0.0]},
//     "output": {"dir": "out", "snapshot_times": [0, 35, 70], "companion_uncontrolled": false}
//   }
//
// Unknown keys anywhere are rejected with the offending path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vpctl/training.hpp"

namespace vpctl {

enum class Scale { desk, paper };

Scale scale_from_string(const std::string& s);
std::string to_string(Scale s);

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;
  Scale scale = Scale::desk;

  PhaseGrid<double> grid = PhaseGrid<double>::standard(1, 64, 96);
  EquilibriumSpec equilibrium = EquilibriumSpec::two_stream();
  InitialPreset initial = InitialPreset::two_stream_default;
  double ic_eps = 1e-3;

  ControllerKind controller = ControllerKind::zero;
  CancellationParams cancellation;
  std::string checkpoint;  // trained controller parameters to load instead of training

  double dt = 0.2;
  double t_end = 70.0;
  int record_every = 1;
  PoissonBoundary poisson = PoissonBoundary::dirichlet;

  bool train = false;
  double horizon = 30.0;
  int iterations = 3000;
  int adagrad_steps = 200;
  double lr_adagrad = 5e-3;
  double lr_adam = 5e-4;
  int eval_every = 10;
  bool perturb_initial_data = true;
  PerturbationSpec perturbation;
  std::vector<int> layer_dims = {2, 64, 32, 31};

  std::vector<double> noise_sigmas = {0.0};

  std::filesystem::path output_dir = "out";
  std::vector<double> snapshot_times = {0.0, 35.0, 70.0};
  bool companion_uncontrolled = false;

  void validate() const;
  TrainConfig train_config() const;
  SolverConfig solver_config() const;
};

struct PresetInfo {
  std::string name;
  std::string reproduces;  // where in the source study the setup comes from
  std::string description;
};

const std::vector<PresetInfo>& preset_catalog();
bool has_preset(const std::string& name);
ExperimentConfig make_preset(const std::string& name, Scale scale = Scale::desk);

/// Applies a JSON document on top of `base` (strict keys, typed values).
ExperimentConfig apply_config_json(const nlohmann::json& doc, ExperimentConfig base = {});
/// Parses a document; a "preset" key selects the base configuration.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

struct RunSummary {
  double final_l2 = 0;     // last recorded l2_perturbation of the first run
  double wall_seconds = 0;
  std::vector<std::filesystem::path> series_files;
};

/// Worker threads for sweep fan-out, from VPCTL_THREADS (default 1).
int thread_count_from_env();

using LogSink = std::function<void(const std::string&)>;

/// Executes the experiment and writes all artifacts below cfg.output_dir.
RunSummary run_experiment(const ExperimentConfig& cfg, const LogSink& log = {});

}  // namespace vpctl
