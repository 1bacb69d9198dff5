// vpctl: run Vlasov-Poisson control experiments from a config or a preset.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>

#include "vpctl/experiment.hpp"

namespace {

int list_presets(bool as_json) {
  const auto& catalog = vpctl::preset_catalog();
  if (as_json) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : catalog)
      out.push_back({{"name", p.name}, {"reproduces", p.reproduces}, {"description", p.description}});
    std::cout << out.dump(2) << '\n';
    return 0;
  }
  for (const auto& p : catalog) std::printf("%-32s %-9s %s\n", p.name.c_str(), p.reproduces.c_str(), p.description.c_str());
  return 0;
}

int run(const vpctl::ExperimentConfig& cfg) {
  const auto log = [](const std::string& line) { std::cerr << line << '\n'; };
  const vpctl::RunSummary s = vpctl::run_experiment(cfg, log);
  std::printf("%s: final l2_perturbation %.6e, wall time %.2f s, output %s\n", cfg.name.c_str(), s.final_l2,
              s.wall_seconds, cfg.output_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vlasov-Poisson feedback control experiments"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "run an experiment from a JSON config or a named preset");
  std::string config_path, preset, scale = "desk", out_dir;
  std::uint64_t seed = 0;
  run_cmd->add_option("config", config_path, "experiment config (JSON)");
  auto* preset_opt = run_cmd->add_option("--preset", preset, "named preset (see list-presets)");
  run_cmd->add_option("--scale", scale, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  auto* seed_opt = run_cmd->add_option("--seed", seed, "master seed");
  auto* out_opt = run_cmd->add_option("--out", out_dir, "output directory");

  auto* list_cmd = app.add_subcommand("list-presets", "list the built-in presets");
  bool as_json = false;
  list_cmd->add_flag("--json", as_json, "machine-readable listing");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (list_cmd->parsed()) return list_presets(as_json);

    const bool have_config = !config_path.empty();
    const bool have_preset = preset_opt->count() > 0;
    if (have_config == have_preset) {
      std::cerr << "error: give exactly one of <config> or --preset\n";
      return 2;
    }
    vpctl::ExperimentConfig cfg;
    if (have_config) {
      cfg = vpctl::load_config(config_path);
    } else {
      cfg = vpctl::make_preset(preset, vpctl::scale_from_string(scale));
    }
    if (seed_opt->count()) cfg.seed = seed;
    if (out_opt->count()) cfg.output_dir = out_dir;
    cfg.validate();
    return run(cfg);
  } catch (const vpctl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const vpctl::NumericalBlowup& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
