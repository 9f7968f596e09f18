// Copyright 2026 The bpbnn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Command-line front end: run sweeps, render plots, validate configs.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "bpbnn/config.hpp"
#include "bpbnn/experiments.hpp"
#include "bpbnn/render.hpp"

namespace {

bpbnn::ExperimentConfig resolve_config(const std::string& arg) {
  constexpr std::string_view kPrefix = "preset:";
  if (arg.starts_with(kPrefix)) return bpbnn::preset(arg.substr(kPrefix.size()));
  return bpbnn::load_config(arg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian parallel-branching network theory and HMC sweeps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("bpbnn ") + bpbnn::kVersion);

  std::string config_arg;
  std::string output_dir;
  int threads = 0;
  bool quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Run a sweep from a config file or preset:<name>");
  run_cmd->add_option("config", config_arg, "Config path or preset:<name>")->required();
  run_cmd->add_option("-o,--output-dir", output_dir, "Override the output directory");
  run_cmd->add_option("-j,--threads", threads, "Override the thread count")
      ->check(CLI::PositiveNumber);
  run_cmd->add_flag("-q,--quiet", quiet, "Only print warnings and errors");

  std::string csv_path;
  std::string spec_path;
  std::string render_dir;
  auto* render_cmd = app.add_subcommand("render", "Render SVG plots from a results CSV");
  render_cmd->add_option("csv", csv_path, "results.csv")->required();
  render_cmd->add_option("spec", spec_path, "plot_spec.json")->required();
  render_cmd->add_option("-o,--output-dir", render_dir, "Directory for the SVG files");

  std::string validate_arg;
  auto* validate_cmd = app.add_subcommand("validate", "Check a config and print it normalized");
  validate_cmd->add_option("config", validate_arg, "Config path or preset:<name>")->required();

  auto* presets_cmd = app.add_subcommand("presets", "List or show the shipped presets");
  presets_cmd->require_subcommand(1);
  auto* list_cmd = presets_cmd->add_subcommand("list", "List preset names");
  std::string show_name;
  auto* show_cmd = presets_cmd->add_subcommand("show", "Print a preset as JSON");
  show_cmd->add_option("name", show_name)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bpbnn::kExitConfigError;
  }

  try {
    if (*run_cmd) {
      bpbnn::ExperimentConfig cfg;
      try {
        cfg = resolve_config(config_arg);
        bpbnn::apply_environment(cfg);
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        if (threads > 0) cfg.threads = threads;
        bpbnn::validate(cfg);
      } catch (const bpbnn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return bpbnn::kExitConfigError;
      }
      const bpbnn::SweepResult result = bpbnn::run(cfg, quiet ? nullptr : &std::cout);
      bpbnn::write_outputs(result);
      bpbnn::render(cfg.output_dir / "results.csv", cfg.output_dir / "plot_spec.json");
      const int code = result.exit_code();
      if (!quiet || code != 0) {
        std::cout << "wrote " << (cfg.output_dir / "results.csv").string() << " ("
                  << result.points.size() << " sweep points, "
                  << bpbnn::format_double(result.total_seconds) << " s)\n";
      }
      if (code == bpbnn::kExitComputationFailure)
        std::cerr << "error: at least one theory computation failed or did not converge\n";
      if (code == bpbnn::kExitHmcFailure) std::cerr << "error: at least one HMC run failed\n";
      return code;
    }
    if (*render_cmd) {
      std::optional<std::filesystem::path> dir;
      if (!render_dir.empty()) dir = render_dir;
      for (const auto& p : bpbnn::render(csv_path, spec_path, dir)) std::cout << p.string() << '\n';
      return 0;
    }
    if (*validate_cmd) {
      try {
        auto cfg = resolve_config(validate_arg);
        std::cout << bpbnn::to_json(cfg) << '\n';
      } catch (const bpbnn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return bpbnn::kExitConfigError;
      }
      return 0;
    }
    if (*list_cmd) {
      for (const auto& p : bpbnn::list_presets()) std::cout << p.name << "\t" << p.description << '\n';
      return 0;
    }
    if (*show_cmd) {
      try {
        std::cout << bpbnn::to_json(bpbnn::preset(show_name)) << '\n';
      } catch (const bpbnn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return bpbnn::kExitConfigError;
      }
      return 0;
    }
  } catch (const bpbnn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return bpbnn::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return bpbnn::kExitComputationFailure;
  }
  return 0;
}
