// widthlab: config-driven width-consistency experiments on synthetic tasks.
//
// Subcommands:
//   run     --config CFG.json --out DIR [--workers K]   train a sweep
//   report  --runs DIR [DIR...] --out DIR               CSV + SVG reports
//   spectra --run DIR --step S                          kernel spectra
//   presets [NAME]                                      dump default configs
//
// Exit codes: 0 success, 2 partial sweep (diverged cells), 1 error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "widthlab/errors.hpp"
#include "widthlab/experiments.hpp"

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw widthlab::Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            int workers) {
  widthlab::ExperimentConfig config =
      widthlab::config_from_json_text(read_file(config_path));
  if (!out_dir.empty()) config.out_dir = out_dir;
  if (config.out_dir.empty())
    throw widthlab::ConfigError("no output directory (use --out)");

  widthlab::SweepResult result;
  if (config.preset == widthlab::Preset::kAlphaSweep) {
    result = widthlab::run_alpha_sweep(config, workers);
  } else {
    result = widthlab::run_sweep(config, workers);
    if (config.preset == widthlab::Preset::kAfterKernel)
      widthlab::run_after_kernel(config);
  }

  if (result.partial()) {
    std::cerr << "partial sweep: " << result.diverged_cells.size()
              << " diverged cell(s):";
    for (const auto& c : result.diverged_cells) std::cerr << ' ' << c;
    std::cerr << '\n';
    return 2;
  }
  std::cout << "sweep complete: " << result.table.cells.size() << " cells in "
            << config.out_dir << '\n';
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  widthlab::emit_report(runs, out);
  std::cout << "report written to " << out << '\n';
  return 0;
}

int cmd_spectra(const std::string& run_dir, std::int64_t step) {
  widthlab::ExperimentConfig config = widthlab::load_sweep_config(run_dir);
  const auto spectra = widthlab::sweep_spectra(config, step);
  const std::string path =
      (std::filesystem::path(run_dir) /
       ("spectra_step" + std::to_string(step) + ".csv"))
          .string();
  widthlab::write_spectra_csv(path, spectra);
  std::cout << "spectra written to " << path << '\n';
  return 0;
}

int cmd_presets(const std::string& name) {
  using widthlab::Preset;
  const Preset all[] = {Preset::kLazySpectral,  Preset::kRichConsistency,
                        Preset::kSpContrast,    Preset::kAlphaSweep,
                        Preset::kBiasVariance,  Preset::kOfflineNoise,
                        Preset::kAfterKernel};
  for (Preset p : all) {
    if (!name.empty() && widthlab::preset_name(p) != name) continue;
    if (name.empty()) std::cout << "# " << widthlab::preset_name(p) << '\n';
    std::cout << widthlab::config_to_json_text(widthlab::default_config(p));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"width-consistency laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, preset_filter;
  std::vector<std::string> run_dirs;
  int workers = 0;
  std::int64_t step = 0;

  auto* run = app.add_subcommand("run", "train a sweep from a JSON config");
  run->add_option("--config", config_path, "experiment config")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--workers", workers,
                  "worker threads (default: WIDTHLAB_WORKERS or hardware)");

  auto* report = app.add_subcommand("report", "emit CSV/SVG reports");
  report->add_option("--runs", run_dirs, "completed run directories")
      ->required()
      ->expected(-1);
  report->add_option("--out", out_dir, "report directory")->required();

  auto* spectra = app.add_subcommand("spectra", "kernel spectra at a step");
  spectra->add_option("--run", run_dir, "run directory")->required();
  spectra->add_option("--step", step, "checkpoint step (0 = init)");

  auto* presets = app.add_subcommand("presets", "print default preset configs");
  presets->add_option("name", preset_filter, "preset name");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, workers);
    if (report->parsed()) return cmd_report(run_dirs, out_dir);
    if (spectra->parsed()) return cmd_spectra(run_dir, step);
    if (presets->parsed()) return cmd_presets(preset_filter);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
