#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "widthlab/ensemble_table.hpp"
#include "widthlab/metrics.hpp"
#include "widthlab/net.hpp"
#include "widthlab/spectral.hpp"
#include "widthlab/tasks.hpp"

namespace widthlab {

enum class Preset {
  kLazySpectral,     // full-batch lazy training on the probe set, init kernels
  kRichConsistency,  // online feature learning, small batch, loss consistency
  kSpContrast,       // RICH settings in standard parameterization
  kAlphaSweep,       // fixed width, sweep the laziness scale
  kBiasVariance,     // RICH settings, bias/variance emphasis
  kOfflineNoise,     // multi-epoch training on a noisy fixed dataset
  kAfterKernel,      // one-hot task, end-of-training kernels and their flow
};

std::string preset_name(Preset p);
Preset preset_from_name(const std::string& name);

/// Everything needed to reproduce one sweep.  The net member is a template:
/// its width is filled per cell from `widths`, its seed is the base from
/// which per-cell seeds derive.
struct ExperimentConfig {
  Preset preset = Preset::kRichConsistency;
  NetConfig net;
  std::vector<int> widths;
  int seeds_per_width = 8;
  TrainSchedule schedule;
  TaskSpec task;
  // stream parameters (batch size lives in the schedule)
  std::uint64_t data_seed = 1;
  StreamMode mode = StreamMode::kOnline;
  int dataset_size = 0;
  double noise_frac = 0.0;
  std::uint64_t shuffle_seed = 1;

  int probe_count = 256;
  int record_every = 50;
  std::string out_dir;

  // preset extras
  std::vector<double> alpha0_list;    // ALPHA_SWEEP only
  bool train_on_probes = false;       // LAZY_SPECTRAL: full batch = probe set
  bool record_preacts = false;
  int preact_probes = 8;
  bool record_sharpness = false;

  void validate() const;
};

/// Built-in settings for each preset (out_dir left empty).
ExperimentConfig default_config(Preset preset);

/// Strict JSON round trip: field names mirror the struct, unknown keys are an
/// error.
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& config);

/// FNV-1a digest of the canonical JSON form (out_dir excluded), hex-encoded.
std::string config_digest(const ExperimentConfig& config);

/// The experiment's shared probe set: P points drawn once from the task
/// distribution, identical for every width and seed.
Matrix probe_points(const ExperimentConfig& config);
Matrix probe_targets(const ExperimentConfig& config);

/// Per-cell weight seed, derived from the template seed, width and seed
/// index.
std::uint64_t cell_net_seed(const ExperimentConfig& config, int width,
                            int seed_index);

/// One trained (width, seed) cell.  Training applies the configured SGD rule
/// to the init-centered predictor f(theta, x) - f(theta0, x); recorded probe
/// logits are centered-predictor outputs.  A non-finite or > 1e6 loss marks
/// the cell diverged (recorded, not fatal).  The cell directory receives
/// record.json, logits.bin, init/final checkpoints and optional snapshots.
struct RunRecord {
  CellSeries series;
  std::string cell_dir;
  double effective_lr = 0.0;
  std::int64_t steps_run = 0;
  std::optional<double> final_sharpness;
};

/// `alpha_index` selects the alpha0_list entry for ALPHA_SWEEP cells (and
/// names the cell directory); -1 means a plain width cell.
RunRecord run_cell(const ExperimentConfig& config, int width, int seed_index,
                   int alpha_index = -1);

struct SweepResult {
  EnsembleTable table;
  std::vector<std::string> diverged_cells;
  bool partial() const { return !diverged_cells.empty(); }
};

/// Runs every (width, seed) cell (completed cells are skipped by config
/// digest), aggregates deterministically, and writes the CSV artifacts:
/// losses.csv, logits.csv, biasvar.csv, preact.csv and, for kernel presets,
/// spectra.csv.  `workers` <= 0 reads WIDTHLAB_WORKERS, falling back to 1.
SweepResult run_sweep(const ExperimentConfig& config, int workers = 0);

/// Fixed width, one sweep cell per alpha0 in alpha0_list; emits
/// alpha_logits.csv and alpha_rmse.csv (pairwise trajectory distances).
SweepResult run_alpha_sweep(const ExperimentConfig& config, int workers = 0);

/// Loads the final checkpoints of a completed sweep, ensemble-averages the
/// end-of-training kernels per width, and runs the kernel gradient flow from
/// the one-hot (or scalar) targets; emits spectra.csv and flow_loss.csv.
/// Throws MissingCheckpointError when cells lack checkpoints.
void run_after_kernel(const ExperimentConfig& config);

/// Loads a sweep directory back into memory.
EnsembleTable load_sweep_table(const std::string& run_dir);
ExperimentConfig load_sweep_config(const std::string& run_dir);

/// Ensemble-averaged flow-normalized eNTK per width at a checkpoint step
/// (0 = init, or the final step).  Used by the spectra CLI subcommand.
struct WidthSpectra {
  int width = 0;
  KernelMatrix kernel;  // flow-normalized ensemble average
  SpectralReport report;
};
std::vector<WidthSpectra> sweep_spectra(const ExperimentConfig& config,
                                        std::int64_t step);
void write_spectra_csv(const std::string& path,
                       const std::vector<WidthSpectra>& spectra);

/// Report generation over one or more completed run directories: per-run CSV
/// summaries and static SVG line plots.  Throws on an empty run list before
/// creating anything.
void emit_report(const std::vector<std::string>& run_dirs,
                 const std::string& out_dir);

}  // namespace widthlab
