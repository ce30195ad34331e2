#pragma once

#include <cstdint>
#include <vector>

#include "widthlab/linalg.hpp"

namespace widthlab {

/// Recorded series for one trained (width, seed) cell.  Probe logits are
/// C x P matrices, one per recorded step.
struct CellSeries {
  int width = 0;
  int seed_index = 0;
  bool diverged = false;
  std::vector<std::int64_t> recorded_steps;
  std::vector<double> train_loss_per_step;  // every step, 0..steps_run-1
  std::vector<double> probe_loss;           // at recorded steps
  std::vector<Matrix> probe_logits;         // at recorded steps
};

/// Losses and logits for a full sweep, plus the shared probe targets; the
/// substrate for ensemble averaging and the bias/variance decomposition.
struct EnsembleTable {
  std::vector<CellSeries> cells;  // sorted by (width, seed_index)
  Matrix targets;                 // C x P

  std::vector<int> widths() const;
  std::vector<const CellSeries*> cells_for(int width) const;
  /// Recorded-step grid shared by every non-diverged cell of this width.
  std::vector<std::int64_t> steps_for(int width) const;

  /// Arithmetic mean of member logits at recorded step index `idx`.
  Matrix ensemble_logits(int width, std::size_t idx) const;
  /// MSE of the ensemble-averaged logits against the targets.
  double ensemble_loss(int width, std::size_t idx) const;
  /// Mean over seeds of the members' probe losses.
  double mean_single_loss(int width, std::size_t idx) const;
};

double mse(const Matrix& f, const Matrix& y);

}  // namespace widthlab
