#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "widthlab/ensemble_table.hpp"
#include "widthlab/linalg.hpp"
#include "widthlab/net.hpp"
#include "widthlab/spectral.hpp"

namespace widthlab {

/// Per-layer feature kernel Phi^l = (1/N) relu(h^l)^T relu(h^l), a P x P raw
/// kernel over the trace's batch.  Layers are 1-based; throws LayerError
/// outside [1, depth].
KernelMatrix feature_kernel(const ForwardTrace& trace, int layer);

/// Per-layer gradient kernel G^l = (1/N) g^l . g^l with g^l = N df/dh^l, the
/// width-scaled backprop signal, for scalar-output nets.  Keeps its own
/// backward recursion so the NTK layer-decomposition identity checks entk
/// against an independent code path.
KernelMatrix gradient_kernel(const ParamSet& params, const NetConfig& config,
                             const Matrix& probes, int layer);

/// Centered kernel alignment <K1c, K2c>_F / (||K1c|| ||K2c||) with
/// Kc = H K H, H = I - (1/P) 1 1^T.  In [0, 1] for PSD inputs.  Throws
/// ShapeMismatchError on shape mismatch and DegenerateKernelError when a
/// centered kernel has Frobenius norm below 1e-14.
double cka(const KernelMatrix& k1, const KernelMatrix& k2);

/// ||f - f_ref|| / ||f_ref|| over all entries.  Throws ZeroReferenceError
/// when ||f_ref|| = 0.
double relative_rmse(const Matrix& f, const Matrix& f_ref);

/// Neuron values pooled across ensemble members at one (width, layer, probe
/// point).
struct PreactSnapshot {
  int width = 0;
  int layer = 0;
  int probe_id = 0;
  std::vector<double> values;  // size N * E
};

struct PreactSummary {
  double mean = 0.0;
  double variance = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  double w1_gauss = 0.0;  // W1 to the moment-matched Gaussian
};

/// Moment summary plus the 1-Wasserstein distance to a moment-matched
/// Gaussian (10^5 reference draws from a fixed oracle seed).  Throws
/// TooFewSamplesError below 100 pooled values.
PreactSummary preact_stats(const PreactSnapshot& snapshot);

/// W1 distance between two pooled snapshots (e.g. across widths).
double preact_w1(const PreactSnapshot& a, const PreactSnapshot& b);

struct BiasVarianceRow {
  std::int64_t step = 0;
  int width = 0;
  double mean_single_loss = 0.0;
  double ensemble_loss = 0.0;
  double variance = 0.0;  // mean single - ensemble
  double bias = 0.0;      // ensemble(N) - ensemble(reference)
};

/// Bias/variance decomposition against the widest trained ensemble as the
/// infinite-width proxy.  Requires >= 2 seeds per width.
std::vector<BiasVarianceRow> bias_variance(const EnsembleTable& table,
                                           int reference_width);

/// Dominant eigenvalue of a symmetric operator given through its
/// matrix-vector product, by power iteration with a Rayleigh-quotient stop:
/// successive estimates within `rel_tol`, at most `max_iters` iterations
/// (ConvergenceError beyond that).
double power_iteration(const std::function<Vector(const Vector&)>& matvec,
                       Eigen::Index dim, Rng rng, double rel_tol = 0.01,
                       int max_iters = 200);

/// Sharpness: top eigenvalue of the batch-loss Hessian, via power iteration
/// on hvp.
double sharpness(const ParamSet& params, const NetConfig& config,
                 const Matrix& x, const Matrix& y);

}  // namespace widthlab
