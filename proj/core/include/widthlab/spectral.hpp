#pragma once

#include <vector>

#include "widthlab/linalg.hpp"
#include "widthlab/net.hpp"

namespace widthlab {

enum class KernelNorm { kRaw, kFlow };

/// Symmetric Gram matrix over a probe set, (P*C) x (P*C) with point-major
/// C x C channel blocks: row mu*C + c holds output channel c at probe mu.
/// kRaw is the parameter-space Gram J J^T; kFlow is raw scaled by
/// (effective_lr/eta0) * (1/P), so one eta0-unit of SGD time equals one unit
/// of gradient-flow time and the empirical probe measure carries weight 1/P.
struct KernelMatrix {
  Matrix m;
  int channels = 1;
  KernelNorm norm = KernelNorm::kRaw;
  std::vector<int> probe_ids;

  int probe_count() const {
    return static_cast<int>(m.rows()) / channels;
  }
};

/// Empirical NTK on the probe set: K[(mu,c),(nu,c')] = grad_theta f_c(x_mu) .
/// grad_theta f_{c'}(x_nu), i.e. J J^T for the per-output Jacobian.  Computed
/// exactly (no sampling) by accumulating the per-layer factored Gram
/// contributions, which avoids materializing J at large width; agreement with
/// the explicit per_output_jacobian route is pinned by tests.
KernelMatrix entk(const ParamSet& params, const NetConfig& config,
                  const Matrix& probes);

/// Raw -> flow normalization for the parameterization of `config`.
KernelMatrix to_flow(const KernelMatrix& raw, const NetConfig& config);

/// Entrywise mean of kernels with identical shape, channel count and
/// normalization.  Throws ShapeMismatchError otherwise.
KernelMatrix ensemble_avg(const std::vector<KernelMatrix>& kernels);

/// Eigenstructure of a flow kernel against a target on the probes.
/// Eigenfunctions are normalized to unit probe-measure norm
/// (1/P) sum_mu psi_k(mu)^2 = 1, coefficients are v_k = (1/P) sum_mu y_mu
/// psi_k(mu), and the cumulative power distribution is
/// C(k) = sum_{l<k} v_l^2 / <y^2> for k = 1..P*C+1.
struct SpectralReport {
  Vector eigenvalues;        // descending
  Vector coefficients;       // v_k
  Vector cumulative_power;   // size P*C+1, C(1) = 0
  double target_norm = 0.0;  // <y^2> = ||y||^2 / P
};

SpectralReport spectral_report(const KernelMatrix& kernel, const Vector& y);

/// Lazy-limit loss law L(t) = sum_k v_k^2 exp(-2 lambda_k t).
Vector lazy_loss_curve(const SpectralReport& report,
                       const std::vector<double>& times);

/// Exact kernel gradient flow d/dt Delta = -K Delta, Delta(0) = y, solved in
/// the eigenbasis.  Supports multi-channel kernels (after-kernel flow from
/// one-hot targets).  loss(t) = ||Delta(t)||^2 / P, the probe-measure norm.
struct FlowResult {
  std::vector<double> times;
  Matrix residuals;  // (P*C) x T
  Vector loss;       // T
};

FlowResult kernel_flow(const KernelMatrix& kernel, const Vector& y,
                       const std::vector<double>& times);

/// Time-ordered propagator of d/dt T = -K(t) T, T(0) = I, for a piecewise
/// constant kernel series: T(t_{i+1}) = exp(-K_i dt_i) T(t_i).  `kernels`
/// holds one kernel per interval (a trailing kernel at the final time is
/// accepted and ignored).  Returns T at every time point.
std::vector<Matrix> propagator(const std::vector<KernelMatrix>& kernels,
                               const std::vector<double>& times);

}  // namespace widthlab
