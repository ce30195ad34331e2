#pragma once

#include <cstdint>
#include <vector>

#include "widthlab/linalg.hpp"
#include "widthlab/rng.hpp"

namespace widthlab {

enum class Parameterization { kMuP, kSP };
enum class Activation { kReLU };
enum class LossKind { kMSE };

/// ReLU-MLP architecture and scaling.  `depth` counts hidden layers, so the
/// weight stack is W0 (D -> N), W1..W_{L-1} (N -> N), WL (N -> C), with no
/// biases.  The forward pass carries all width scaling in explicit
/// multipliers so that every weight entry stays unit Gaussian at init:
///
///   h^1     = (1/sqrt(D)) W0 x
///   h^{l+1} = (1/sqrt(N)) W_l relu(h^l)
///   f       = (a/sqrt(N)) WL relu(h^L),  a = alpha0 (SP), alpha0/sqrt(N) (muP)
///
/// alpha0 is the laziness scale: large alpha0 freezes features (kernel
/// regime), small alpha0 trains them.
struct NetConfig {
  int depth = 3;
  int width = 128;
  int input_dim = 5;
  int output_dim = 1;
  double alpha0 = 1.0;
  Parameterization parameterization = Parameterization::kMuP;
  Activation activation = Activation::kReLU;
  std::uint64_t seed = 1;

  /// Output multiplier `a` above.
  double output_scale() const;
  std::int64_t param_count() const;
  void validate() const;  // throws ConfigError
};

/// Weight stack; weights[0] is N x D, hidden weights are N x N, and the
/// readout weights.back() is C x N (each maps its input vector from the
/// right).
struct ParamSet {
  std::vector<Matrix> weights;

  std::int64_t count() const;
  Vector flatten() const;  // row-major per matrix, W0 first
  static ParamSet from_flat(const NetConfig& config, const Vector& theta);
  void axpy(double scale, const ParamSet& other);  // this += scale * other
};

/// Preactivations h^1..h^L (N x B each) and outputs f (C x B) for one batch.
struct ForwardTrace {
  std::vector<Matrix> preacts;
  Matrix output;
};

struct TrainSchedule {
  double eta0 = 5.0;
  int batch_size = 10;
  std::int64_t steps = 1000;
  LossKind loss = LossKind::kMSE;
};

/// Independent standard-normal weights from the config seed's substream;
/// bit-reproducible for a given seed.
ParamSet init_params(const NetConfig& config);

/// Forward pass over the columns of X (D x B).  Throws DimensionError on a
/// row-count mismatch.  relu(0) = 0 and the subgradient at 0 is taken as 0
/// throughout.
ForwardTrace forward(const ParamSet& params, const NetConfig& config,
                     const Matrix& x);

struct LossGrads {
  double loss = 0.0;   // mean over batch and channels of (f - y)^2
  ParamSet grads;      // gradient of loss / 2
};

/// MSE loss and the gradient of loss/2, so that gradient flow on these
/// gradients obeys d/dt Delta = -K Delta with decay rates exp(-2 lambda t).
LossGrads loss_and_grads(const ParamSet& params, const NetConfig& config,
                         const Matrix& x, const Matrix& y);

/// Width- and laziness-corrected SGD learning rate:
///   muP: eta0 * N / (1 + alpha0^2),   SP: eta0 / (1 + alpha0^2).
double effective_lr(const NetConfig& config, const TrainSchedule& schedule);

/// Plain SGD: theta' = theta - lr * grad.
ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr);
void sgd_step_inplace(ParamSet& params, const ParamSet& grads, double lr);

/// Jacobian of outputs w.r.t. all parameters: row (mu*C + c) holds
/// d f_c(x_mu) / d theta in flatten() order, with all parameterization scale
/// factors included.  Intended for small nets; memory is (B*C) x count().
Matrix per_output_jacobian(const ParamSet& params, const NetConfig& config,
                           const Matrix& x);

/// Hessian-vector product H v of the batch loss, by central differences of
/// loss_and_grads gradients at theta +- eps*v with eps = 1e-4 ||theta||/||v||
/// (1e-4/||v|| when ||theta|| vanishes).  Note loss_and_grads returns grad of
/// loss/2; the result is rescaled to the Hessian of the full loss.  Throws
/// ZeroDirectionError when ||v|| = 0.
Vector hvp(const ParamSet& params, const NetConfig& config, const Matrix& x,
           const Matrix& y, const Vector& v);

}  // namespace widthlab
