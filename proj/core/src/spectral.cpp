#include "widthlab/spectral.hpp"

#include <cmath>

#include "widthlab/errors.hpp"

namespace widthlab {

namespace {

double eig_tol(const Matrix& m) {
  return 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

EigenDecomposition kernel_eig(const KernelMatrix& k) {
  return sym_eig(k.m, eig_tol(k.m));
}

}  // namespace

KernelMatrix entk(const ParamSet& params, const NetConfig& config,
                  const Matrix& probes) {
  if (probes.cols() < 1) throw DimensionError("entk: empty probe set");
  const ForwardTrace trace = forward(params, config, probes);

  const int p = static_cast<int>(probes.cols());
  const int channels = config.output_dim;
  const int depth = config.depth;
  const double n = static_cast<double>(config.width);
  const double inv_sqrt_n = 1.0 / std::sqrt(n);
  const double a = config.output_scale();

  // Activation Grams: phi[0] = X^T X / D, phi[l] = relu(h^l)^T relu(h^l) / N.
  std::vector<Matrix> phi(static_cast<std::size_t>(depth) + 1);
  phi[0] = (probes.transpose() * probes) / static_cast<double>(config.input_dim);
  std::vector<Matrix> act(static_cast<std::size_t>(depth));
  for (int l = 0; l < depth; ++l) {
    act[static_cast<std::size_t>(l)] =
        trace.preacts[static_cast<std::size_t>(l)].cwiseMax(0.0);
    phi[static_cast<std::size_t>(l) + 1] =
        (act[static_cast<std::size_t>(l)].transpose() *
         act[static_cast<std::size_t>(l)]) /
        n;
  }

  // Backprop signals r[l][c] = df_c/dh^{l+1}, one N x P matrix per layer and
  // channel.
  std::vector<Matrix> mask(static_cast<std::size_t>(depth));
  for (int l = 0; l < depth; ++l)
    mask[static_cast<std::size_t>(l)] =
        (trace.preacts[static_cast<std::size_t>(l)].array() > 0.0)
            .cast<double>()
            .matrix();

  std::vector<std::vector<Matrix>> r(static_cast<std::size_t>(depth));
  for (auto& per_layer : r)
    per_layer.resize(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    Matrix top = (a * inv_sqrt_n) *
                 params.weights.back().row(c).transpose().replicate(1, p);
    r[static_cast<std::size_t>(depth - 1)][static_cast<std::size_t>(c)] =
        top.cwiseProduct(mask[static_cast<std::size_t>(depth - 1)]);
    for (int l = depth - 1; l >= 1; --l) {
      r[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(c)] =
          (inv_sqrt_n *
           (params.weights[static_cast<std::size_t>(l)].transpose() *
            r[static_cast<std::size_t>(l)][static_cast<std::size_t>(c)]))
              .cwiseProduct(mask[static_cast<std::size_t>(l - 1)]);
    }
  }

  KernelMatrix out;
  out.channels = channels;
  out.norm = KernelNorm::kRaw;
  out.probe_ids.resize(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) out.probe_ids[static_cast<std::size_t>(i)] = i;
  out.m = Matrix::Zero(static_cast<Eigen::Index>(p) * channels,
                       static_cast<Eigen::Index>(p) * channels);

  // Signal Grams per layer and channel pair, Hadamard'ed with the activation
  // Gram feeding that weight matrix.  Layer slot l holds df/dh^{l+1}, whose
  // weight W_l consumes phi[l].
  for (int l = 0; l < depth; ++l) {
    for (int c = 0; c < channels; ++c) {
      for (int c2 = c; c2 < channels; ++c2) {
        const Matrix gram =
            r[static_cast<std::size_t>(l)][static_cast<std::size_t>(c)]
                .transpose() *
            r[static_cast<std::size_t>(l)][static_cast<std::size_t>(c2)];
        for (int mu = 0; mu < p; ++mu) {
          for (int nu = 0; nu < p; ++nu) {
            const double w = phi[static_cast<std::size_t>(l)](mu, nu);
            out.m(static_cast<Eigen::Index>(mu) * channels + c,
                  static_cast<Eigen::Index>(nu) * channels + c2) +=
                gram(mu, nu) * w;
            if (c2 != c)
              out.m(static_cast<Eigen::Index>(mu) * channels + c2,
                    static_cast<Eigen::Index>(nu) * channels + c) +=
                  gram(nu, mu) * w;
          }
        }
      }
    }
  }
  // Readout contribution a^2 Phi^L on the diagonal channel blocks.
  for (int c = 0; c < channels; ++c)
    for (int mu = 0; mu < p; ++mu)
      for (int nu = 0; nu < p; ++nu)
        out.m(static_cast<Eigen::Index>(mu) * channels + c,
              static_cast<Eigen::Index>(nu) * channels + c) +=
            a * a * phi[static_cast<std::size_t>(depth)](mu, nu);

  out.m = ((out.m + out.m.transpose()) / 2.0).eval();
  return out;
}

KernelMatrix to_flow(const KernelMatrix& raw, const NetConfig& config) {
  if (raw.norm != KernelNorm::kRaw)
    throw ShapeMismatchError("to_flow: kernel is already flow-normalized");
  const double lazy = 1.0 + config.alpha0 * config.alpha0;
  const double width_factor =
      config.parameterization == Parameterization::kMuP
          ? static_cast<double>(config.width) / lazy
          : 1.0 / lazy;
  KernelMatrix out = raw;
  out.norm = KernelNorm::kFlow;
  out.m *= width_factor / static_cast<double>(raw.probe_count());
  return out;
}

KernelMatrix ensemble_avg(const std::vector<KernelMatrix>& kernels) {
  if (kernels.empty()) throw ShapeMismatchError("ensemble_avg: no kernels");
  KernelMatrix out = kernels.front();
  for (std::size_t i = 1; i < kernels.size(); ++i) {
    const KernelMatrix& k = kernels[i];
    if (k.m.rows() != out.m.rows() || k.m.cols() != out.m.cols() ||
        k.channels != out.channels || k.norm != out.norm ||
        k.probe_ids != out.probe_ids)
      throw ShapeMismatchError("ensemble_avg: kernel mismatch");
    out.m += k.m;
  }
  out.m /= static_cast<double>(kernels.size());
  return out;
}

SpectralReport spectral_report(const KernelMatrix& kernel, const Vector& y) {
  if (y.size() != kernel.m.rows())
    throw ShapeMismatchError("spectral_report: target length mismatch");
  const double p = static_cast<double>(kernel.probe_count());
  const EigenDecomposition eig = kernel_eig(kernel);

  SpectralReport report;
  report.eigenvalues = eig.values;
  // v_k = (1/P) y . psi_k with psi_k = sqrt(P) u_k.
  report.coefficients = (eig.vectors.transpose() * y) / std::sqrt(p);
  report.target_norm = y.squaredNorm() / p;

  const Eigen::Index modes = eig.values.size();
  report.cumulative_power.resize(modes + 1);
  report.cumulative_power(0) = 0.0;
  for (Eigen::Index k = 0; k < modes; ++k) {
    const double vk = report.coefficients(k);
    report.cumulative_power(k + 1) =
        report.cumulative_power(k) +
        (report.target_norm > 0.0 ? vk * vk / report.target_norm : 0.0);
  }
  return report;
}

Vector lazy_loss_curve(const SpectralReport& report,
                       const std::vector<double>& times) {
  Vector loss(static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < times.size(); ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < report.eigenvalues.size(); ++k) {
      const double vk = report.coefficients(k);
      acc += vk * vk * std::exp(-2.0 * report.eigenvalues(k) * times[i]);
    }
    loss(static_cast<Eigen::Index>(i)) = acc;
  }
  return loss;
}

FlowResult kernel_flow(const KernelMatrix& kernel, const Vector& y,
                       const std::vector<double>& times) {
  if (y.size() != kernel.m.rows())
    throw ShapeMismatchError("kernel_flow: target length mismatch");
  const EigenDecomposition eig = kernel_eig(kernel);
  const Vector coeffs = eig.vectors.transpose() * y;
  const double p = static_cast<double>(kernel.probe_count());

  FlowResult out;
  out.times = times;
  out.residuals.resize(y.size(), static_cast<Eigen::Index>(times.size()));
  out.loss.resize(static_cast<Eigen::Index>(times.size()));
  Vector scaled(coeffs.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    for (Eigen::Index k = 0; k < coeffs.size(); ++k)
      scaled(k) = coeffs(k) * std::exp(-eig.values(k) * times[i]);
    out.residuals.col(static_cast<Eigen::Index>(i)) = eig.vectors * scaled;
    out.loss(static_cast<Eigen::Index>(i)) =
        out.residuals.col(static_cast<Eigen::Index>(i)).squaredNorm() / p;
  }
  return out;
}

std::vector<Matrix> propagator(const std::vector<KernelMatrix>& kernels,
                               const std::vector<double>& times) {
  if (times.empty() || times.front() != 0.0)
    throw ShapeMismatchError("propagator: times must start at 0");
  if (kernels.size() + 1 < times.size())
    throw ShapeMismatchError("propagator: need one kernel per interval");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (times[i] <= times[i - 1])
      throw ShapeMismatchError("propagator: times must be ascending");
  for (const auto& k : kernels)
    if (k.m.rows() != kernels.front().m.rows())
      throw ShapeMismatchError("propagator: kernel shape mismatch");

  const Eigen::Index n = kernels.front().m.rows();
  std::vector<Matrix> t_series;
  t_series.reserve(times.size());
  t_series.push_back(Matrix::Identity(n, n));
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double dt = times[i + 1] - times[i];
    const EigenDecomposition eig = kernel_eig(kernels[i]);
    Matrix step = eig.vectors;
    for (Eigen::Index k = 0; k < n; ++k)
      step.col(k) *= std::exp(-eig.values(k) * dt);
    t_series.push_back(step * eig.vectors.transpose() * t_series.back());
  }
  return t_series;
}

}  // namespace widthlab
