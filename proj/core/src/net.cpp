#include "widthlab/net.hpp"

#include <cmath>

#include "widthlab/errors.hpp"

namespace widthlab {

namespace {

inline Matrix relu(const Matrix& h) { return h.cwiseMax(0.0); }

// relu'(h) with the subgradient at 0 taken as 0.
inline Matrix relu_mask(const Matrix& h) {
  return (h.array() > 0.0).cast<double>().matrix();
}

}  // namespace

double NetConfig::output_scale() const {
  return parameterization == Parameterization::kMuP
             ? alpha0 / std::sqrt(static_cast<double>(width))
             : alpha0;
}

std::int64_t NetConfig::param_count() const {
  const std::int64_t n = width;
  return n * input_dim + (depth - 1) * n * n + n * output_dim;
}

void NetConfig::validate() const {
  if (depth < 1 || width < 1 || input_dim < 1 || output_dim < 1)
    throw ConfigError("NetConfig: depth, width, input_dim, output_dim must be >= 1");
  if (!(alpha0 > 0.0)) throw ConfigError("NetConfig: alpha0 must be > 0");
}

std::int64_t ParamSet::count() const {
  std::int64_t n = 0;
  for (const auto& w : weights) n += w.size();
  return n;
}

Vector ParamSet::flatten() const {
  Vector theta(count());
  std::int64_t at = 0;
  for (const auto& w : weights) {
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) theta(at++) = w(i, j);
  }
  return theta;
}

ParamSet ParamSet::from_flat(const NetConfig& config, const Vector& theta) {
  if (theta.size() != config.param_count())
    throw DimensionError("ParamSet::from_flat: length mismatch");
  ParamSet p;
  p.weights.reserve(static_cast<std::size_t>(config.depth) + 1);
  std::int64_t at = 0;
  auto take = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix w(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = theta(at++);
    return w;
  };
  p.weights.push_back(take(config.width, config.input_dim));
  for (int l = 1; l < config.depth; ++l)
    p.weights.push_back(take(config.width, config.width));
  p.weights.push_back(take(config.output_dim, config.width));
  return p;
}

void ParamSet::axpy(double scale, const ParamSet& other) {
  for (std::size_t i = 0; i < weights.size(); ++i)
    weights[i] += scale * other.weights[i];
}

ParamSet init_params(const NetConfig& config) {
  config.validate();
  ParamSet p;
  p.weights.reserve(static_cast<std::size_t>(config.depth) + 1);
  for (int l = 0; l <= config.depth; ++l) {
    Rng rng = Rng::substream(config.seed, "init_weights",
                             static_cast<std::uint64_t>(l));
    const Eigen::Index rows = (l == config.depth) ? config.output_dim : config.width;
    const Eigen::Index cols = (l == 0) ? config.input_dim : config.width;
    Matrix w(rows, cols);
    // Row-major fill so the stream order matches the checkpoint layout.
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.next_gaussian();
    p.weights.push_back(std::move(w));
  }
  return p;
}

ForwardTrace forward(const ParamSet& params, const NetConfig& config,
                     const Matrix& x) {
  if (x.rows() != config.input_dim)
    throw DimensionError("forward: input dimension mismatch");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.input_dim));
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(config.width));

  ForwardTrace trace;
  trace.preacts.reserve(static_cast<std::size_t>(config.depth));
  trace.preacts.push_back(inv_sqrt_d * (params.weights[0] * x));
  for (int l = 1; l < config.depth; ++l)
    trace.preacts.push_back(
        inv_sqrt_n *
        (params.weights[static_cast<std::size_t>(l)] * relu(trace.preacts.back())));
  trace.output = (config.output_scale() * inv_sqrt_n) *
                 (params.weights.back() * relu(trace.preacts.back()));
  return trace;
}

LossGrads loss_and_grads(const ParamSet& params, const NetConfig& config,
                         const Matrix& x, const Matrix& y) {
  if (y.rows() != config.output_dim || y.cols() != x.cols())
    throw DimensionError("loss_and_grads: target shape mismatch");
  if (x.cols() < 1) throw DimensionError("loss_and_grads: empty batch");

  const ForwardTrace trace = forward(params, config, x);
  const Matrix delta = trace.output - y;
  const double denom = static_cast<double>(delta.size());

  LossGrads out;
  out.loss = delta.squaredNorm() / denom;
  out.grads.weights.resize(params.weights.size());

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.input_dim));
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(config.width));
  const int depth = config.depth;

  // d(loss/2)/df
  const Matrix dout = delta / denom;
  const Matrix& h_last = trace.preacts[static_cast<std::size_t>(depth - 1)];
  out.grads.weights[static_cast<std::size_t>(depth)] =
      (config.output_scale() * inv_sqrt_n) * (dout * relu(h_last).transpose());

  // Signal d(loss/2)/dh^l, propagated down through the hidden stack.
  Matrix sig = ((config.output_scale() * inv_sqrt_n) *
                (params.weights.back().transpose() * dout))
                   .cwiseProduct(relu_mask(h_last));
  for (int l = depth - 1; l >= 1; --l) {
    const Matrix& h_prev = trace.preacts[static_cast<std::size_t>(l - 1)];
    out.grads.weights[static_cast<std::size_t>(l)] =
        inv_sqrt_n * (sig * relu(h_prev).transpose());
    sig = (inv_sqrt_n *
           (params.weights[static_cast<std::size_t>(l)].transpose() * sig))
              .cwiseProduct(relu_mask(h_prev));
  }
  out.grads.weights[0] = inv_sqrt_d * (sig * x.transpose());
  return out;
}

double effective_lr(const NetConfig& config, const TrainSchedule& schedule) {
  const double lazy = 1.0 + config.alpha0 * config.alpha0;
  return config.parameterization == Parameterization::kMuP
             ? schedule.eta0 * static_cast<double>(config.width) / lazy
             : schedule.eta0 / lazy;
}

ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, double lr) {
  ParamSet out = params;
  sgd_step_inplace(out, grads, lr);
  return out;
}

void sgd_step_inplace(ParamSet& params, const ParamSet& grads, double lr) {
  if (params.weights.size() != grads.weights.size())
    throw DimensionError("sgd_step: weight stack mismatch");
  params.axpy(-lr, grads);
}

Matrix per_output_jacobian(const ParamSet& params, const NetConfig& config,
                           const Matrix& x) {
  if (x.cols() < 1) throw DimensionError("per_output_jacobian: empty batch");
  const ForwardTrace trace = forward(params, config, x);

  const int batch = static_cast<int>(x.cols());
  const int channels = config.output_dim;
  const int depth = config.depth;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config.input_dim));
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(config.width));
  const double a = config.output_scale();

  Matrix jac(static_cast<Eigen::Index>(batch) * channels, config.param_count());

  // Offsets of each weight block in flatten() order.
  std::vector<std::int64_t> offset(params.weights.size() + 1, 0);
  for (std::size_t i = 0; i < params.weights.size(); ++i)
    offset[i + 1] = offset[i] + params.weights[i].size();

  for (int mu = 0; mu < batch; ++mu) {
    for (int c = 0; c < channels; ++c) {
      const Eigen::Index row = static_cast<Eigen::Index>(mu) * channels + c;
      const Vector h_last_col = trace.preacts[static_cast<std::size_t>(depth - 1)].col(mu);

      // Readout block: df_c / dWL_{c',j} = delta_{cc'} (a/sqrt(N)) relu(h^L_j).
      {
        const Matrix& wl = params.weights.back();
        for (Eigen::Index i = 0; i < wl.rows(); ++i)
          for (Eigen::Index j = 0; j < wl.cols(); ++j)
            jac(row, offset[params.weights.size() - 1] + i * wl.cols() + j) =
                (i == c) ? a * inv_sqrt_n * std::max(h_last_col(j), 0.0) : 0.0;
      }

      // df_c / dh^l for this point, walked down the stack.
      Vector sig = (a * inv_sqrt_n) * params.weights.back().row(c).transpose();
      sig = sig.cwiseProduct(relu_mask(h_last_col));
      for (int l = depth - 1; l >= 1; --l) {
        const Vector h_prev = trace.preacts[static_cast<std::size_t>(l - 1)].col(mu);
        const Matrix& w = params.weights[static_cast<std::size_t>(l)];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
          for (Eigen::Index j = 0; j < w.cols(); ++j)
            jac(row, offset[static_cast<std::size_t>(l)] + i * w.cols() + j) =
                inv_sqrt_n * sig(i) * std::max(h_prev(j), 0.0);
        sig = (inv_sqrt_n * (w.transpose() * sig)).cwiseProduct(relu_mask(h_prev));
      }
      const Matrix& w0 = params.weights[0];
      for (Eigen::Index i = 0; i < w0.rows(); ++i)
        for (Eigen::Index j = 0; j < w0.cols(); ++j)
          jac(row, offset[0] + i * w0.cols() + j) = inv_sqrt_d * sig(i) * x(j, mu);
    }
  }
  return jac;
}

Vector hvp(const ParamSet& params, const NetConfig& config, const Matrix& x,
           const Matrix& y, const Vector& v) {
  if (v.size() != config.param_count())
    throw DimensionError("hvp: direction length mismatch");
  const double vnorm = v.norm();
  if (vnorm == 0.0) throw ZeroDirectionError("hvp: zero direction");

  const double tnorm = params.flatten().norm();
  const double eps = 1e-4 * (tnorm > 1e-12 ? tnorm : 1.0) / vnorm;

  const ParamSet dir = ParamSet::from_flat(config, v);
  ParamSet plus = params;
  plus.axpy(eps, dir);
  ParamSet minus = params;
  minus.axpy(-eps, dir);

  const Vector gp = loss_and_grads(plus, config, x, y).grads.flatten();
  const Vector gm = loss_and_grads(minus, config, x, y).grads.flatten();
  // grads are of loss/2; the factor 2 restores the Hessian of the loss.
  return (gp - gm) * (2.0 / (2.0 * eps));
}

}  // namespace widthlab
