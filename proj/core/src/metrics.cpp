#include "widthlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "widthlab/errors.hpp"
#include "widthlab/wasserstein.hpp"

namespace widthlab {

namespace {

constexpr std::uint64_t kPreactOracleSeed = 0x707265616374ull;
constexpr int kGaussRefSamples = 100'000;

// Shared standard-normal reference draws for the moment-matched Gaussian
// distance; scaled per snapshot.
const std::vector<double>& gauss_reference() {
  static std::vector<double> ref;
  static std::once_flag once;
  std::call_once(once, [] {
    Rng rng = Rng::substream(kPreactOracleSeed, "gauss_ref");
    ref = gaussian_stream(rng, kGaussRefSamples);
  });
  return ref;
}

}  // namespace

KernelMatrix feature_kernel(const ForwardTrace& trace, int layer) {
  if (layer < 1 || layer > static_cast<int>(trace.preacts.size()))
    throw LayerError("feature_kernel: layer out of range");
  const Matrix& h = trace.preacts[static_cast<std::size_t>(layer - 1)];
  const Matrix act = h.cwiseMax(0.0);
  KernelMatrix out;
  out.channels = 1;
  out.norm = KernelNorm::kRaw;
  out.m = (act.transpose() * act) / static_cast<double>(h.rows());
  out.probe_ids.resize(static_cast<std::size_t>(act.cols()));
  for (std::size_t i = 0; i < out.probe_ids.size(); ++i)
    out.probe_ids[i] = static_cast<int>(i);
  return out;
}

KernelMatrix gradient_kernel(const ParamSet& params, const NetConfig& config,
                             const Matrix& probes, int layer) {
  if (config.output_dim != 1)
    throw DimensionError("gradient_kernel: defined for scalar output");
  if (layer < 1 || layer > config.depth)
    throw LayerError("gradient_kernel: layer out of range");

  const ForwardTrace trace = forward(params, config, probes);
  const double n = static_cast<double>(config.width);
  const double inv_sqrt_n = 1.0 / std::sqrt(n);
  const int p = static_cast<int>(probes.cols());

  // g^l = N df/dh^l, walked down from the readout.
  auto mask_of = [&](int l) {
    return (trace.preacts[static_cast<std::size_t>(l - 1)].array() > 0.0)
        .cast<double>()
        .matrix();
  };
  Matrix g = (config.output_scale() * std::sqrt(n)) *
             params.weights.back().row(0).transpose().replicate(1, p);
  g = g.cwiseProduct(mask_of(config.depth));
  for (int l = config.depth; l > layer; --l) {
    g = (inv_sqrt_n *
         (params.weights[static_cast<std::size_t>(l - 1)].transpose() * g))
            .cwiseProduct(mask_of(l - 1));
  }

  KernelMatrix out;
  out.channels = 1;
  out.norm = KernelNorm::kRaw;
  out.m = (g.transpose() * g) / n;
  out.probe_ids.resize(static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < out.probe_ids.size(); ++i)
    out.probe_ids[i] = static_cast<int>(i);
  return out;
}

double cka(const KernelMatrix& k1, const KernelMatrix& k2) {
  if (k1.m.rows() != k2.m.rows() || k1.m.cols() != k2.m.cols())
    throw ShapeMismatchError("cka: shape mismatch");
  const Eigen::Index p = k1.m.rows();
  auto center = [p](const Matrix& k) {
    const Vector row_mean = k.rowwise().mean();
    const Vector col_mean = k.colwise().mean().transpose();
    const double total = k.mean();
    Matrix c = k;
    c.colwise() -= row_mean;
    c.rowwise() -= col_mean.transpose();
    c.array() += total;
    return c;
  };
  const Matrix c1 = center(k1.m);
  const Matrix c2 = center(k2.m);
  const double n1 = c1.norm();
  const double n2 = c2.norm();
  if (n1 < 1e-14 || n2 < 1e-14)
    throw DegenerateKernelError("cka: centered kernel vanishes");
  return c1.cwiseProduct(c2).sum() / (n1 * n2);
}

double relative_rmse(const Matrix& f, const Matrix& f_ref) {
  if (f.rows() != f_ref.rows() || f.cols() != f_ref.cols())
    throw ShapeMismatchError("relative_rmse: shape mismatch");
  const double ref_norm = f_ref.norm();
  if (ref_norm == 0.0)
    throw ZeroReferenceError("relative_rmse: zero reference");
  return (f - f_ref).norm() / ref_norm;
}

PreactSummary preact_stats(const PreactSnapshot& snapshot) {
  const std::size_t n = snapshot.values.size();
  if (n < 100) throw TooFewSamplesError("preact_stats: need >= 100 samples");

  PreactSummary s;
  for (double v : snapshot.values) s.mean += v;
  s.mean /= static_cast<double>(n);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : snapshot.values) {
    const double d = v - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= static_cast<double>(n);
  m3 /= static_cast<double>(n);
  m4 /= static_cast<double>(n);
  s.variance = m2;
  const double sd = std::sqrt(m2);
  s.skewness = sd > 0.0 ? m3 / (sd * sd * sd) : 0.0;
  s.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;

  std::vector<double> ref = gauss_reference();
  for (double& z : ref) z = s.mean + sd * z;
  s.w1_gauss = wasserstein1(snapshot.values, ref);
  return s;
}

double preact_w1(const PreactSnapshot& a, const PreactSnapshot& b) {
  return wasserstein1(a.values, b.values);
}

std::vector<BiasVarianceRow> bias_variance(const EnsembleTable& table,
                                           int reference_width) {
  const auto widths = table.widths();
  for (int w : widths)
    if (table.cells_for(w).size() < 2)
      throw InsufficientSeedsError("bias_variance: need >= 2 seeds per width");
  if (table.cells_for(reference_width).empty())
    throw InsufficientSeedsError("bias_variance: empty reference width");

  std::vector<BiasVarianceRow> rows;
  const auto ref_steps = table.steps_for(reference_width);
  for (int w : widths) {
    const auto steps = table.steps_for(w);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (i >= ref_steps.size() || ref_steps[i] != steps[i]) continue;
      BiasVarianceRow row;
      row.step = steps[i];
      row.width = w;
      row.mean_single_loss = table.mean_single_loss(w, i);
      row.ensemble_loss = table.ensemble_loss(w, i);
      row.variance = row.mean_single_loss - row.ensemble_loss;
      row.bias = row.ensemble_loss - table.ensemble_loss(reference_width, i);
      rows.push_back(row);
    }
  }
  return rows;
}

double power_iteration(const std::function<Vector(const Vector&)>& matvec,
                       Eigen::Index dim, Rng rng, double rel_tol,
                       int max_iters) {
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = rng.next_gaussian();
  v /= v.norm();

  double estimate = 0.0;
  bool have_estimate = false;
  for (int it = 0; it < max_iters; ++it) {
    const Vector w = matvec(v);
    const double rayleigh = v.dot(w);
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;  // operator annihilates the iterate
    if (have_estimate &&
        std::abs(rayleigh - estimate) <= rel_tol * std::abs(rayleigh))
      return rayleigh;
    estimate = rayleigh;
    have_estimate = true;
    v = w / wn;
  }
  throw ConvergenceError("power_iteration: no convergence");
}

double sharpness(const ParamSet& params, const NetConfig& config,
                 const Matrix& x, const Matrix& y) {
  if (x.cols() < 1) throw DimensionError("sharpness: empty batch");
  auto matvec = [&](const Vector& v) { return hvp(params, config, x, y, v); };
  const double dominant =
      power_iteration(matvec, config.param_count(),
                      Rng::substream(config.seed, "sharpness_v0"));
  if (dominant >= 0.0) return dominant;
  // Indefinite Hessian with dominant negative curvature: shift the spectrum
  // so the top (signed) eigenvalue becomes the dominant one.
  const double shift = -dominant * 1.01;
  auto shifted = [&](const Vector& v) {
    return Vector(hvp(params, config, x, y, v) + shift * v);
  };
  const double top =
      power_iteration(shifted, config.param_count(),
                      Rng::substream(config.seed, "sharpness_v0", 1), 1e-3,
                      500);
  return top - shift;
}

}  // namespace widthlab
