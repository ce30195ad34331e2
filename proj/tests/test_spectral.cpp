#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include <Eigen/QR>

#include "test_util.hpp"
#include "widthlab/errors.hpp"
#include "widthlab/metrics.hpp"
#include "widthlab/net.hpp"
#include "widthlab/spectral.hpp"
#include "widthlab/tasks.hpp"

using namespace widthlab;

namespace {

NetConfig make_config(Parameterization p, int width, int depth, double alpha0,
                      std::uint64_t seed, int channels = 1) {
  NetConfig c;
  c.depth = depth;
  c.width = width;
  c.input_dim = 5;
  c.output_dim = channels;
  c.alpha0 = alpha0;
  c.parameterization = p;
  c.seed = seed;
  return c;
}

Matrix probes_of(std::uint64_t seed, int dim, int n) {
  Rng rng(seed);
  return sample_sphere(rng, dim, n);
}

// Train a few full-batch steps so "after training" kernels differ from init.
ParamSet train_steps(const NetConfig& c, const Matrix& x, const Matrix& y,
                     int steps, double lr) {
  ParamSet p = init_params(c);
  for (int t = 0; t < steps; ++t)
    sgd_step_inplace(p, loss_and_grads(p, c, x, y).grads, lr);
  return p;
}

KernelMatrix flow_kernel_from(const Matrix& m) {
  KernelMatrix k;
  k.m = m;
  k.channels = 1;
  k.norm = KernelNorm::kFlow;
  k.probe_ids.resize(static_cast<std::size_t>(m.rows()));
  for (std::size_t i = 0; i < k.probe_ids.size(); ++i)
    k.probe_ids[i] = static_cast<int>(i);
  return k;
}

}  // namespace

TEST_CASE("entk equals the Gram of the explicit Jacobian") {
  for (Parameterization param :
       {Parameterization::kMuP, Parameterization::kSP}) {
    for (int channels : {1, 3}) {
      NetConfig c = make_config(param, 10, 3, 2.0, 3, channels);
      const ParamSet p = init_params(c);
      const Matrix x = probes_of(5, 5, 7);
      const Matrix jac = per_output_jacobian(p, c, x);
      const Matrix gram = jac * jac.transpose();
      const KernelMatrix k = entk(p, c, x);
      CHECK(k.norm == KernelNorm::kRaw);
      CHECK(k.channels == channels);
      const double scale = gram.cwiseAbs().maxCoeff();
      CHECK((k.m - gram).cwiseAbs().maxCoeff() < 1e-12 * scale);
    }
  }
}

TEST_CASE("entk against finite-difference Jacobians") {
  NetConfig c = make_config(Parameterization::kMuP, 8, 3, 1.0, 7);
  const ParamSet p = init_params(c);
  const Matrix x = probes_of(9, 5, 5);
  const Vector theta = p.flatten();
  const double eps = 1e-5;
  Matrix jac_fd(5, theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector tp = theta, tm = theta;
    tp(i) += eps;
    tm(i) -= eps;
    const Matrix fp = forward(ParamSet::from_flat(c, tp), c, x).output;
    const Matrix fm = forward(ParamSet::from_flat(c, tm), c, x).output;
    for (int mu = 0; mu < 5; ++mu)
      jac_fd(mu, i) = (fp(0, mu) - fm(0, mu)) / (2.0 * eps);
  }
  const Matrix gram_fd = jac_fd * jac_fd.transpose();
  const KernelMatrix k = entk(p, c, x);
  CHECK((k.m - gram_fd).cwiseAbs().maxCoeff() <
        1e-4 * gram_fd.cwiseAbs().maxCoeff());
}

TEST_CASE("entk on a hand-computable single-neuron net") {
  // N = 1, depth 1, SP, alpha0 = 1, positive weights: for x with positive
  // first component, f = wl * relu(w0 . x / sqrt(D)), and the kernel between
  // two points is wl^2 h h' + relu(h) relu(h') with h = w0 . x / sqrt(D).
  NetConfig c;
  c.depth = 1;
  c.width = 1;
  c.input_dim = 2;
  c.output_dim = 1;
  c.alpha0 = 1.0;
  c.parameterization = Parameterization::kSP;
  c.seed = 1;
  ParamSet p;
  Matrix w0(1, 2);
  w0 << 1.0, 0.5;
  Matrix wl(1, 1);
  wl << 2.0;
  p.weights = {w0, wl};

  Matrix x(2, 2);
  x << 1.0, 0.6, 0.0, 0.8;
  const double inv_sqrt_d = 1.0 / std::sqrt(2.0);
  const double h1 = (1.0 * 1.0 + 0.5 * 0.0) * inv_sqrt_d;
  const double h2 = (1.0 * 0.6 + 0.5 * 0.8) * inv_sqrt_d;
  // d f / d w0 = wl * relu'(h) * x / sqrt(D); d f / d wl = relu(h)
  auto kernel_entry = [&](double ha, double hb, const Vector& xa,
                          const Vector& xb) {
    return 4.0 * (xa.dot(xb) / 2.0) + ha * hb;
  };
  const KernelMatrix k = entk(p, c, x);
  CHECK(k.m(0, 0) == doctest::Approx(kernel_entry(h1, h1, x.col(0), x.col(0))));
  CHECK(k.m(0, 1) == doctest::Approx(kernel_entry(h1, h2, x.col(0), x.col(1))));
  CHECK(k.m(1, 1) == doctest::Approx(kernel_entry(h2, h2, x.col(1), x.col(1))));
}

TEST_CASE("raw entk is PSD and symmetric") {
  NetConfig c = make_config(Parameterization::kMuP, 16, 3, 1.0, 11);
  const ParamSet p = init_params(c);
  const Matrix x = probes_of(13, 5, 12);
  const KernelMatrix k = entk(p, c, x);
  CHECK((k.m - k.m.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  const auto eig = sym_eig(k.m, 1e-14 * k.m.cwiseAbs().maxCoeff());
  CHECK(eig.values.minCoeff() > -1e-8 * eig.values.maxCoeff());
}

TEST_CASE("NTK layer decomposition identity") {
  // entk must equal a^2 Phi^L + sum_l (1/N) G^{l+1} o Phi^l + (1/N) G^1 o Phi^0
  // with the feature/gradient kernels from the metrics module, at init and
  // after training, in both parameterizations.
  const Matrix x = probes_of(17, 5, 9);
  const Matrix y = target_eval(
      [] {
        TaskSpec t;
        t.input_dim = 5;
        return t;
      }(),
      x);

  for (Parameterization param :
       {Parameterization::kMuP, Parameterization::kSP}) {
    NetConfig c = make_config(param, 24, 3, 2.0, 19);
    for (bool trained : {false, true}) {
      const ParamSet p =
          trained ? train_steps(c, x, y, 25, 0.3) : init_params(c);
      const KernelMatrix k = entk(p, c, x);
      const ForwardTrace trace = forward(p, c, x);
      const double n = c.width;
      const double a = c.output_scale();

      Matrix rhs = (a * a) * feature_kernel(trace, c.depth).m;
      for (int l = 1; l < c.depth; ++l)
        rhs += (1.0 / n) * gradient_kernel(p, c, x, l + 1)
                   .m.cwiseProduct(feature_kernel(trace, l).m);
      const Matrix phi0 =
          (x.transpose() * x) / static_cast<double>(c.input_dim);
      rhs += (1.0 / n) * gradient_kernel(p, c, x, 1).m.cwiseProduct(phi0);

      const double scale = k.m.cwiseAbs().maxCoeff();
      CHECK((k.m - rhs).cwiseAbs().maxCoeff() < 1e-10 * scale);
    }
  }
}

TEST_CASE("flow normalization applies the lr and measure factors") {
  NetConfig mup = make_config(Parameterization::kMuP, 32, 2, 3.0, 23);
  const ParamSet p = init_params(mup);
  const Matrix x = probes_of(29, 5, 6);
  const KernelMatrix raw = entk(p, mup, x);
  const KernelMatrix flow = to_flow(raw, mup);
  const double factor = 32.0 / (1.0 + 9.0) / 6.0;
  CHECK((flow.m - factor * raw.m).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(flow.norm == KernelNorm::kFlow);
  CHECK_THROWS_AS(to_flow(flow, mup), ShapeMismatchError);

  NetConfig sp = mup;
  sp.parameterization = Parameterization::kSP;
  const KernelMatrix flow_sp = to_flow(raw, sp);
  CHECK((flow_sp.m - raw.m / 10.0 / 6.0).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("ensemble_avg basics and mismatch errors") {
  NetConfig c = make_config(Parameterization::kMuP, 8, 2, 1.0, 31);
  const Matrix x = probes_of(37, 5, 4);
  const KernelMatrix k1 = entk(init_params(c), c, x);
  CHECK((ensemble_avg({k1}).m - k1.m).cwiseAbs().maxCoeff() == 0.0);

  KernelMatrix k2 = k1;
  k2.m = 3.0 * k1.m;  // mean of {K, 3K} is 2K
  const KernelMatrix mean = ensemble_avg({k1, k2});
  CHECK((mean.m - 2.0 * k1.m).cwiseAbs().maxCoeff() < 1e-12);

  KernelMatrix bad = k1;
  bad.m = Matrix::Zero(3, 3);
  bad.probe_ids = {0, 1, 2};
  CHECK_THROWS_AS(ensemble_avg({k1, bad}), ShapeMismatchError);
  CHECK_THROWS_AS(ensemble_avg({}), ShapeMismatchError);
}

TEST_CASE("kernel entry variance across seeds falls like 1/N") {
  // Entrywise seed-variance of the flow kernel, fitted against width.
  const Matrix x = probes_of(41, 5, 24);
  std::vector<double> log_n, log_var;
  for (int width : {64, 128, 256, 512}) {
    const int n_seeds = 8;
    std::vector<Matrix> mats;
    for (int seed = 0; seed < n_seeds; ++seed) {
      NetConfig c = make_config(Parameterization::kMuP, width, 3, 1.0,
                                500 + static_cast<std::uint64_t>(seed));
      mats.push_back(to_flow(entk(init_params(c), c, x), c).m);
    }
    Matrix mean = Matrix::Zero(24, 24);
    for (const auto& m : mats) mean += m;
    mean /= n_seeds;
    Matrix var = Matrix::Zero(24, 24);
    for (const auto& m : mats) var += (m - mean).cwiseProduct(m - mean);
    var /= (n_seeds - 1);
    log_n.push_back(std::log(static_cast<double>(width)));
    log_var.push_back(std::log(var.mean()));
  }
  const double slope = fit_slope(log_n, log_var);
  CHECK(slope < -0.75);
  CHECK(slope > -1.25);
}

TEST_CASE("width-rescaled kernels are stable across widths at init") {
  // Entries of N * K vary mildly across widths under muP.
  const Matrix x = probes_of(43, 5, 16);
  std::vector<Matrix> scaled;
  for (int width : {128, 512, 2048}) {
    Matrix mean = Matrix::Zero(16, 16);
    const int n_seeds = 4;
    for (int seed = 0; seed < n_seeds; ++seed) {
      NetConfig c = make_config(Parameterization::kMuP, width, 3, 1000.0,
                                900 + static_cast<std::uint64_t>(seed));
      mean += static_cast<double>(width) * entk(init_params(c), c, x).m;
    }
    scaled.push_back(mean / n_seeds);
  }
  const double ref = scaled.back().norm();
  for (std::size_t i = 0; i + 1 < scaled.size(); ++i) {
    const double rel = (scaled[i] - scaled.back()).norm() / ref;
    CHECK(rel < 0.25);
  }
}

TEST_CASE("spectral_report diagonalizes and satisfies Parseval") {
  // Build a kernel with known eigenstructure.
  const int p = 8;
  Matrix basis = testutil::random_symmetric(47, p);
  Eigen::HouseholderQR<Matrix> qr(basis);
  Matrix q = qr.householderQ();
  Vector lambda(p);
  for (int i = 0; i < p; ++i) lambda(i) = std::pow(2.0, -i);
  const Matrix k = q * lambda.asDiagonal() * q.transpose();
  const KernelMatrix kernel = flow_kernel_from(k);

  SUBCASE("target aligned with the top eigenvector") {
    const Vector y = std::sqrt(static_cast<double>(p)) * q.col(0);
    const SpectralReport report = spectral_report(kernel, y);
    CHECK(report.target_norm == doctest::Approx(1.0));
    CHECK(report.cumulative_power(0) == 0.0);
    CHECK(report.cumulative_power(1) == doctest::Approx(1.0));
    CHECK(report.cumulative_power(p) == doctest::Approx(1.0));
  }

  SUBCASE("target orthogonal to the top modes") {
    const Vector y = q.col(3);
    const SpectralReport report = spectral_report(kernel, y);
    CHECK(report.cumulative_power(3) == doctest::Approx(0.0));
    CHECK(report.cumulative_power(4) == doctest::Approx(1.0));
  }

  SUBCASE("random target: Parseval and monotonicity") {
    Rng rng(53);
    Vector y(p);
    for (int i = 0; i < p; ++i) y(i) = rng.next_gaussian();
    const SpectralReport report = spectral_report(kernel, y);
    CHECK(report.coefficients.squaredNorm() ==
          doctest::Approx(report.target_norm).epsilon(1e-10));
    for (int i = 1; i <= p; ++i)
      CHECK(report.cumulative_power(i) >= report.cumulative_power(i - 1));
    CHECK(report.cumulative_power(p) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("lazy_loss_curve closed forms and matrix-exponential oracle") {
  SpectralReport single;
  single.eigenvalues = Vector::Constant(1, 0.5);
  single.coefficients = Vector::Constant(1, 1.0);
  single.target_norm = 1.0;
  const Vector l = lazy_loss_curve(single, {0.0, 1.0});
  CHECK(l(0) == doctest::Approx(1.0));
  CHECK(l(1) == doctest::Approx(std::exp(-1.0)));

  // two modes against an explicit matrix exponential of the same kernel
  const Matrix k = testutil::random_psd(59, 2);
  const KernelMatrix kernel = flow_kernel_from(k);
  Rng rng(61);
  Vector y(2);
  y << rng.next_gaussian(), rng.next_gaussian();
  const SpectralReport report = spectral_report(kernel, y);
  for (double t : {0.0, 0.3, 1.7, 4.0}) {
    // oracle: expm(-K t) y via scaling-free series (2x2, converges fast)
    Matrix a = -t * k;
    Matrix term = Matrix::Identity(2, 2);
    Matrix sum = term;
    for (int i = 1; i < 60; ++i) {
      term = term * a / i;
      sum += term;
    }
    const Vector residual = sum * y;
    const double oracle = residual.squaredNorm() / 2.0;
    const Vector pred = lazy_loss_curve(report, {t});
    CHECK(pred(0) == doctest::Approx(oracle).epsilon(1e-8));
  }
}

TEST_CASE("kernel_flow closed forms and RK4 oracle") {
  SUBCASE("identity kernel decays every mode as exp(-t)") {
    const KernelMatrix kernel = flow_kernel_from(Matrix::Identity(3, 3));
    Vector y(3);
    y << 1.0, -2.0, 0.5;
    const FlowResult flow = kernel_flow(kernel, y, {0.0, 1.0, 2.0});
    for (int i = 0; i < 3; ++i) {
      CHECK(flow.residuals(i, 1) == doctest::Approx(y(i) * std::exp(-1.0)));
      CHECK(flow.residuals(i, 2) == doctest::Approx(y(i) * std::exp(-2.0)));
    }
    CHECK(flow.loss(0) == doctest::Approx(y.squaredNorm() / 3.0));
  }

  SUBCASE("zero kernel freezes the residual") {
    const KernelMatrix kernel = flow_kernel_from(Matrix::Zero(3, 3));
    Vector y(3);
    y << 1.0, -2.0, 0.5;
    const FlowResult flow = kernel_flow(kernel, y, {0.0, 5.0});
    CHECK((flow.residuals.col(1) - y).cwiseAbs().maxCoeff() < 1e-14);
  }

  SUBCASE("random kernel against fourth-order time stepping") {
    const Matrix k = testutil::random_psd(67, 3);
    const KernelMatrix kernel = flow_kernel_from(k);
    Vector y(3);
    y << 0.7, -0.4, 1.1;
    const double t_end = 2.0;
    const FlowResult flow = kernel_flow(kernel, y, {t_end});

    Vector state = y;
    const double dt = 1e-4;
    const int steps = static_cast<int>(t_end / dt);
    for (int s = 0; s < steps; ++s) {
      const Vector k1 = -k * state;
      const Vector k2 = -k * (state + 0.5 * dt * k1);
      const Vector k3 = -k * (state + 0.5 * dt * k2);
      const Vector k4 = -k * (state + dt * k3);
      state += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    CHECK((flow.residuals.col(0) - state).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("propagator basics and consistency with kernel_flow") {
  const Matrix k = testutil::random_psd(71, 4);
  KernelMatrix kernel = flow_kernel_from(k);

  const std::vector<double> times{0.0, 0.5, 1.0, 2.0};
  const std::vector<KernelMatrix> series{kernel, kernel, kernel};
  const auto t_series = propagator(series, times);
  REQUIRE(t_series.size() == 4);
  CHECK((t_series[0] - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);

  // constant kernel: T(t) = expm(-K t), checked in the eigenbasis
  const auto eig = sym_eig(k, 1e-13);
  for (std::size_t i = 0; i < times.size(); ++i) {
    Matrix expm = eig.vectors;
    for (int c = 0; c < 4; ++c)
      expm.col(c) *= std::exp(-eig.values(c) * times[i]);
    expm = expm * eig.vectors.transpose();
    CHECK((t_series[i] - expm).cwiseAbs().maxCoeff() < 1e-8);
  }

  // T(t) y reproduces kernel_flow
  Rng rng(73);
  Vector y(4);
  for (int i = 0; i < 4; ++i) y(i) = rng.next_gaussian();
  const FlowResult flow = kernel_flow(kernel, y, times);
  for (std::size_t i = 0; i < times.size(); ++i)
    CHECK((t_series[i] * y - flow.residuals.col(static_cast<Eigen::Index>(i)))
              .cwiseAbs()
              .maxCoeff() < 1e-8);

  CHECK_THROWS_AS(propagator(series, {0.5, 1.0}), ShapeMismatchError);
  CHECK_THROWS_AS(propagator({kernel}, times), ShapeMismatchError);
}
