#include <cmath>
#include <vector>

#include <doctest.h>

#include "test_util.hpp"
#include "widthlab/errors.hpp"
#include "widthlab/metrics.hpp"
#include "widthlab/net.hpp"
#include "widthlab/tasks.hpp"

using namespace widthlab;

namespace {

NetConfig make_config(Parameterization p, int width, int depth, double alpha0,
                      std::uint64_t seed) {
  NetConfig c;
  c.depth = depth;
  c.width = width;
  c.input_dim = 5;
  c.output_dim = 1;
  c.alpha0 = alpha0;
  c.parameterization = p;
  c.seed = seed;
  return c;
}

Matrix probes_of(std::uint64_t seed, int dim, int n) {
  Rng rng(seed);
  return sample_sphere(rng, dim, n);
}

}  // namespace

TEST_CASE("feature_kernel basics") {
  // all-negative preactivations give the zero kernel (relu kills them)
  ForwardTrace trace;
  trace.preacts.push_back(Matrix::Constant(4, 3, -1.0));
  const KernelMatrix zero = feature_kernel(trace, 1);
  CHECK(zero.m.cwiseAbs().maxCoeff() == 0.0);

  // single neuron: rank-one kernel c_mu c_nu
  ForwardTrace single;
  Matrix h(1, 3);
  h << 0.5, 2.0, -1.0;
  single.preacts.push_back(h);
  const KernelMatrix k = feature_kernel(single, 1);
  CHECK(k.m(0, 0) == doctest::Approx(0.25));
  CHECK(k.m(0, 1) == doctest::Approx(1.0));
  CHECK(k.m(1, 1) == doctest::Approx(4.0));
  CHECK(k.m(2, 2) == doctest::Approx(0.0));

  CHECK_THROWS_AS(feature_kernel(single, 2), LayerError);
  CHECK_THROWS_AS(feature_kernel(single, 0), LayerError);
}

TEST_CASE("feature_kernel equals a direct double sum") {
  NetConfig c = make_config(Parameterization::kMuP, 7, 3, 1.0, 3);
  const ParamSet p = init_params(c);
  const Matrix x = probes_of(5, 5, 6);
  const ForwardTrace trace = forward(p, c, x);
  for (int layer = 1; layer <= 3; ++layer) {
    const KernelMatrix k = feature_kernel(trace, layer);
    for (int mu = 0; mu < 6; ++mu) {
      for (int nu = 0; nu < 6; ++nu) {
        double acc = 0.0;
        for (int i = 0; i < 7; ++i) {
          const double a =
              std::max(trace.preacts[static_cast<std::size_t>(layer - 1)](i, mu), 0.0);
          const double b =
              std::max(trace.preacts[static_cast<std::size_t>(layer - 1)](i, nu), 0.0);
          acc += a * b;
        }
        CHECK(k.m(mu, nu) == doctest::Approx(acc / 7.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("gradient_kernel last layer matches the hand formula") {
  // g_i = alpha0 w^L_i relu'(h^L_i) under muP at the last hidden layer.
  NetConfig c = make_config(Parameterization::kMuP, 4, 2, 3.0, 7);
  const ParamSet p = init_params(c);
  const Matrix x = probes_of(9, 5, 5);
  const ForwardTrace trace = forward(p, c, x);

  const KernelMatrix g = gradient_kernel(p, c, x, 2);
  for (int mu = 0; mu < 5; ++mu) {
    for (int nu = 0; nu < 5; ++nu) {
      double acc = 0.0;
      for (int i = 0; i < 4; ++i) {
        const double gm = 3.0 * p.weights[2](0, i) *
                          (trace.preacts[1](i, mu) > 0.0 ? 1.0 : 0.0);
        const double gn = 3.0 * p.weights[2](0, i) *
                          (trace.preacts[1](i, nu) > 0.0 ? 1.0 : 0.0);
        acc += gm * gn;
      }
      CHECK(g.m(mu, nu) == doctest::Approx(acc / 4.0).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(gradient_kernel(p, c, x, 3), LayerError);
}

TEST_CASE("gradient_kernel is probe independent for a linear-regime net") {
  // With every relu active the backprop signal has no input dependence.
  NetConfig c = make_config(Parameterization::kSP, 3, 2, 1.0, 11);
  c.input_dim = 2;
  ParamSet p;
  Rng rng(13);
  auto positive = [&](Eigen::Index r, Eigen::Index cc) {
    Matrix w(r, cc);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < cc; ++j)
        w(i, j) = 0.1 + std::abs(rng.next_gaussian());
    return w;
  };
  p.weights = {positive(3, 2), positive(3, 3), positive(1, 3)};
  Matrix x(2, 4);
  x << 0.9, 0.5, 0.3, 0.8, 0.1, 0.6, 0.7, 0.2;  // positive entries
  for (int layer = 1; layer <= 2; ++layer) {
    const KernelMatrix g = gradient_kernel(p, c, x, layer);
    const double first = g.m(0, 0);
    CHECK((g.m.array() - first).abs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("cka properties and an independent implementation") {
  const Matrix k1 = testutil::random_psd(17, 8);
  const Matrix k2 = testutil::random_psd(19, 8);
  KernelMatrix a, b;
  a.m = k1;
  b.m = k2;

  CHECK(cka(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  KernelMatrix scaled = a;
  scaled.m *= 7.5;
  CHECK(cka(a, scaled) == doctest::Approx(1.0).epsilon(1e-12));

  // independent implementation: explicit centering matrix product
  const int p = 8;
  const Matrix h = Matrix::Identity(p, p) - Matrix::Constant(p, p, 1.0 / p);
  const Matrix c1 = h * k1 * h;
  const Matrix c2 = h * k2 * h;
  const double expected =
      (c1.array() * c2.array()).sum() / (c1.norm() * c2.norm());
  CHECK(cka(a, b) == doctest::Approx(expected).epsilon(1e-12));
  const double v = cka(a, b);
  CHECK(v >= 0.0);
  CHECK(v <= 1.0);

  KernelMatrix tiny;
  tiny.m = Matrix::Zero(4, 4);
  KernelMatrix other;
  other.m = testutil::random_psd(23, 4);
  CHECK_THROWS_AS(cka(tiny, other), DegenerateKernelError);
  KernelMatrix mismatched;
  mismatched.m = Matrix::Zero(3, 3);
  CHECK_THROWS_AS(cka(a, mismatched), ShapeMismatchError);

  // constant kernels center to zero as well
  KernelMatrix constant;
  constant.m = Matrix::Constant(4, 4, 2.0);
  CHECK_THROWS_AS(cka(constant, other), DegenerateKernelError);
}

TEST_CASE("relative_rmse closed forms") {
  Matrix f(2, 3);
  f << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
  CHECK(relative_rmse(f, f) == doctest::Approx(0.0));
  CHECK(relative_rmse(Matrix::Zero(2, 3), f) == doctest::Approx(1.0));
  CHECK(relative_rmse(2.0 * f, f) == doctest::Approx(1.0));
  CHECK_THROWS_AS(relative_rmse(f, Matrix::Zero(2, 3)), ZeroReferenceError);
  CHECK_THROWS_AS(relative_rmse(f, Matrix::Zero(3, 2)), ShapeMismatchError);
}

TEST_CASE("preact_stats on standard normal pools") {
  Rng rng(29);
  PreactSnapshot snap;
  snap.values = gaussian_stream(rng, 100'000);
  const PreactSummary s = preact_stats(snap);
  CHECK(std::abs(s.mean) < 0.02);
  CHECK(std::abs(s.variance - 1.0) < 0.02);
  CHECK(std::abs(s.skewness) < 0.05);
  CHECK(std::abs(s.excess_kurtosis) < 0.1);
  CHECK(s.w1_gauss < 0.01);

  PreactSnapshot small;
  small.values.assign(50, 0.0);
  CHECK_THROWS_AS(preact_stats(small), TooFewSamplesError);
}

TEST_CASE("preact_w1 identity and translation") {
  Rng rng(31);
  PreactSnapshot a;
  a.values = gaussian_stream(rng, 5000);
  CHECK(preact_w1(a, a) == doctest::Approx(0.0));

  PreactSnapshot shifted = a;
  for (double& v : shifted.values) v += 0.75;
  CHECK(preact_w1(a, shifted) == doctest::Approx(0.75).epsilon(1e-3));
}

TEST_CASE("bias_variance decomposition closed forms") {
  // Two widths, two members each.  At the narrow width the members are
  // y + e and y - e: ensemble is exact, mean single loss is <e^2>.
  const int p = 16;
  Rng rng(37);
  Matrix y(1, p);
  for (int i = 0; i < p; ++i) y(0, i) = rng.next_gaussian();
  Matrix e(1, p);
  for (int i = 0; i < p; ++i) e(0, i) = rng.next_gaussian();

  EnsembleTable table;
  table.targets = y;
  auto add_cell = [&](int width, int seed, const Matrix& logits) {
    CellSeries cell;
    cell.width = width;
    cell.seed_index = seed;
    cell.recorded_steps = {0};
    cell.probe_loss = {mse(logits, y)};
    cell.probe_logits = {logits};
    table.cells.push_back(cell);
  };
  add_cell(8, 0, y + e);
  add_cell(8, 1, y - e);
  add_cell(16, 0, y);
  add_cell(16, 1, y);

  const auto rows = bias_variance(table, 16);
  REQUIRE(rows.size() == 2);
  const double e2 = e.array().square().mean();
  CHECK(rows[0].width == 8);
  CHECK(rows[0].ensemble_loss == doctest::Approx(0.0));
  CHECK(rows[0].mean_single_loss == doctest::Approx(e2));
  CHECK(rows[0].variance == doctest::Approx(e2));
  CHECK(rows[0].bias == doctest::Approx(0.0));
  CHECK(rows[1].width == 16);
  CHECK(rows[1].bias == doctest::Approx(0.0));  // reference against itself
  CHECK(rows[1].variance == doctest::Approx(0.0));

  // identical members: zero variance
  EnsembleTable same;
  same.targets = y;
  {
    CellSeries cell;
    cell.width = 8;
    cell.seed_index = 0;
    cell.recorded_steps = {0};
    cell.probe_loss = {mse(e, y)};
    cell.probe_logits = {e};
    same.cells.push_back(cell);
    cell.seed_index = 1;
    same.cells.push_back(cell);
  }
  const auto rows_same = bias_variance(same, 8);
  CHECK(rows_same[0].variance == doctest::Approx(0.0));

  EnsembleTable lone;
  lone.targets = y;
  lone.cells.push_back(table.cells.front());
  CHECK_THROWS_AS(bias_variance(lone, 8), InsufficientSeedsError);
}

TEST_CASE("ensembling never hurts under MSE") {
  Rng rng(41);
  const int p = 32;
  Matrix y(1, p);
  for (int i = 0; i < p; ++i) y(0, i) = rng.next_gaussian();
  EnsembleTable table;
  table.targets = y;
  for (int seed = 0; seed < 6; ++seed) {
    CellSeries cell;
    cell.width = 4;
    cell.seed_index = seed;
    cell.recorded_steps = {0};
    Matrix logits(1, p);
    for (int i = 0; i < p; ++i) logits(0, i) = rng.next_gaussian();
    cell.probe_loss = {mse(logits, y)};
    cell.probe_logits = {logits};
    table.cells.push_back(cell);
  }
  CHECK(table.ensemble_loss(4, 0) <= table.mean_single_loss(4, 0) + 1e-15);
}

TEST_CASE("power iteration on a known spectrum") {
  Matrix h = Matrix::Zero(2, 2);
  h(0, 0) = 3.0;
  h(1, 1) = 1.0;
  const double top = power_iteration(
      [&](const Vector& v) { return Vector(h * v); }, 2, Rng(43));
  CHECK(top == doctest::Approx(3.0).epsilon(0.01));

  // an exhausted iteration budget reports no convergence
  CHECK_THROWS_AS(power_iteration(
                      [&](const Vector& v) { return Vector(h * v); }, 2,
                      Rng(47), 0.01, 1),
                  ConvergenceError);
}

TEST_CASE("sharpness matches the dense finite-difference Hessian") {
  NetConfig c;
  c.depth = 3;
  c.width = 3;
  c.input_dim = 3;
  c.output_dim = 1;
  c.alpha0 = 1.5;
  c.parameterization = Parameterization::kMuP;
  c.seed = 53;
  const ParamSet p = init_params(c);
  const Matrix x = probes_of(59, 3, 12);
  const Matrix y = Matrix::Constant(1, 12, 0.7);

  const double s = sharpness(p, c, x, y);

  const Vector theta = p.flatten();
  auto loss_at = [&](const Vector& t) {
    return loss_and_grads(ParamSet::from_flat(c, t), c, x, y).loss;
  };
  const double eps = 3e-4;
  const int n = 30;
  Matrix h_fd(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Vector tpp = theta, tpm = theta, tmp = theta, tmm = theta;
      tpp(i) += eps;
      tpp(j) += eps;
      tpm(i) += eps;
      tpm(j) -= eps;
      tmp(i) -= eps;
      tmp(j) += eps;
      tmm(i) -= eps;
      tmm(j) -= eps;
      h_fd(i, j) =
          (loss_at(tpp) - loss_at(tpm) - loss_at(tmp) + loss_at(tmm)) /
          (4.0 * eps * eps);
    }
  }
  const auto eig = sym_eig((h_fd + h_fd.transpose()) / 2.0,
                           1e-12 * h_fd.cwiseAbs().maxCoeff());
  CHECK(std::abs(s - eig.values(0)) < 0.02 * std::abs(eig.values(0)));
}

TEST_CASE("sharpness is non-negative at a PSD point") {
  // At an exact interpolation point the Gauss-Newton term dominates and the
  // Hessian is PSD; the estimate must come out non-negative.
  NetConfig c = make_config(Parameterization::kMuP, 6, 2, 1.0, 61);
  const ParamSet p = init_params(c);
  const Matrix x = probes_of(67, 5, 8);
  const Matrix y = forward(p, c, x).output;  // zero residual
  const double s = sharpness(p, c, x, y);
  CHECK(s >= -1e-8);
}
