#include "widthlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "widthlab/errors.hpp"

namespace widthlab {

namespace {

double max_offdiag(const Matrix& a) {
  const Eigen::Index n = a.rows();
  double m = 0.0;
  for (Eigen::Index p = 0; p < n; ++p)
    for (Eigen::Index q = p + 1; q < n; ++q)
      m = std::max(m, std::abs(a(p, q)));
  return m;
}

}  // namespace

EigenDecomposition sym_eig(const Matrix& m, double tol, int max_sweeps) {
  const Eigen::Index n = m.rows();
  if (n != m.cols()) throw NonSquareError("sym_eig: matrix is not square");
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-10)
        throw NotSymmetricError("sym_eig: matrix is not symmetric");

  Matrix a = (m + m.transpose()) / 2.0;  // exact symmetrization
  Matrix v = Matrix::Identity(n, n);

  bool converged = (n < 2) || max_offdiag(a) < tol;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < tol) continue;
        // Classic two-sided rotation annihilating a(p, q).
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    converged = max_offdiag(a) < tol;
  }
  if (!converged)
    throw ConvergenceError("sym_eig: no convergence within sweep budget");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&a](Eigen::Index i, Eigen::Index j) {
                     return a(i, i) > a(j, j);
                   });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[static_cast<std::size_t>(k)],
                      order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = out.vectors(i, k);
      if (std::abs(x) > 1e-12) {
        if (x < 0.0) out.vectors.col(k) = -out.vectors.col(k);
        break;
      }
    }
  }
  return out;
}

Vector sym_expm_apply(const Matrix& m, const Vector& y, double t) {
  const EigenDecomposition eig = sym_eig(m, 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()));
  const Vector coeffs = eig.vectors.transpose() * y;
  Vector scaled = coeffs;
  for (Eigen::Index k = 0; k < scaled.size(); ++k)
    scaled(k) *= std::exp(-t * eig.values(k));
  return eig.vectors * scaled;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  return num / den;
}

}  // namespace widthlab
