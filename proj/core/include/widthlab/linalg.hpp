#pragma once

#include <vector>

#include <Eigen/Core>

namespace widthlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Eigendecomposition of a symmetric matrix.  Eigenvalues are sorted in
/// descending order; `vectors` holds one orthonormal column per eigenvalue.
/// Sign convention: in each eigenvector, the first component of magnitude
/// above 1e-12 is non-negative.
struct EigenDecomposition {
  Vector values;
  Matrix vectors;
};

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps run until the largest off-diagonal magnitude drops below `tol`
/// (absolute), up to `max_sweeps` sweeps; exceeding the sweep budget throws
/// ConvergenceError.  Throws NonSquareError for rectangular input and
/// NotSymmetricError when any entry differs from its transpose partner by
/// more than 1e-10.
EigenDecomposition sym_eig(const Matrix& m, double tol = 1e-12,
                           int max_sweeps = 100);

/// exp(-t*M) * y for symmetric M, evaluated through sym_eig.
Vector sym_expm_apply(const Matrix& m, const Vector& y, double t);

/// Slope of the least-squares line through (x_i, y_i).
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace widthlab
