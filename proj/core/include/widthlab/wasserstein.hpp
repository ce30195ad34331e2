#pragma once

#include <span>

namespace widthlab {

/// 1-Wasserstein distance between the empirical distributions of two sample
/// lists.  Computed exactly as the integral of |Qa(u) - Qb(u)| over u in
/// (0, 1), where Qa, Qb are the empirical quantile functions: both are step
/// functions, so the integral is a sum of quantile gaps over the merged
/// breakpoint grid (which resamples the shorter list's quantile function when
/// the lengths differ).  For equal lengths this reduces to the mean absolute
/// difference of sorted samples.  Throws EmptyInputError if either list is
/// empty.
double wasserstein1(std::span<const double> a, std::span<const double> b);

}  // namespace widthlab
