#include "widthlab/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "widthlab/errors.hpp"

namespace widthlab {

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty())
    throw EmptyInputError("wasserstein1: empty sample list");

  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());

  const std::size_t na = sa.size();
  const std::size_t nb = sb.size();

  // Walk the merged breakpoints i/na and j/nb of the two step quantile
  // functions; on each segment both quantiles are constant.
  double dist = 0.0;
  std::size_t i = 0, j = 0;
  double u = 0.0;
  while (i < na && j < nb) {
    const double ua = static_cast<double>(i + 1) / static_cast<double>(na);
    const double ub = static_cast<double>(j + 1) / static_cast<double>(nb);
    const double next = std::min(ua, ub);
    dist += (next - u) * std::abs(sa[i] - sb[j]);
    u = next;
    if (ua <= next) ++i;
    if (ub <= next) ++j;
  }
  return dist;
}

}  // namespace widthlab
