#include "widthlab/ensemble_table.hpp"

#include <algorithm>

#include "widthlab/errors.hpp"

namespace widthlab {

double mse(const Matrix& f, const Matrix& y) {
  if (f.rows() != y.rows() || f.cols() != y.cols())
    throw ShapeMismatchError("mse: shape mismatch");
  return (f - y).squaredNorm() / static_cast<double>(f.size());
}

std::vector<int> EnsembleTable::widths() const {
  std::vector<int> out;
  for (const auto& c : cells)
    if (out.empty() || out.back() != c.width) out.push_back(c.width);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<const CellSeries*> EnsembleTable::cells_for(int width) const {
  std::vector<const CellSeries*> out;
  for (const auto& c : cells)
    if (c.width == width && !c.diverged) out.push_back(&c);
  return out;
}

std::vector<std::int64_t> EnsembleTable::steps_for(int width) const {
  const auto group = cells_for(width);
  if (group.empty()) return {};
  return group.front()->recorded_steps;
}

Matrix EnsembleTable::ensemble_logits(int width, std::size_t idx) const {
  const auto group = cells_for(width);
  if (group.empty()) throw InsufficientSeedsError("no cells at this width");
  Matrix acc = group.front()->probe_logits.at(idx);
  for (std::size_t i = 1; i < group.size(); ++i)
    acc += group[i]->probe_logits.at(idx);
  return acc / static_cast<double>(group.size());
}

double EnsembleTable::ensemble_loss(int width, std::size_t idx) const {
  return mse(ensemble_logits(width, idx), targets);
}

double EnsembleTable::mean_single_loss(int width, std::size_t idx) const {
  const auto group = cells_for(width);
  if (group.empty()) throw InsufficientSeedsError("no cells at this width");
  double acc = 0.0;
  for (const auto* c : group) acc += c->probe_loss.at(idx);
  return acc / static_cast<double>(group.size());
}

}  // namespace widthlab
