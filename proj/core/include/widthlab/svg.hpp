#pragma once

#include <string>
#include <vector>

namespace widthlab {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

/// Self-contained static SVG line plot (no external references).
void write_svg(const LinePlot& plot, const std::string& path);

}  // namespace widthlab
