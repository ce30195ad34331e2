#include "widthlab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "widthlab/csv.hpp"
#include "widthlab/errors.hpp"

namespace widthlab {

namespace {

constexpr double kWidth = 860.0;
constexpr double kHeight = 540.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 830.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 480.0;

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                          "#bcbd22", "#17becf"};

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  bool log = false;

  double place(double v, double out_lo, double out_hi) const {
    double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    t = std::clamp(t, 0.0, 1.0);
    return out_lo + t * (out_hi - out_lo);
  }
};

Axis fit_axis(const LinePlot& plot, bool for_x) {
  Axis axis;
  axis.log = for_x ? plot.log_x : plot.log_y;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : plot.series) {
    const auto& vals = for_x ? s.x : s.y;
    for (double v : vals) {
      if (!std::isfinite(v)) continue;
      if (axis.log && v <= 0.0) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = axis.log ? 1.0 : 0.0;
    hi = axis.log ? 10.0 : 1.0;
  }
  if (axis.log) {
    axis.lo = std::floor(std::log10(lo));
    axis.hi = std::ceil(std::log10(hi));
    if (axis.hi <= axis.lo) axis.hi = axis.lo + 1.0;
  } else {
    if (hi <= lo) hi = lo + 1.0;
    const double pad = 0.05 * (hi - lo);
    axis.lo = lo - pad;
    axis.hi = hi + pad;
  }
  return axis;
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

void write_svg(const LinePlot& plot, const std::string& path) {
  const Axis ax = fit_axis(plot, true);
  const Axis ay = fit_axis(plot, false);

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " +
         format_double(kWidth) + " " + format_double(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"430\" y=\"28\" text-anchor=\"middle\" font-size=\"18\" "
         "font-family=\"sans-serif\">" + esc(plot.title) + "</text>\n";

  // frame
  svg += "<rect x=\"" + format_double(kLeft) + "\" y=\"" + format_double(kTop) +
         "\" width=\"" + format_double(kRight - kLeft) + "\" height=\"" +
         format_double(kBottom - kTop) +
         "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";

  // ticks: 6 across each axis (decade ticks when log)
  auto tick_values = [](const Axis& a) {
    std::vector<double> ticks;
    if (a.log) {
      for (double d = a.lo; d <= a.hi + 1e-9; d += std::max(1.0, std::round((a.hi - a.lo) / 6.0)))
        ticks.push_back(std::pow(10.0, d));
    } else {
      for (int i = 0; i <= 5; ++i)
        ticks.push_back(a.lo + (a.hi - a.lo) * i / 5.0);
    }
    return ticks;
  };
  for (double tv : tick_values(ax)) {
    const double px = ax.place(tv, kLeft, kRight);
    svg += "<line x1=\"" + format_double(px) + "\" y1=\"" + format_double(kBottom) +
           "\" x2=\"" + format_double(px) + "\" y2=\"" + format_double(kBottom + 5) +
           "\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + format_double(px) + "\" y=\"" + format_double(kBottom + 20) +
           "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" +
           format_double(tv) + "</text>\n";
  }
  for (double tv : tick_values(ay)) {
    const double py = ay.place(tv, kBottom, kTop);
    svg += "<line x1=\"" + format_double(kLeft - 5) + "\" y1=\"" + format_double(py) +
           "\" x2=\"" + format_double(kLeft) + "\" y2=\"" + format_double(py) +
           "\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + format_double(kLeft - 8) + "\" y=\"" + format_double(py + 4) +
           "\" text-anchor=\"end\" font-size=\"12\" font-family=\"sans-serif\">" +
           format_double(tv) + "</text>\n";
  }
  svg += "<text x=\"430\" y=\"520\" text-anchor=\"middle\" font-size=\"14\" "
         "font-family=\"sans-serif\">" + esc(plot.x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"270\" text-anchor=\"middle\" font-size=\"14\" "
         "font-family=\"sans-serif\" transform=\"rotate(-90 18 270)\">" +
         esc(plot.y_label) + "</text>\n";

  for (std::size_t s = 0; s < plot.series.size(); ++s) {
    const PlotSeries& series = plot.series[s];
    const char* color = kPalette[s % 10];
    std::string points;
    bool pen_down = false;
    for (std::size_t i = 0; i < series.x.size(); ++i) {
      const double xv = series.x[i];
      const double yv = series.y[i];
      const bool ok = std::isfinite(xv) && std::isfinite(yv) &&
                      (!ax.log || xv > 0.0) && (!ay.log || yv > 0.0);
      if (!ok) {
        pen_down = false;
        continue;
      }
      points += (pen_down ? "L" : "M");
      points += format_double(ax.place(xv, kLeft, kRight)) + " " +
                format_double(ay.place(yv, kBottom, kTop)) + " ";
      pen_down = true;
    }
    svg += "<path d=\"" + points + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.5\"" +
           (series.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
    // legend
    const double ly = kTop + 16.0 + 18.0 * static_cast<double>(s);
    svg += "<line x1=\"" + format_double(kRight - 150) + "\" y1=\"" + format_double(ly - 4) +
           "\" x2=\"" + format_double(kRight - 126) + "\" y2=\"" + format_double(ly - 4) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"" +
           (series.dashed ? " stroke-dasharray=\"6 4\"" : "") + "/>\n";
    svg += "<text x=\"" + format_double(kRight - 120) + "\" y=\"" + format_double(ly) +
           "\" font-size=\"12\" font-family=\"sans-serif\">" + esc(series.label) +
           "</text>\n";
  }
  svg += "</svg>\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("svg: cannot open " + tmp);
    out << svg;
    if (!out) throw Error("svg: short write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace widthlab
