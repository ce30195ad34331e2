#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "widthlab/csv.hpp"
#include "widthlab/errors.hpp"
#include "widthlab/experiments.hpp"
#include "widthlab/svg.hpp"

namespace widthlab {

namespace fs = std::filesystem;

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw MalformedArtifactError("csv column missing: " + name);
  }
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MalformedArtifactError("cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (first) {
      table.header = fields;
      first = false;
    } else {
      table.rows.push_back(fields);
    }
  }
  if (first) throw MalformedArtifactError("empty csv " + path.string());
  return table;
}

void copy_csv(const fs::path& src, const fs::path& dst) {
  if (!fs::exists(src)) return;
  fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
}

void plot_loss_curves(const ExperimentConfig& config, const EnsembleTable& table,
                      const fs::path& out) {
  LinePlot plot;
  plot.title = preset_name(config.preset) + ": probe loss vs step";
  plot.x_label = "step";
  plot.y_label = "probe loss (ensemble)";
  plot.log_y = true;
  for (int width : table.widths()) {
    if (table.cells_for(width).empty()) continue;
    PlotSeries s;
    s.label = "N=" + std::to_string(width);
    const auto steps = table.steps_for(width);
    for (std::size_t i = 0; i < steps.size(); ++i) {
      s.x.push_back(static_cast<double>(steps[i]));
      s.y.push_back(table.ensemble_loss(width, i));
    }
    plot.series.push_back(std::move(s));
  }
  write_svg(plot, out.string());
}

void plot_rmse_to_widest(const EnsembleTable& table, const fs::path& out) {
  const auto widths = table.widths();
  if (widths.size() < 2) return;
  const int widest = widths.back();
  if (table.cells_for(widest).empty()) return;
  const std::size_t last = table.steps_for(widest).size() - 1;
  const Matrix ref = table.ensemble_logits(widest, last);

  PlotSeries measured;
  measured.label = "rmse to widest";
  for (int width : widths) {
    if (width == widest || table.cells_for(width).empty()) continue;
    measured.x.push_back(static_cast<double>(width));
    measured.y.push_back(
        relative_rmse(table.ensemble_logits(width, last), ref));
  }
  if (measured.x.empty()) return;

  // 1/sqrt(N) and 1/N guides through the first measured point.
  const double x0 = measured.x.front();
  const double y0 = measured.y.front();
  PlotSeries sqrt_ref, inv_ref;
  sqrt_ref.label = "1/sqrt(N)";
  sqrt_ref.dashed = true;
  inv_ref.label = "1/N";
  inv_ref.dashed = true;
  for (double x : measured.x) {
    sqrt_ref.x.push_back(x);
    sqrt_ref.y.push_back(y0 * std::sqrt(x0 / x));
    inv_ref.x.push_back(x);
    inv_ref.y.push_back(y0 * (x0 / x));
  }

  LinePlot plot;
  plot.title = "pointwise convergence to the widest network";
  plot.x_label = "width N";
  plot.y_label = "relative RMSE";
  plot.log_x = true;
  plot.log_y = true;
  plot.series = {measured, sqrt_ref, inv_ref};
  write_svg(plot, out.string());
}

void plot_cumulative_power(const fs::path& spectra_csv, const fs::path& out) {
  if (!fs::exists(spectra_csv)) return;
  const CsvTable t = read_csv(spectra_csv);
  const int wcol = t.col("width");
  const int kcol = t.col("k");
  const int ccol = t.col("cumulative_power");
  std::map<int, PlotSeries> by_width;
  for (const auto& row : t.rows) {
    const int w = std::stoi(row[static_cast<std::size_t>(wcol)]);
    auto& s = by_width[w];
    s.label = "N=" + std::to_string(w);
    s.x.push_back(std::stod(row[static_cast<std::size_t>(kcol)]));
    s.y.push_back(std::stod(row[static_cast<std::size_t>(ccol)]));
  }
  LinePlot plot;
  plot.title = "cumulative power distribution C(k)";
  plot.x_label = "mode k";
  plot.y_label = "C(k)";
  plot.log_x = true;
  for (auto& [w, s] : by_width) plot.series.push_back(std::move(s));
  write_svg(plot, out.string());
}

void plot_biasvar(const fs::path& biasvar_csv, const fs::path& out) {
  if (!fs::exists(biasvar_csv)) return;
  const CsvTable t = read_csv(biasvar_csv);
  const int wcol = t.col("width");
  const int scol = t.col("step");
  const int vcol = t.col("variance");
  const int bcol = t.col("bias");
  // final step per width
  std::map<int, std::pair<double, double>> final_rows;
  std::map<int, long long> final_step;
  for (const auto& row : t.rows) {
    const int w = std::stoi(row[static_cast<std::size_t>(wcol)]);
    const long long step = std::stoll(row[static_cast<std::size_t>(scol)]);
    if (final_step.count(w) == 0 || step >= final_step[w]) {
      final_step[w] = step;
      final_rows[w] = {std::stod(row[static_cast<std::size_t>(vcol)]),
                       std::stod(row[static_cast<std::size_t>(bcol)])};
    }
  }
  PlotSeries variance, bias;
  variance.label = "variance";
  bias.label = "bias";
  for (const auto& [w, vb] : final_rows) {
    variance.x.push_back(w);
    variance.y.push_back(std::max(vb.first, 0.0));
    bias.x.push_back(w);
    bias.y.push_back(std::max(vb.second, 0.0));
  }
  LinePlot plot;
  plot.title = "bias and variance of finite width (final step)";
  plot.x_label = "width N";
  plot.y_label = "loss gap";
  plot.log_x = true;
  plot.log_y = true;
  plot.series = {variance, bias};
  write_svg(plot, out.string());
}

}  // namespace

void emit_report(const std::vector<std::string>& run_dirs,
                 const std::string& out_dir) {
  if (run_dirs.empty()) throw Error("emit_report: empty run list");

  // Validate everything up front so failure leaves no partial output.
  struct Loaded {
    std::string prefix;
    ExperimentConfig config;
    EnsembleTable table;
  };
  std::vector<Loaded> runs;
  for (const auto& dir : run_dirs) {
    Loaded l;
    l.config = load_sweep_config(dir);
    l.config.out_dir = dir;
    l.table = load_sweep_table(dir);
    l.prefix = fs::path(dir).filename().string();
    if (l.prefix.empty()) l.prefix = "run";
    runs.push_back(std::move(l));
  }

  fs::create_directories(out_dir);
  for (const auto& run : runs) {
    const fs::path src = run.config.out_dir;
    const fs::path dst = out_dir;
    const std::string p = run.prefix + "_";
    for (const char* name :
         {"losses.csv", "logits.csv", "biasvar.csv", "preact.csv",
          "preact_init.csv", "spectra.csv", "flow_loss.csv",
          "alpha_logits.csv", "alpha_rmse.csv"})
      copy_csv(src / name, dst / (p + name));

    plot_loss_curves(run.config, run.table, dst / (p + "loss_vs_step.svg"));
    plot_rmse_to_widest(run.table, dst / (p + "rmse_vs_width.svg"));
    plot_cumulative_power(src / "spectra.csv",
                          dst / (p + "cumulative_power.svg"));
    plot_biasvar(src / "biasvar.csv", dst / (p + "biasvar.svg"));
  }
}

}  // namespace widthlab
