#include "widthlab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "json_util.hpp"
#include "widthlab/checkpoint.hpp"
#include "widthlab/csv.hpp"
#include "widthlab/errors.hpp"

namespace widthlab {

namespace fs = std::filesystem;
using detail::json;

namespace {

constexpr const char* kCodeVersion = "widthlab 0.1.0";

std::string cell_dir_name(int width, int seed_index) {
  return "w" + std::to_string(width) + "_s" + std::to_string(seed_index);
}

std::string alpha_cell_dir_name(int alpha_index, int seed_index) {
  return "a" + std::to_string(alpha_index) + "_s" + std::to_string(seed_index);
}

void write_doubles(const fs::path& path, const std::vector<double>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
  if (!out) throw Error("short write: " + path.string());
}

std::vector<double> read_doubles(const fs::path& path, std::size_t count) {
  std::vector<double> buf(count);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in || in.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
    throw MalformedArtifactError("truncated binary file " + path.string());
  return buf;
}

int resolve_workers(int workers) {
  if (workers > 0) return workers;
  if (const char* env = std::getenv("WIDTHLAB_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

std::string preset_name(Preset p) {
  switch (p) {
    case Preset::kLazySpectral: return "LAZY_SPECTRAL";
    case Preset::kRichConsistency: return "RICH_CONSISTENCY";
    case Preset::kSpContrast: return "SP_CONTRAST";
    case Preset::kAlphaSweep: return "ALPHA_SWEEP";
    case Preset::kBiasVariance: return "BIAS_VARIANCE";
    case Preset::kOfflineNoise: return "OFFLINE_NOISE";
    case Preset::kAfterKernel: return "AFTER_KERNEL";
  }
  throw ConfigError("unknown preset");
}

Preset preset_from_name(const std::string& name) {
  if (name == "LAZY_SPECTRAL") return Preset::kLazySpectral;
  if (name == "RICH_CONSISTENCY") return Preset::kRichConsistency;
  if (name == "SP_CONTRAST") return Preset::kSpContrast;
  if (name == "ALPHA_SWEEP") return Preset::kAlphaSweep;
  if (name == "BIAS_VARIANCE") return Preset::kBiasVariance;
  if (name == "OFFLINE_NOISE") return Preset::kOfflineNoise;
  if (name == "AFTER_KERNEL") return Preset::kAfterKernel;
  throw ConfigError("unknown preset: " + name);
}

void ExperimentConfig::validate() const {
  if (widths.empty()) throw ConfigError("config: widths may not be empty");
  for (std::size_t i = 1; i < widths.size(); ++i)
    if (widths[i] <= widths[i - 1])
      throw ConfigError("config: widths must be strictly increasing");
  if (seeds_per_width < 1) throw ConfigError("config: seeds_per_width >= 1");
  if (record_every < 1) throw ConfigError("config: record_every >= 1");
  if (probe_count < 1) throw ConfigError("config: probe_count >= 1");
  if (schedule.steps < 0) throw ConfigError("config: steps >= 0");
  if (net.output_dim != task.output_dim())
    throw ConfigError("config: net.output_dim must match the task");
  if (preset == Preset::kAlphaSweep && alpha0_list.empty())
    throw ConfigError("config: ALPHA_SWEEP needs alpha0_list");
  if (mode == StreamMode::kOffline && dataset_size < 1)
    throw ConfigError("config: offline mode needs dataset_size");
}

ExperimentConfig default_config(Preset preset) {
  ExperimentConfig c;
  c.preset = preset;
  c.net.depth = 3;
  c.net.input_dim = 5;
  c.net.output_dim = 1;
  c.net.alpha0 = 1.0;
  c.net.parameterization = Parameterization::kMuP;
  c.net.seed = 1;
  c.task.input_dim = 5;
  c.task.kind = TaskKind::kGegenbauerRegression;
  c.task.degree = 2;
  c.task.beta_seed = 1;
  c.data_seed = 1;
  c.schedule.eta0 = 5.0;
  c.schedule.batch_size = 10;
  c.probe_count = 256;

  switch (preset) {
    case Preset::kLazySpectral:
      c.net.alpha0 = 1000.0;
      c.widths = {64, 128, 256};
      c.schedule.steps = 2000;
      c.schedule.batch_size = c.probe_count;
      c.train_on_probes = true;
      c.record_every = 20;
      break;
    case Preset::kRichConsistency:
      // eta0 well inside the small-batch stability edge (~2.5 for this task)
      // but large enough that batch-noise fluctuations stay visible; steps
      // end before every width saturates, which would erase the ordering.
      c.schedule.eta0 = 1.0;
      c.widths = {32, 64, 128, 256, 512};
      c.schedule.steps = 900;
      c.record_every = 25;
      c.record_preacts = true;
      break;
    case Preset::kSpContrast:
      c.net.parameterization = Parameterization::kSP;
      c.schedule.eta0 = 50.0;
      c.widths = {32, 64, 128, 256, 512};
      c.schedule.steps = 900;
      c.record_every = 25;
      break;
    case Preset::kAlphaSweep:
      c.schedule.eta0 = 1.0;
      c.widths = {128};
      c.alpha0_list = {0.5, 2.0, 500.0, 1000.0};
      c.seeds_per_width = 2;
      c.schedule.steps = 800;
      c.record_every = 10;
      break;
    case Preset::kBiasVariance:
      c.schedule.eta0 = 1.0;
      c.widths = {32, 64, 128, 256, 512};
      c.schedule.steps = 900;
      c.record_every = 25;
      break;
    case Preset::kOfflineNoise:
      c.task.kind = TaskKind::kOneHotClassification;
      c.task.classes = 10;
      c.net.output_dim = 10;
      c.mode = StreamMode::kOffline;
      c.dataset_size = 2048;
      c.noise_frac = 0.5;
      c.schedule.batch_size = 32;
      // 200 epochs over the fixed dataset
      c.schedule.steps = 200 * ((2048 + 31) / 32);
      c.widths = {64, 128, 256};
      c.seeds_per_width = 2;
      c.record_every = (2048 + 31) / 32;
      break;
    case Preset::kAfterKernel:
      c.task.kind = TaskKind::kOneHotClassification;
      c.task.classes = 10;
      c.net.output_dim = 10;
      c.widths = {64, 256, 1024};
      c.schedule.steps = 600;
      c.probe_count = 96;
      c.record_every = 100;
      break;
  }
  return c;
}

namespace {

json schedule_to_json(const TrainSchedule& s) {
  return json{{"eta0", s.eta0},
              {"batch_size", s.batch_size},
              {"steps", s.steps},
              {"loss", "MSE"}};
}

TrainSchedule schedule_from_json(const json& j) {
  detail::check_keys(j, {"eta0", "batch_size", "steps", "loss"}, "schedule");
  TrainSchedule s;
  s.eta0 = j.at("eta0").get<double>();
  s.batch_size = j.at("batch_size").get<int>();
  s.steps = j.at("steps").get<std::int64_t>();
  if (j.value("loss", std::string("MSE")) != "MSE")
    throw ConfigError("schedule: unknown loss");
  return s;
}

json task_to_json(const TaskSpec& t) {
  json j{{"input_dim", t.input_dim}, {"kind", detail::to_string(t.kind)}};
  if (t.kind == TaskKind::kGegenbauerRegression) {
    j["degree"] = t.degree;
    j["beta_seed"] = t.beta_seed;
  } else {
    j["classes"] = t.classes;
    j["teacher_seed"] = t.teacher_seed;
  }
  return j;
}

TaskSpec task_from_json(const json& j) {
  detail::check_keys(
      j, {"input_dim", "kind", "degree", "beta_seed", "classes", "teacher_seed"},
      "task");
  TaskSpec t;
  t.input_dim = j.at("input_dim").get<int>();
  t.kind = detail::task_kind_from_string(j.at("kind").get<std::string>());
  t.degree = j.value("degree", 2);
  t.beta_seed = j.value("beta_seed", std::uint64_t{1});
  t.classes = j.value("classes", 10);
  t.teacher_seed = j.value("teacher_seed", std::uint64_t{1});
  return t;
}

json config_to_json(const ExperimentConfig& c, bool with_out_dir) {
  json j;
  j["preset"] = preset_name(c.preset);
  json net = detail::net_config_to_json(c.net);
  net.erase("width");  // width left open; filled per cell
  j["net"] = net;
  j["widths"] = c.widths;
  j["seeds_per_width"] = c.seeds_per_width;
  j["schedule"] = schedule_to_json(c.schedule);
  j["task"] = task_to_json(c.task);
  j["stream"] = json{{"data_seed", c.data_seed},
                     {"mode", detail::to_string(c.mode)},
                     {"dataset_size", c.dataset_size},
                     {"noise_frac", c.noise_frac},
                     {"shuffle_seed", c.shuffle_seed}};
  j["probe_count"] = c.probe_count;
  j["record_every"] = c.record_every;
  if (with_out_dir) j["out_dir"] = c.out_dir;
  if (!c.alpha0_list.empty()) j["alpha0_list"] = c.alpha0_list;
  if (c.train_on_probes) j["train_on_probes"] = true;
  if (c.record_preacts) {
    j["record_preacts"] = true;
    j["preact_probes"] = c.preact_probes;
  }
  if (c.record_sharpness) j["record_sharpness"] = true;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  detail::check_keys(j,
                     {"preset", "net", "widths", "seeds_per_width", "schedule",
                      "task", "stream", "probe_count", "record_every",
                      "out_dir", "alpha0_list", "train_on_probes",
                      "record_preacts", "preact_probes", "record_sharpness"},
                     "config");
  ExperimentConfig c;
  c.preset = preset_from_name(j.at("preset").get<std::string>());
  c.net = detail::net_config_from_json(j.at("net"));
  c.widths = j.at("widths").get<std::vector<int>>();
  c.seeds_per_width = j.at("seeds_per_width").get<int>();
  c.schedule = schedule_from_json(j.at("schedule"));
  c.task = task_from_json(j.at("task"));
  const json& s = j.at("stream");
  detail::check_keys(
      s, {"data_seed", "mode", "dataset_size", "noise_frac", "shuffle_seed"},
      "stream");
  c.data_seed = s.at("data_seed").get<std::uint64_t>();
  c.mode = detail::stream_mode_from_string(s.at("mode").get<std::string>());
  c.dataset_size = s.value("dataset_size", 0);
  c.noise_frac = s.value("noise_frac", 0.0);
  c.shuffle_seed = s.value("shuffle_seed", std::uint64_t{1});
  c.probe_count = j.at("probe_count").get<int>();
  c.record_every = j.at("record_every").get<int>();
  c.out_dir = j.value("out_dir", std::string());
  c.alpha0_list = j.value("alpha0_list", std::vector<double>{});
  c.train_on_probes = j.value("train_on_probes", false);
  c.record_preacts = j.value("record_preacts", false);
  c.preact_probes = j.value("preact_probes", 8);
  c.record_sharpness = j.value("record_sharpness", false);
  c.validate();
  return c;
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: bad json: ") + e.what());
  }
  return config_from_json(j);
}

std::string config_to_json_text(const ExperimentConfig& config) {
  return config_to_json(config, true).dump(2) + "\n";
}

std::string config_digest(const ExperimentConfig& config) {
  const std::string canonical = config_to_json(config, false).dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical)));
  return std::string(buf);
}

Matrix probe_points(const ExperimentConfig& config) {
  Rng rng = Rng::substream(config.data_seed, "probes");
  return sample_sphere(rng, config.task.input_dim, config.probe_count);
}

Matrix probe_targets(const ExperimentConfig& config) {
  return target_eval(config.task, probe_points(config));
}

std::uint64_t cell_net_seed(const ExperimentConfig& config, int width,
                            int seed_index) {
  return Rng::substream(config.net.seed, "cell_weights",
                        static_cast<std::uint64_t>(width) * 100003ull +
                            static_cast<std::uint64_t>(seed_index))
      .seed();
}

namespace {

struct CellPaths {
  fs::path dir;
  fs::path record;
  fs::path logits;
  fs::path ckpt_init;
  fs::path ckpt_final;
};

CellPaths cell_paths(const fs::path& root, const std::string& name) {
  CellPaths p;
  p.dir = root / "cells" / name;
  p.record = p.dir / "record.json";
  p.logits = p.dir / "logits.bin";
  p.ckpt_init = p.dir / "ckpt_init";
  p.ckpt_final = p.dir / "ckpt_final";
  return p;
}

// Preactivations of the first `n_probes` probe points at every layer,
// flattened [layer][probe][neuron].
std::vector<double> preact_block(const ForwardTrace& trace, int n_probes) {
  std::vector<double> buf;
  const auto layers = trace.preacts.size();
  const auto n = trace.preacts.front().rows();
  buf.reserve(layers * static_cast<std::size_t>(n_probes) *
              static_cast<std::size_t>(n));
  for (const auto& h : trace.preacts)
    for (int p = 0; p < n_probes; ++p)
      for (Eigen::Index i = 0; i < n; ++i) buf.push_back(h(i, p));
  return buf;
}

}  // namespace

RunRecord run_cell(const ExperimentConfig& config, int width, int seed_index,
                   int alpha_index) {
  config.validate();
  if (alpha_index >= static_cast<int>(config.alpha0_list.size()))
    throw ConfigError("run_cell: alpha_index out of range");
  const std::string name = alpha_index >= 0
                               ? alpha_cell_dir_name(alpha_index, seed_index)
                               : cell_dir_name(width, seed_index);
  const fs::path root = config.out_dir;
  const CellPaths final_paths = cell_paths(root, name);
  const CellPaths tmp = cell_paths(root, "." + name + ".tmp");

  NetConfig net = config.net;
  net.width = width;
  net.seed = cell_net_seed(config, width, seed_index);
  if (alpha_index >= 0)
    net.alpha0 = config.alpha0_list[static_cast<std::size_t>(alpha_index)];
  net.validate();

  const double lr = effective_lr(net, config.schedule);

  const Matrix x_probe = probe_points(config);
  const Matrix y_probe = probe_targets(config);

  DataStream stream;
  stream.task = config.task;
  stream.data_seed = config.data_seed;
  stream.batch_size = config.schedule.batch_size;
  stream.mode = config.mode;
  stream.dataset_size = config.dataset_size;
  stream.noise_frac = config.noise_frac;
  stream.shuffle_seed = config.shuffle_seed;

  OfflineData offline;
  Matrix f0_offline;
  if (config.mode == StreamMode::kOffline && !config.train_on_probes)
    offline = build_offline_data(stream);

  ParamSet theta0 = init_params(net);
  ParamSet theta = theta0;

  const Matrix f0_probe = forward(theta0, net, x_probe).output;
  if (config.mode == StreamMode::kOffline && !config.train_on_probes)
    f0_offline = forward(theta0, net, offline.x).output;

  auto batch_at = [&](std::int64_t t) -> Batch {
    if (config.train_on_probes) return Batch{x_probe, y_probe};
    if (config.mode == StreamMode::kOnline) return online_batch(stream, t);
    return offline_batch(stream, offline, t);
  };
  // Targets shifted by the init outputs: training f toward y + f(theta0)
  // trains the centered predictor f - f(theta0) toward y.
  auto shifted = [&](const Batch& b, std::int64_t t) -> Matrix {
    if (config.train_on_probes) return b.y + f0_probe;
    if (config.mode == StreamMode::kOffline) {
      const std::vector<int> idx = offline_batch_indices(stream, t);
      Matrix shift(b.y.rows(), b.y.cols());
      for (std::size_t i = 0; i < idx.size(); ++i)
        shift.col(static_cast<Eigen::Index>(i)) = f0_offline.col(idx[i]);
      return b.y + shift;
    }
    return b.y + forward(theta0, net, b.x).output;
  };

  RunRecord rec;
  rec.cell_dir = final_paths.dir.string();
  rec.effective_lr = lr;
  rec.series.width = width;
  rec.series.seed_index = seed_index;

  std::vector<double> preacts_init;
  std::vector<double> preacts_final;
  const int n_snap = std::min(config.preact_probes, config.probe_count);
  if (config.record_preacts)
    preacts_init = preact_block(forward(theta0, net, x_probe), n_snap);

  auto record_probe_state = [&](std::int64_t step) {
    const Matrix f = forward(theta, net, x_probe).output - f0_probe;
    rec.series.recorded_steps.push_back(step);
    rec.series.probe_loss.push_back(mse(f, y_probe));
    rec.series.probe_logits.push_back(f);
  };

  record_probe_state(0);
  bool diverged = false;
  std::int64_t t = 0;
  for (; t < config.schedule.steps; ++t) {
    const Batch b = batch_at(t);
    const Matrix y_shift = shifted(b, t);
    const LossGrads lg = loss_and_grads(theta, net, b.x, y_shift);
    rec.series.train_loss_per_step.push_back(lg.loss);
    if (!std::isfinite(lg.loss) || lg.loss > 1e6) {
      diverged = true;
      break;
    }
    sgd_step_inplace(theta, lg.grads, lr);
    const std::int64_t done = t + 1;
    if (done % config.record_every == 0 || done == config.schedule.steps)
      record_probe_state(done);
  }
  rec.steps_run = t;
  rec.series.diverged = diverged;

  if (config.record_preacts && !diverged)
    preacts_final = preact_block(forward(theta, net, x_probe), n_snap);

  if (config.record_sharpness && !diverged) {
    Rng srng = Rng::substream(config.data_seed, "sharpness_batch");
    const Matrix xs = sample_sphere(srng, config.task.input_dim, 256);
    const Matrix ys =
        target_eval(config.task, xs) + forward(theta0, net, xs).output;
    rec.final_sharpness = sharpness(theta, net, xs, ys);
  }

  // Whole-cell artifact: build in a temp dir, then move into place.
  std::error_code ec;
  fs::remove_all(tmp.dir, ec);
  fs::create_directories(tmp.dir);

  std::vector<double> logit_buf;
  const int channels = net.output_dim;
  logit_buf.reserve(rec.series.probe_logits.size() *
                    static_cast<std::size_t>(config.probe_count) *
                    static_cast<std::size_t>(channels));
  for (const Matrix& f : rec.series.probe_logits)
    for (int p = 0; p < config.probe_count; ++p)
      for (int c = 0; c < channels; ++c) logit_buf.push_back(f(c, p));
  write_doubles(tmp.dir / "logits.bin", logit_buf);

  save_checkpoint((tmp.dir / "ckpt_init").string(), net, 0, theta0);
  save_checkpoint((tmp.dir / "ckpt_final").string(), net, rec.steps_run, theta);
  if (!preacts_init.empty())
    write_doubles(tmp.dir / "preacts_init.bin", preacts_init);
  if (!preacts_final.empty())
    write_doubles(tmp.dir / "preacts_final.bin", preacts_final);

  json record;
  record["format_version"] = 1;
  record["config_digest"] = config_digest(config);
  record["preset"] = preset_name(config.preset);
  record["width"] = width;
  record["seed_index"] = seed_index;
  record["alpha0"] = net.alpha0;
  record["net_seed"] = net.seed;
  record["effective_lr"] = lr;
  record["steps_run"] = rec.steps_run;
  record["diverged"] = diverged;
  record["recorded_steps"] = rec.series.recorded_steps;
  record["train_loss"] = rec.series.train_loss_per_step;
  record["probe_loss"] = rec.series.probe_loss;
  record["probe_count"] = config.probe_count;
  record["channels"] = channels;
  record["logits_fnv64"] =
      fnv1a64(logit_buf.data(), logit_buf.size() * sizeof(double));
  if (!preacts_init.empty()) {
    record["preact_probes"] = n_snap;
    record["preact_width"] = width;
  }
  if (rec.final_sharpness) record["sharpness"] = *rec.final_sharpness;
  {
    std::ofstream out(tmp.dir / "record.json", std::ios::trunc);
    out << record.dump(2) << '\n';
    if (!out) throw Error("run_cell: cannot write record.json");
  }

  fs::remove_all(final_paths.dir, ec);
  fs::create_directories(final_paths.dir.parent_path());
  fs::rename(tmp.dir, final_paths.dir);
  return rec;
}

namespace {

bool cell_complete(const ExperimentConfig& config, const fs::path& dir) {
  const fs::path record_path = dir / "record.json";
  if (!fs::exists(record_path)) return false;
  try {
    json record;
    std::ifstream in(record_path);
    in >> record;
    return record.value("config_digest", std::string()) ==
           config_digest(config);
  } catch (...) {
    return false;
  }
}

CellSeries load_cell(const fs::path& dir) {
  json record;
  {
    std::ifstream in(dir / "record.json");
    if (!in) throw MalformedArtifactError("missing record.json in " + dir.string());
    try {
      in >> record;
    } catch (const std::exception& e) {
      throw MalformedArtifactError("bad record.json in " + dir.string() + ": " +
                                   e.what());
    }
  }
  CellSeries s;
  s.width = record.at("width").get<int>();
  s.seed_index = record.at("seed_index").get<int>();
  s.diverged = record.at("diverged").get<bool>();
  s.recorded_steps = record.at("recorded_steps").get<std::vector<std::int64_t>>();
  s.train_loss_per_step = record.at("train_loss").get<std::vector<double>>();
  s.probe_loss = record.at("probe_loss").get<std::vector<double>>();
  const int p = record.at("probe_count").get<int>();
  const int channels = record.at("channels").get<int>();
  const std::size_t n_rec = s.recorded_steps.size();
  const std::vector<double> buf =
      read_doubles(dir / "logits.bin",
                   n_rec * static_cast<std::size_t>(p) *
                       static_cast<std::size_t>(channels));
  const auto digest = record.at("logits_fnv64").get<std::uint64_t>();
  if (digest != fnv1a64(buf.data(), buf.size() * sizeof(double)))
    throw MalformedArtifactError("logits digest mismatch in " + dir.string());
  std::size_t at = 0;
  for (std::size_t r = 0; r < n_rec; ++r) {
    Matrix f(channels, p);
    for (int pp = 0; pp < p; ++pp)
      for (int c = 0; c < channels; ++c) f(c, pp) = buf[at++];
    s.probe_logits.push_back(std::move(f));
  }
  return s;
}

void write_losses_csv(const fs::path& root, const EnsembleTable& table) {
  CsvWriter csv((root / "losses.csv").string());
  csv.row({"step", "width", "seed", "train_loss", "probe_loss"});
  for (const auto& cell : table.cells) {
    for (std::size_t i = 0; i < cell.recorded_steps.size(); ++i) {
      const std::int64_t step = cell.recorded_steps[i];
      // Train loss at a recorded step: the batch loss observed at that step
      // (the final state has no later batch, so the last observed loss).
      double train = 0.0;
      if (!cell.train_loss_per_step.empty()) {
        const auto idx = std::min<std::size_t>(
            static_cast<std::size_t>(step),
            cell.train_loss_per_step.size() - 1);
        train = cell.train_loss_per_step[idx];
      }
      csv.field(step);
      csv.field(cell.width);
      csv.field(cell.seed_index);
      csv.field(train);
      csv.field(cell.probe_loss[i]);
      csv.end_row();
    }
  }
}

void write_logits_csv(const fs::path& root, const EnsembleTable& table) {
  CsvWriter csv((root / "logits.csv").string());
  csv.row({"step", "width", "seed", "probe_id", "channel", "logit"});
  for (const auto& cell : table.cells) {
    for (std::size_t i = 0; i < cell.recorded_steps.size(); ++i) {
      const Matrix& f = cell.probe_logits[i];
      for (int p = 0; p < f.cols(); ++p) {
        for (int c = 0; c < f.rows(); ++c) {
          csv.field(cell.recorded_steps[i]);
          csv.field(cell.width);
          csv.field(cell.seed_index);
          csv.field(p);
          csv.field(c);
          csv.field(f(c, p));
          csv.end_row();
        }
      }
    }
  }
}

void write_biasvar_csv(const fs::path& root, const EnsembleTable& table) {
  // Reference: widest width with at least two live cells.
  const auto widths = table.widths();
  int ref = 0;
  for (int w : widths)
    if (table.cells_for(w).size() >= 2) ref = w;
  if (ref == 0) return;
  EnsembleTable filtered;
  filtered.targets = table.targets;
  for (const auto& c : table.cells)
    if (table.cells_for(c.width).size() >= 2) filtered.cells.push_back(c);
  const auto rows = bias_variance(filtered, ref);
  CsvWriter csv((root / "biasvar.csv").string());
  csv.row({"step", "width", "mean_single_loss", "ensemble_loss", "variance",
           "bias"});
  for (const auto& r : rows) {
    csv.field(r.step);
    csv.field(r.width);
    csv.field(r.mean_single_loss);
    csv.field(r.ensemble_loss);
    csv.field(r.variance);
    csv.field(r.bias);
    csv.end_row();
  }
}

void write_preact_csv(const ExperimentConfig& config, const fs::path& root,
                      const std::string& bin_name, const std::string& csv_name) {
  // Pool neuron values across seeds per (width, layer, probe point).
  CsvWriter csv((root / csv_name).string());
  csv.row({"width", "layer", "probe_id", "mean", "var", "skew", "kurtosis",
           "w1_gauss"});
  const int n_snap = std::min(config.preact_probes, config.probe_count);
  for (int width : config.widths) {
    std::vector<std::vector<std::vector<double>>> pooled(
        static_cast<std::size_t>(config.net.depth),
        std::vector<std::vector<double>>(static_cast<std::size_t>(n_snap)));
    bool any = false;
    for (int seed = 0; seed < config.seeds_per_width; ++seed) {
      const fs::path dir =
          root / "cells" / cell_dir_name(width, seed) / bin_name;
      if (!fs::exists(dir)) continue;
      any = true;
      const std::size_t total = static_cast<std::size_t>(config.net.depth) *
                                static_cast<std::size_t>(n_snap) *
                                static_cast<std::size_t>(width);
      const std::vector<double> buf = read_doubles(dir, total);
      std::size_t at = 0;
      for (int l = 0; l < config.net.depth; ++l)
        for (int p = 0; p < n_snap; ++p)
          for (int i = 0; i < width; ++i)
            pooled[static_cast<std::size_t>(l)][static_cast<std::size_t>(p)]
                .push_back(buf[at++]);
    }
    if (!any) continue;
    for (int l = 0; l < config.net.depth; ++l) {
      for (int p = 0; p < n_snap; ++p) {
        PreactSnapshot snap;
        snap.width = width;
        snap.layer = l + 1;
        snap.probe_id = p;
        snap.values = pooled[static_cast<std::size_t>(l)][static_cast<std::size_t>(p)];
        if (snap.values.size() < 100) continue;
        const PreactSummary s = preact_stats(snap);
        csv.field(width);
        csv.field(l + 1);
        csv.field(p);
        csv.field(s.mean);
        csv.field(s.variance);
        csv.field(s.skewness);
        csv.field(s.excess_kurtosis);
        csv.field(s.w1_gauss);
        csv.end_row();
      }
    }
  }
}

void write_sweep_manifest(const ExperimentConfig& config, const fs::path& root) {
  json manifest;
  manifest["format_version"] = 1;
  manifest["code_version"] = kCodeVersion;
  manifest["config"] = json::parse(config_to_json_text(config));
  manifest["config_digest"] = config_digest(config);
  manifest["probe_seed"] = config.data_seed;
  std::ofstream out(root / "sweep_manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw Error("run_sweep: cannot write sweep manifest");
}

struct CellTask {
  int width = 0;
  int seed_index = 0;
  int alpha_index = -1;
  std::string name;
};

void run_cells_parallel(const ExperimentConfig& config,
                        const std::vector<CellTask>& tasks, int workers) {
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::string first_error;

  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const CellTask& task = tasks[i];
      try {
        if (!cell_complete(config,
                           fs::path(config.out_dir) / "cells" / task.name))
          run_cell(config, task.width, task.seed_index, task.alpha_index);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };

  const int n_workers =
      std::min<int>(workers, static_cast<int>(tasks.size()));
  if (n_workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  if (!first_error.empty()) throw Error("run_sweep: cell failed: " + first_error);
}

}  // namespace

EnsembleTable load_sweep_table(const std::string& run_dir) {
  const ExperimentConfig config = load_sweep_config(run_dir);
  EnsembleTable table;
  table.targets = probe_targets(config);
  if (config.preset == Preset::kAlphaSweep) {
    for (std::size_t a = 0; a < config.alpha0_list.size(); ++a)
      for (int seed = 0; seed < config.seeds_per_width; ++seed)
        table.cells.push_back(
            load_cell(fs::path(run_dir) / "cells" /
                      alpha_cell_dir_name(static_cast<int>(a), seed)));
    return table;
  }
  for (int width : config.widths)
    for (int seed = 0; seed < config.seeds_per_width; ++seed)
      table.cells.push_back(
          load_cell(fs::path(run_dir) / "cells" / cell_dir_name(width, seed)));
  return table;
}

ExperimentConfig load_sweep_config(const std::string& run_dir) {
  const fs::path path = fs::path(run_dir) / "sweep_manifest.json";
  std::ifstream in(path);
  if (!in)
    throw MalformedArtifactError("no sweep_manifest.json in " + run_dir);
  json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    throw MalformedArtifactError("bad sweep manifest: " + std::string(e.what()));
  }
  ExperimentConfig config =
      config_from_json_text(manifest.at("config").dump());
  if (config.out_dir.empty()) config.out_dir = run_dir;
  return config;
}

std::vector<WidthSpectra> sweep_spectra(const ExperimentConfig& config,
                                        std::int64_t step) {
  const Matrix x_probe = probe_points(config);
  const Matrix y = probe_targets(config);
  Vector y_flat(static_cast<Eigen::Index>(config.probe_count) *
                config.task.output_dim());
  for (int p = 0; p < config.probe_count; ++p)
    for (int c = 0; c < config.task.output_dim(); ++c)
      y_flat(static_cast<Eigen::Index>(p) * config.task.output_dim() + c) =
          y(c, p);

  std::vector<WidthSpectra> out;
  for (int width : config.widths) {
    std::vector<KernelMatrix> kernels;
    for (int seed = 0; seed < config.seeds_per_width; ++seed) {
      const fs::path cell = fs::path(config.out_dir) / "cells" /
                            cell_dir_name(width, seed);
      // Diverged cells carry no usable end-of-training kernel.
      try {
        json record;
        std::ifstream in(cell / "record.json");
        in >> record;
        if (record.value("diverged", false)) continue;
      } catch (...) {
        // fall through; the checkpoint check below reports the problem
      }
      const fs::path dir = cell / (step == 0 ? "ckpt_init" : "ckpt_final");
      if (!checkpoint_exists(dir.string()))
        throw MissingCheckpointError("no checkpoint: " + dir.string());
      const Checkpoint ck = load_checkpoint(dir.string());
      if (step != 0 && ck.step != step)
        throw MissingCheckpointError(
            "no checkpoint at step " + std::to_string(step) + " in " +
            dir.string());
      kernels.push_back(to_flow(entk(ck.params, ck.config, x_probe), ck.config));
    }
    if (kernels.empty())
      throw MissingCheckpointError("no live cells at width " +
                                   std::to_string(width));
    WidthSpectra ws;
    ws.width = width;
    ws.kernel = ensemble_avg(kernels);
    ws.report = spectral_report(ws.kernel, y_flat);
    out.push_back(std::move(ws));
  }
  return out;
}

void write_spectra_csv(const std::string& path,
                       const std::vector<WidthSpectra>& spectra) {
  CsvWriter csv(path);
  csv.row({"width", "k", "lambda", "coeff_sq", "cumulative_power"});
  for (const auto& ws : spectra) {
    for (Eigen::Index k = 0; k < ws.report.eigenvalues.size(); ++k) {
      csv.field(ws.width);
      csv.field(static_cast<int>(k) + 1);
      csv.field(ws.report.eigenvalues(k));
      csv.field(ws.report.coefficients(k) * ws.report.coefficients(k));
      // Power captured by modes 1..k.
      csv.field(ws.report.cumulative_power(k + 1));
      csv.end_row();
    }
  }
}

SweepResult run_sweep(const ExperimentConfig& config, int workers) {
  config.validate();
  if (config.out_dir.empty()) throw ConfigError("run_sweep: out_dir not set");
  fs::create_directories(fs::path(config.out_dir) / "cells");
  write_sweep_manifest(config, config.out_dir);

  std::vector<CellTask> tasks;
  for (int width : config.widths)
    for (int seed = 0; seed < config.seeds_per_width; ++seed)
      tasks.push_back(
          {width, seed, -1, cell_dir_name(width, seed)});
  run_cells_parallel(config, tasks, resolve_workers(workers));

  SweepResult result;
  result.table = load_sweep_table(config.out_dir);
  for (const auto& cell : result.table.cells)
    if (cell.diverged)
      result.diverged_cells.push_back(
          cell_dir_name(cell.width, cell.seed_index));

  const fs::path root = config.out_dir;
  write_losses_csv(root, result.table);
  write_logits_csv(root, result.table);
  write_biasvar_csv(root, result.table);
  if (config.record_preacts) {
    write_preact_csv(config, root, "preacts_final.bin", "preact.csv");
    write_preact_csv(config, root, "preacts_init.bin", "preact_init.csv");
  }
  if (config.preset == Preset::kLazySpectral) {
    const auto spectra = sweep_spectra(config, 0);
    write_spectra_csv((root / "spectra.csv").string(), spectra);
  }
  return result;
}

SweepResult run_alpha_sweep(const ExperimentConfig& config, int workers) {
  config.validate();
  if (config.preset != Preset::kAlphaSweep)
    throw ConfigError("run_alpha_sweep: preset must be ALPHA_SWEEP");
  if (config.out_dir.empty()) throw ConfigError("run_alpha_sweep: out_dir not set");
  fs::create_directories(fs::path(config.out_dir) / "cells");
  write_sweep_manifest(config, config.out_dir);

  const int width = config.widths.front();
  std::vector<CellTask> tasks;
  for (std::size_t a = 0; a < config.alpha0_list.size(); ++a)
    for (int seed = 0; seed < config.seeds_per_width; ++seed)
      tasks.push_back({width, seed, static_cast<int>(a),
                       alpha_cell_dir_name(static_cast<int>(a), seed)});
  run_cells_parallel(config, tasks, resolve_workers(workers));

  SweepResult result;
  result.table = load_sweep_table(config.out_dir);

  const fs::path root = config.out_dir;
  {
    CsvWriter csv((root / "alpha_logits.csv").string());
    csv.row({"step", "alpha0", "seed", "probe_id", "channel", "logit"});
    std::size_t cell_idx = 0;
    for (std::size_t a = 0; a < config.alpha0_list.size(); ++a) {
      for (int seed = 0; seed < config.seeds_per_width; ++seed, ++cell_idx) {
        const CellSeries& cell = result.table.cells[cell_idx];
        if (cell.diverged)
          result.diverged_cells.push_back(
              alpha_cell_dir_name(static_cast<int>(a), seed));
        for (std::size_t i = 0; i < cell.recorded_steps.size(); ++i) {
          const Matrix& f = cell.probe_logits[i];
          for (int p = 0; p < f.cols(); ++p)
            for (int c = 0; c < f.rows(); ++c) {
              csv.field(cell.recorded_steps[i]);
              csv.field(config.alpha0_list[a]);
              csv.field(seed);
              csv.field(p);
              csv.field(c);
              csv.field(f(c, p));
              csv.end_row();
            }
        }
      }
    }
  }
  {
    // Pairwise distance between whole logit trajectories at matched seeds.
    const std::size_t n_alpha = config.alpha0_list.size();
    auto stack = [&](std::size_t a, int seed) {
      const CellSeries& cell =
          result.table.cells[a * static_cast<std::size_t>(config.seeds_per_width) +
                             static_cast<std::size_t>(seed)];
      Matrix m(cell.probe_logits.front().size(),
               static_cast<Eigen::Index>(cell.probe_logits.size()));
      for (std::size_t i = 0; i < cell.probe_logits.size(); ++i) {
        const Matrix& f = cell.probe_logits[i];
        m.col(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Vector>(f.data(), f.size());
      }
      return m;
    };
    CsvWriter csv((root / "alpha_rmse.csv").string());
    csv.row({"alpha0_a", "alpha0_b", "relative_rmse"});
    for (std::size_t a = 0; a < n_alpha; ++a) {
      for (std::size_t b = a + 1; b < n_alpha; ++b) {
        double acc = 0.0;
        for (int seed = 0; seed < config.seeds_per_width; ++seed)
          acc += relative_rmse(stack(a, seed), stack(b, seed));
        csv.field(config.alpha0_list[a]);
        csv.field(config.alpha0_list[b]);
        csv.field(acc / config.seeds_per_width);
        csv.end_row();
      }
    }
  }
  return result;
}

void run_after_kernel(const ExperimentConfig& config) {
  config.validate();
  const std::vector<WidthSpectra> spectra =
      sweep_spectra(config, config.schedule.steps);
  const fs::path root = config.out_dir;
  write_spectra_csv((root / "spectra.csv").string(), spectra);

  // Kernel gradient flow from the target initial condition, per width.
  const Matrix y = probe_targets(config);
  Vector y_flat(static_cast<Eigen::Index>(config.probe_count) *
                config.task.output_dim());
  for (int p = 0; p < config.probe_count; ++p)
    for (int c = 0; c < config.task.output_dim(); ++c)
      y_flat(static_cast<Eigen::Index>(p) * config.task.output_dim() + c) =
          y(c, p);

  std::vector<double> times{0.0};
  for (int i = 0; i <= 60; ++i)
    times.push_back(std::pow(10.0, -2.0 + 6.0 * i / 60.0));

  CsvWriter csv((root / "flow_loss.csv").string());
  csv.row({"time", "width", "loss"});
  for (const auto& ws : spectra) {
    const FlowResult flow = kernel_flow(ws.kernel, y_flat, times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      csv.field(times[i]);
      csv.field(ws.width);
      csv.field(flow.loss(static_cast<Eigen::Index>(i)));
      csv.end_row();
    }
  }
}

}  // namespace widthlab
