#include "widthlab/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <filesystem>
#include <fstream>
#include <vector>

#include "json_util.hpp"
#include "widthlab/errors.hpp"
#include "widthlab/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

namespace widthlab {

namespace fs = std::filesystem;
using detail::json;

namespace detail {

void check_keys(const json& j, const std::vector<std::string>& known,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

NetConfig net_config_from_json(const json& j) {
  check_keys(j,
             {"depth", "width", "input_dim", "output_dim", "alpha0",
              "parameterization", "activation", "seed"},
             "net");
  NetConfig c;
  c.depth = j.at("depth").get<int>();
  c.width = j.value("width", 0);
  c.input_dim = j.at("input_dim").get<int>();
  c.output_dim = j.at("output_dim").get<int>();
  c.alpha0 = j.at("alpha0").get<double>();
  c.parameterization =
      parameterization_from_string(j.at("parameterization").get<std::string>());
  if (j.value("activation", std::string("RELU")) != "RELU")
    throw ConfigError("net: unknown activation");
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace detail

namespace {

// Serialized row-major regardless of Eigen's in-memory layout.
std::vector<double> row_major_bytes(const Matrix& w) {
  std::vector<double> buf(static_cast<std::size_t>(w.size()));
  std::size_t at = 0;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) buf[at++] = w(i, j);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace

void save_checkpoint(const std::string& dir, const NetConfig& config,
                     std::int64_t step, const ParamSet& params) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = 1;
  manifest["net"] = detail::net_config_to_json(config);
  manifest["step"] = step;
  json arrays = json::array();
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const Matrix& w = params.weights[l];
    const std::string name = "W" + std::to_string(l);
    const std::string file = name + ".bin";
    const std::vector<double> buf = row_major_bytes(w);
    const std::size_t nbytes = buf.size() * sizeof(double);
    {
      std::ofstream out(fs::path(dir) / file, std::ios::binary | std::ios::trunc);
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(nbytes));
      if (!out) throw Error("checkpoint: short write for " + file);
    }
    arrays.push_back(json{{"name", name},
                          {"rows", w.rows()},
                          {"cols", w.cols()},
                          {"file", file},
                          {"fnv64", hex64(fnv1a64(buf.data(), nbytes))}});
  }
  manifest["arrays"] = arrays;
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
  if (!out) throw Error("checkpoint: cannot write manifest in " + dir);
}

bool checkpoint_exists(const std::string& dir) {
  return fs::exists(fs::path(dir) / "manifest.json");
}

Checkpoint load_checkpoint(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path))
    throw MissingCheckpointError("no checkpoint at " + dir);

  json manifest;
  {
    std::ifstream in(manifest_path);
    try {
      in >> manifest;
    } catch (const std::exception& e) {
      throw MalformedArtifactError("bad manifest in " + dir + ": " + e.what());
    }
  }
  if (manifest.value("format_version", 0) != 1)
    throw MalformedArtifactError("unsupported checkpoint version in " + dir);

  Checkpoint ck;
  ck.config = detail::net_config_from_json(manifest.at("net"));
  ck.step = manifest.at("step").get<std::int64_t>();
  for (const auto& entry : manifest.at("arrays")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto file = entry.at("file").get<std::string>();
    std::vector<double> buf(static_cast<std::size_t>(rows * cols));
    std::ifstream in(fs::path(dir) / file, std::ios::binary);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!in || in.gcount() !=
                   static_cast<std::streamsize>(buf.size() * sizeof(double)))
      throw MalformedArtifactError("truncated array " + file + " in " + dir);
    const std::string digest =
        hex64(fnv1a64(buf.data(), buf.size() * sizeof(double)));
    if (digest != entry.at("fnv64").get<std::string>())
      throw MalformedArtifactError("digest mismatch for " + file + " in " + dir);
    Matrix w(rows, cols);
    std::size_t at = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = buf[at++];
    ck.params.weights.push_back(std::move(w));
  }

  // Shape sanity against the recorded config.
  const NetConfig& c = ck.config;
  if (ck.params.weights.size() != static_cast<std::size_t>(c.depth) + 1)
    throw MalformedArtifactError("weight count mismatch in " + dir);
  return ck;
}

}  // namespace widthlab
