#pragma once

// Internal json mappings shared by checkpoint and experiment-config code.
// nlohmann/json stays out of the public headers so installed consumers only
// need Eigen.

#include <string>

#include <json.hpp>

#include "widthlab/errors.hpp"
#include "widthlab/net.hpp"
#include "widthlab/tasks.hpp"

namespace widthlab::detail {

using nlohmann::json;

inline std::string to_string(Parameterization p) {
  return p == Parameterization::kMuP ? "MUP" : "SP";
}
inline Parameterization parameterization_from_string(const std::string& s) {
  if (s == "MUP") return Parameterization::kMuP;
  if (s == "SP") return Parameterization::kSP;
  throw ConfigError("unknown parameterization: " + s);
}

inline std::string to_string(TaskKind k) {
  return k == TaskKind::kGegenbauerRegression ? "GEGENBAUER_REGRESSION"
                                              : "ONEHOT_CLASSIFICATION";
}
inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "GEGENBAUER_REGRESSION") return TaskKind::kGegenbauerRegression;
  if (s == "ONEHOT_CLASSIFICATION") return TaskKind::kOneHotClassification;
  throw ConfigError("unknown task kind: " + s);
}

inline std::string to_string(StreamMode m) {
  return m == StreamMode::kOnline ? "ONLINE" : "OFFLINE";
}
inline StreamMode stream_mode_from_string(const std::string& s) {
  if (s == "ONLINE") return StreamMode::kOnline;
  if (s == "OFFLINE") return StreamMode::kOffline;
  throw ConfigError("unknown stream mode: " + s);
}

inline json net_config_to_json(const NetConfig& c) {
  return json{{"depth", c.depth},
              {"width", c.width},
              {"input_dim", c.input_dim},
              {"output_dim", c.output_dim},
              {"alpha0", c.alpha0},
              {"parameterization", to_string(c.parameterization)},
              {"activation", "RELU"},
              {"seed", c.seed}};
}

void check_keys(const json& j, const std::vector<std::string>& known,
                const std::string& where);

NetConfig net_config_from_json(const json& j);

}  // namespace widthlab::detail
