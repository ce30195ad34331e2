#pragma once

#include <cstdint>
#include <string>

#include "widthlab/net.hpp"

namespace widthlab {

/// Checkpoint layout: a directory holding manifest.json plus one raw binary
/// file per weight matrix (row-major 64-bit floats, little-endian).  The
/// manifest records the format version, the NetConfig, the training step, and
/// an FNV-1a digest of every array's bytes, so a round trip is bit-exact and
/// corruption is detected on load.
void save_checkpoint(const std::string& dir, const NetConfig& config,
                     std::int64_t step, const ParamSet& params);

struct Checkpoint {
  NetConfig config;
  std::int64_t step = 0;
  ParamSet params;
};

/// Throws MissingCheckpointError if the directory or manifest is absent, and
/// MalformedArtifactError on shape or digest mismatch.
Checkpoint load_checkpoint(const std::string& dir);

bool checkpoint_exists(const std::string& dir);

}  // namespace widthlab
