#pragma once

#include <stdexcept>
#include <string>

namespace widthlab {

/// Base class for all widthlab errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
  using Error::Error;
};
struct NonSquareError : Error {
  using Error::Error;
};
struct NotSymmetricError : Error {
  using Error::Error;
};
struct ConvergenceError : Error {
  using Error::Error;
};
struct EmptyInputError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct WrongModeError : Error {
  using Error::Error;
};
struct ShapeMismatchError : Error {
  using Error::Error;
};
struct LayerError : Error {
  using Error::Error;
};
struct DegenerateKernelError : Error {
  using Error::Error;
};
struct ZeroReferenceError : Error {
  using Error::Error;
};
struct ZeroDirectionError : Error {
  using Error::Error;
};
struct TooFewSamplesError : Error {
  using Error::Error;
};
struct InsufficientSeedsError : Error {
  using Error::Error;
};
struct DivergedLossError : Error {
  using Error::Error;
};
struct MissingCheckpointError : Error {
  using Error::Error;
};
struct MalformedArtifactError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace widthlab
