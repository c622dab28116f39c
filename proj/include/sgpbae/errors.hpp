#pragma once

#include <stdexcept>
#include <string>

namespace sgpbae {

// Shape/structure problems detected while wiring operations together.
struct ShapeMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NonScalarRoot : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Numeric failures.
struct NotPositiveDefinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SingularMatrix : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TooLarge : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Posterior / data selection problems.
struct EmptyPosterior : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct EmptySelection : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ZeroTruthVariance : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NoMissing : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateChains : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ChainCountTooSmall : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Files and configuration.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoAuxColumns : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingCheckpoint : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace sgpbae
