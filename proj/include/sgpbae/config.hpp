#pragma once

#include <string>

#include "sgpbae/autoencoder.hpp"
#include "sgpbae/datasets.hpp"

namespace sgpbae {

// Flat key=value configuration with '#' comments; sections live in key
// prefixes (sghmc.step_size). Unknown keys and out-of-range values are
// rejected with the offending key named.
struct RunConfig {
  ModelSpec model;
  TrainConfig training;
  CsvSpec data;
  int chains = 1;
  std::string echo;  // raw config text for checkpoint embedding

  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_string(const std::string& text);
  void validate() const;
};

}  // namespace sgpbae
