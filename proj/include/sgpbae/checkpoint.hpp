#pragma once

#include <string>

#include "sgpbae/autoencoder.hpp"

namespace sgpbae {

// Trained artifact: architecture, encoder weights, posterior samples, and
// the config text that produced them. Serialized in the "SGPB" binary
// format (see docs/checkpoint_format.md).
struct Checkpoint {
  ModelSpec spec;
  UniformBox box;
  EncoderNet encoder;
  std::vector<PosteriorSample> samples;
  std::string config_echo;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sgpbae
