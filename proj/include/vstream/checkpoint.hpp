#pragma once

#include <cstddef>
#include <string>

#include "vstream/model.hpp"

namespace vstream {

inline constexpr const char* kCheckpointFormat = "vstream-checkpoint/1";

/// Trained parameters plus what is needed to recompute the embedding.
/// Serialised as JSON: every parameter maps to {"shape": [r, c], "values": [...]}
/// in row-major order, doubles written with round-trip precision.
struct Checkpoint {
  std::string fingerprint;
  std::size_t step = 0;
  ModelConfig model;
  ModelState state;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
/// Throws DataError on a wrong format tag, missing parameters or bad shapes.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vstream
