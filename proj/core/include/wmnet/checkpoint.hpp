#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wmnet/autograd.hpp"

namespace wmnet {

/// Single-file binary container: named float32 arrays with shape headers
/// (little-endian) plus embedded config and metric-history text blocks.
struct Checkpoint {
  std::string config_text;
  std::string history_json;
  std::vector<std::pair<std::string, Tensor<float>>> arrays;

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
      if (n == name) return &t;
    return nullptr;
  }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint checkpoint_from_store(const ParamStore<float>& store, std::string config_text,
                                 std::string history_json);

/// Copies arrays into an existing store; every parameter must be present
/// with a matching shape.
void load_store_from_checkpoint(ParamStore<float>& store, const Checkpoint& ckpt);

}  // namespace wmnet
