// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_CHECKPOINT_HPP_
#define VQSE_CHECKPOINT_HPP_

#include <map>
#include <string>
#include <vector>

#include "vqse/autodiff.hpp"
#include "vqse/tensor.hpp"

namespace vqse {

// Versioned binary container with named tensor entries (name, shape, raw
// little-endian doubles) plus string metadata. Layout documented in
// docs/checkpoint_format.md.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::map<std::string, std::string>& meta);
Checkpoint load_checkpoint(const std::string& path);

// Collects parameter values (and optional optimizer state) for saving.
std::vector<std::pair<std::string, Tensor>> snapshot_params(const ad::ParamStore& store);
// Copies matching entries into the store; throws on missing names or
// shape mismatches.
void restore_params(const Checkpoint& ckpt, ad::ParamStore& store);

}  // namespace vqse

#endif  // VQSE_CHECKPOINT_HPP_
