// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_FEATURES_HPP_
#define VQSE_FEATURES_HPP_

#include <vector>

#include "vqse/dsp.hpp"
#include "vqse/tensor.hpp"

namespace vqse {

// Log-power features of a waveform as a (T,F) tensor.
Tensor log_power_tensor(const Waveform& w, const dsp::StftConfig& cfg, double floor_epsilon);
Tensor magnitude_tensor(const Waveform& w, const dsp::StftConfig& cfg);

// Stacks B same-shape (T,F) tensors into (B,1,T,F).
Tensor batch_features(const std::vector<Tensor>& items);

}  // namespace vqse

#endif  // VQSE_FEATURES_HPP_
