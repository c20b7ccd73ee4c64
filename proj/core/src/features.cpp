// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/features.hpp"

namespace vqse {

Tensor log_power_tensor(const Waveform& w, const dsp::StftConfig& cfg, double floor_epsilon) {
  auto spec = dsp::stft(w, cfg);
  auto lp = dsp::log_power(spec, floor_epsilon);
  return Tensor({lp.frames, lp.bins}, std::move(lp.data));
}

Tensor magnitude_tensor(const Waveform& w, const dsp::StftConfig& cfg) {
  auto spec = dsp::stft(w, cfg);
  auto mag = dsp::magnitude(spec);
  return Tensor({mag.frames, mag.bins}, std::move(mag.data));
}

Tensor batch_features(const std::vector<Tensor>& items) {
  require_input(!items.empty(), "batch_features: empty batch");
  const std::int64_t T = items[0].dim(0), F = items[0].dim(1);
  const std::int64_t B = static_cast<std::int64_t>(items.size());
  Tensor out({B, 1, T, F});
  for (std::int64_t b = 0; b < B; ++b) {
    require_input(items[static_cast<std::size_t>(b)].shape() == items[0].shape(),
                  "batch_features: inconsistent shapes");
    std::copy_n(items[static_cast<std::size_t>(b)].data(), T * F, out.data() + b * T * F);
  }
  return out;
}

}  // namespace vqse
