// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_EXPERIMENT_HPP_
#define VQSE_EXPERIMENT_HPP_

#include <memory>
#include <string>
#include <vector>

#include "vqse/config.hpp"
#include "vqse/datagen.hpp"
#include "vqse/enhancer.hpp"
#include "vqse/metrics.hpp"
#include "vqse/vqvae.hpp"

namespace vqse {

inline constexpr const char* kVersion = "0.1.0";

// Waveform pools resolved from the corpus manifests, with the paired
// fraction applied to the training lists.
struct LoadedData {
  std::unique_ptr<datagen::WaveStore> store;
  vq::PairedPool paired_train;
  vq::PairedPool paired_val;
  std::vector<const Waveform*> unpaired;
  metrics::TestPools test;
};

LoadedData load_data(const ExperimentConfig& cfg);

// Command entry points; each writes its primary outputs plus a run
// manifest under cfg.out_dir and returns 0 on success.
int cmd_synth_data(const ExperimentConfig& cfg);
int cmd_train_vqvae(const ExperimentConfig& cfg, bool resume);
int cmd_train_se(const ExperimentConfig& cfg, const std::string& vqvae_checkpoint, bool resume);
int cmd_eval(const ExperimentConfig& cfg, const std::string& se_checkpoint);
int cmd_margin_diag(const ExperimentConfig& cfg, const std::string& vqvae_checkpoint);
int cmd_sweep(const ExperimentConfig& cfg);

// Default artifact locations under cfg.out_dir.
std::string vqvae_checkpoint_path(const ExperimentConfig& cfg);
std::string se_checkpoint_path(const ExperimentConfig& cfg, enh::TrainMode mode);

}  // namespace vqse

#endif  // VQSE_EXPERIMENT_HPP_
