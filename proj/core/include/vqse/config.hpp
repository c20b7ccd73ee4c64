// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_CONFIG_HPP_
#define VQSE_CONFIG_HPP_

#include <string>
#include <vector>

#include "vqse/datagen.hpp"
#include "vqse/enhancer.hpp"
#include "vqse/metrics.hpp"
#include "vqse/vqvae.hpp"

namespace vqse {

// Resolved experiment configuration. Sources are merged as
// flags > config file > defaults.
struct ExperimentConfig {
  // [run]
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string data_dir = "data";
  double paired_fraction = 1.0;

  // [stft]
  dsp::StftConfig stft;
  double floor_epsilon = 1e-10;

  // [mix]
  datagen::MixConfig mix;

  // [corpus]
  datagen::ToyCorpusSpec corpus;

  // [vqvae]
  vq::VqVaeConfig vqvae;  // stft/floor filled from [stft]
  int vqvae_steps = 1000;
  int vqvae_batch = 4;
  double vqvae_lr = 1e-4;
  int vqvae_checkpoint_interval = 200;
  int usage_epoch_steps = 100;
  bool vqvae_data_init = true;

  // [enhancer]
  enh::EnhancerConfig enhancer;  // stft/floor filled from [stft]
  enh::SemiSupConfig semi;       // mix/seed filled from [mix]/[run]

  // [eval]
  std::vector<double> snr_grid_db = {-10, -5, 0, 5, 10};
  int eval_mixtures_per_condition = 50;
  bool eval_orthogonalize = true;

  // [margin]
  int margin_mixtures_per_snr = 8;

  // [sweep]
  std::vector<double> sweep_fractions = {0.1, 0.2, 0.3, 0.4};
  std::vector<std::string> sweep_modes = {"Baseline", "Paired-Embedding", "Paired-Feature",
                                          "Unpaired-Embedding", "Unpaired-Feature"};
};

// Key/value file with [section] headers; '#' or ';' start comments.
// Unknown keys are configuration errors.
ExperimentConfig load_config_file(const std::string& path);
ExperimentConfig default_config();

// Overrides of the form "section.key=value", applied after the file.
void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides);

// Renders the resolved configuration in config-file syntax.
std::string render_config(const ExperimentConfig& cfg);

// Re-derives the dependent fields (stft copies, seeds, mix copies) after
// direct mutation of the top-level fields.
void finalize_config(ExperimentConfig& cfg);

}  // namespace vqse

#endif  // VQSE_CONFIG_HPP_
