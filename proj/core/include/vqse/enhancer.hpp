// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_ENHANCER_HPP_
#define VQSE_ENHANCER_HPP_

#include <optional>
#include <string>
#include <vector>

#include "vqse/autodiff.hpp"
#include "vqse/datagen.hpp"
#include "vqse/dsp.hpp"
#include "vqse/nn.hpp"
#include "vqse/vqvae.hpp"

namespace vqse::enh {

enum class TrainMode {
  kBaseline,
  kPairedEmbedding,
  kPairedFeature,
  kUnpairedEmbedding,
  kUnpairedFeature,
};

// Canonical names: Baseline, Paired-Embedding, Paired-Feature,
// Unpaired-Embedding, Unpaired-Feature (hyphen-less spellings accepted).
TrainMode parse_mode(const std::string& name);
std::string mode_name(TrainMode mode);
bool mode_uses_unpaired(TrainMode mode);
bool mode_uses_embedding_loss(TrainMode mode);
bool mode_uses_feature_loss(TrainMode mode);

struct EnhancerConfig {
  int input_proj = 64;
  int hidden = 64;
  int gru_layers = 2;
  dsp::StftConfig stft;
  double floor_epsilon = 1e-10;
};

// Causal gain estimator: input projection + stacked GRU + linear/sigmoid
// head emitting one gain per frequency bin per frame. The GRU input is
// level-normalized by the causal running mean of the features.
class EnhancerModel {
 public:
  EnhancerModel(const EnhancerConfig& cfg, Rng& init_rng);

  // features (B,1,T,F) -> T gain frames of shape (B,F), entries in [0,1].
  std::vector<ad::Var> gain_frames(const Tensor& features) const;
  // Single-item convenience on values: (T,F) -> (T,F).
  Tensor estimate_gain(const Tensor& features_tf) const;

  // Pins the output head so every gain equals sigmoid(logit); used by
  // identity/silence checks.
  void set_constant_gain_logit(double logit);

  const EnhancerConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

 private:
  EnhancerConfig cfg_;
  ad::ParamStore params_;
  nn::Linear in_proj_;
  nn::GruStack gru_;
  nn::Linear out_;
};

// stft -> log-power -> gains -> masked magnitude -> degraded phase ->
// istft. Samples outside the synthesis coverage (shorter than a window)
// pass through from the input, so output length equals input length.
Waveform enhance(const Waveform& degraded, const EnhancerModel& model);

// MSE over T x F magnitude bins.
ad::Var supervised_loss(const ad::Var& est_mag, const ad::Var& ref_mag);

// mean over bins of max(d(e, q_s) - d(e, q_n) + margin, 0), cosine
// distance over the embedding dim; gradients reach e only.
ad::Var embedding_triplet_loss(const ad::Var& e, const ad::Var& q_speech,
                               const ad::Var& q_noise, double margin);

// mean over bins of max(d(a, dec_s) - d(a, dec_n) + margin, 0) with d the
// 3x3-patch cosine distance; gradients reach the anchor only.
ad::Var feature_triplet_loss(const ad::Var& anchor, const ad::Var& decoded_speech,
                             const ad::Var& decoded_noise, double margin);

struct SemiSupConfig {
  TrainMode mode = TrainMode::kBaseline;
  double margin = 0.2;
  double lambda_u = 0.1;
  int paired_batch = 4;
  int unpaired_batch = 4;
  int steps = 1000;
  double lr = 1e-4;
  int val_interval = 100;
  int val_mixtures = 12;
  int checkpoint_interval = 200;
  // Feature-triplet anchor: the enhanced log-power feature itself
  // (default) or the decoded degraded feature.
  bool anchor_decoded = false;
  std::uint64_t seed = 0;
  datagen::MixConfig mix;
  std::string checkpoint_path;
};

struct StepReport {
  double supervised = 0.0;
  std::optional<double> embedding_loss;
  std::optional<double> feature_loss;
  std::optional<double> mean_margin;
  double total = 0.0;
};

// One optimizer update on the enhancer; the VQ-VAE must be frozen and is
// never mutated. Unpaired-* modes average the unsupervised term over the
// paired and unpaired batches.
StepReport semi_supervised_step(const std::vector<datagen::PairedExample>& paired,
                                const std::vector<Waveform>& unpaired, EnhancerModel& model,
                                vq::VqVaeModel& frozen_vqvae, ad::Adam& adam,
                                const SemiSupConfig& cfg);

struct SeHistoryRow {
  int step = 0;
  double supervised = 0.0;
  std::optional<double> embedding_loss;
  std::optional<double> feature_loss;
  std::optional<double> mean_margin;
  std::optional<double> val_si_sdr;
};

struct SePools {
  vq::PairedPool paired_train;
  std::vector<const Waveform*> unpaired;
  vq::PairedPool paired_val;
};

struct TrainSeResult {
  std::vector<SeHistoryRow> history;
  int last_step = 0;
};

TrainSeResult train_se(const SePools& pools, EnhancerModel& model,
                       vq::VqVaeModel& frozen_vqvae, const SemiSupConfig& cfg,
                       bool resume = false);

}  // namespace vqse::enh

#endif  // VQSE_ENHANCER_HPP_
