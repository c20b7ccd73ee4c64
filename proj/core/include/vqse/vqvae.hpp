// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_VQVAE_HPP_
#define VQSE_VQVAE_HPP_

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vqse/autodiff.hpp"
#include "vqse/datagen.hpp"
#include "vqse/dsp.hpp"
#include "vqse/features.hpp"
#include "vqse/nn.hpp"

namespace vqse::vq {

// Codebook halves: speech indices [0, K/2), noise indices [K/2, K), and
// their union.
enum class Partition { kSpeech, kNoise, kFull };

struct VqVaeConfig {
  int codebook_size = 256;  // K, must be even
  int embedding_dim = 32;   // L
  double beta = 0.25;       // commitment loss weight
  int enc_channels1 = 32;
  int enc_channels2 = 64;
  dsp::StftConfig stft;
  double floor_epsilon = 1e-10;
};

// Per-bin encoder (3 convs + 2 residual blocks, stride 1, same padding),
// mirrored transposed-conv decoder, and the partitioned codebook. Every
// time-frequency bin maps to one L-dimensional embedding.
class VqVaeModel {
 public:
  VqVaeModel(const VqVaeConfig& cfg, Rng& init_rng);

  // features (B,1,T,F) -> embeddings (B,L,T,F)
  ad::Var encode(const ad::Var& features, bool train);
  // quantized embeddings (B,L,T,F) -> decoded features (B,1,T,F)
  ad::Var decode(const ad::Var& quantized, bool train);

  const ad::Var& codebook() const { return codebook_; }
  std::pair<std::int64_t, std::int64_t> partition_range(Partition p) const;

  const VqVaeConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  void freeze() { params_.freeze(); }

 private:
  VqVaeConfig cfg_;
  ad::ParamStore params_;
  nn::Conv2d enc1_, enc2_, enc3_;
  nn::BatchNorm2d enc_bn1_, enc_bn2_, enc_bn3_;
  nn::Conv2d res1a_, res1b_, res2a_, res2b_;
  nn::BatchNorm2d emb_bn_;  // centers embedding channels for the cosine quantizer
  nn::ConvTranspose2d dres1a_, dres1b_, dres2a_, dres2b_;
  nn::ConvTranspose2d dec3_, dec2_, dec1_;
  nn::BatchNorm2d dec_bn3_, dec_bn2_;
  ad::Var codebook_;  // (K, L), unit-norm rows at init
};

// Nearest codeword per bin under cosine distance, restricted to the
// partition; ties break to the lowest index. e is (B,L,T,F); returns one
// index per bin in row-major (B,T,F) order.
std::vector<std::int64_t> quantize_indices(const Tensor& e, const Tensor& codebook,
                                           Partition p);

struct QuantizeResult {
  ad::Var quantized;                 // (B,L,T,F) codebook rows
  std::vector<std::int64_t> indices;  // (B*T*F)
};

// Codebook lookup as a graph node (gradients scatter into the codebook).
QuantizeResult quantize(const ad::Var& e, const ad::Var& codebook, Partition p);

struct VqVaeOutput {
  ad::Var embeddings;  // e, (B,L,T,F)
  ad::Var quant_speech, quant_noise, quant_full;
  std::vector<std::int64_t> idx_speech, idx_noise, idx_full;
  // Decoded from straight-through embeddings, so values equal
  // Decoder(q_k) while reconstruction gradients reach the encoder.
  ad::Var decoded_speech, decoded_noise, decoded_degraded;  // (B,1,T,F)
};

VqVaeOutput vqvae_forward(VqVaeModel& model, const ad::Var& features, bool train);

struct VqVaeLossReport {
  double rec_speech = 0, rec_noise = 0, rec_degraded = 0;
  double vq_speech = 0, vq_noise = 0, vq_degraded = 0;
  double commit_speech = 0, commit_noise = 0, commit_degraded = 0;
  double total = 0;
};

// total = sum(rec) + sum(vq) + beta * sum(commit); reconstruction is MSE
// against the log-power features of (clean, noise, degraded); VQ terms
// are mean cosine distances with stop-gradients routing VQ updates to the
// codebook and commitment updates to the encoder.
ad::Var vqvae_loss(const VqVaeOutput& out, const ad::Var& f_degraded, const ad::Var& f_speech,
                   const ad::Var& f_noise, double beta, VqVaeLossReport* report);

struct VqVaeTrainConfig {
  int steps = 1000;
  int batch = 4;
  double lr = 1e-4;
  int checkpoint_interval = 200;
  int usage_epoch_steps = 100;  // usage histogram window
  // Re-seed the codebook from first-batch embeddings before step 0.
  // Random-sphere codewords rarely overlap the populated embedding cone,
  // which starves most of the codebook; seeding keeps usage alive.
  bool data_init = true;
  std::uint64_t seed = 0;
  datagen::MixConfig mix;
  std::string checkpoint_path;  // empty: no checkpoints
};

struct CodebookUsage {
  int epoch = 0;
  double speech_fraction = 0;  // codewords selected at least once
  double noise_fraction = 0;
};

struct VqVaeTrainResult {
  std::vector<VqVaeLossReport> history;  // one per step, in step order
  std::vector<CodebookUsage> usage;
  int last_step = 0;
};

struct PairedPool {
  std::vector<const Waveform*> clean;
  std::vector<const Waveform*> noise;
};

datagen::PairedExample sample_paired(const PairedPool& pool, const datagen::MixConfig& mix,
                                     Rng& rng);

// Supervised training on mixed pairs. Resumes from checkpoint_path when
// resume is set and the file exists (optimizer and sampler state
// included), so a continuation is identical to an uninterrupted run.
VqVaeTrainResult train_vqvae(const PairedPool& pool, VqVaeModel& model,
                             const VqVaeTrainConfig& cfg, bool resume = false);

}  // namespace vqse::vq

#endif  // VQSE_VQVAE_HPP_
