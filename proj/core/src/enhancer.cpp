// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/enhancer.hpp"

#include <cmath>
#include <filesystem>
#include <sstream>

#include "vqse/checkpoint.hpp"
#include "vqse/features.hpp"
#include "vqse/metrics.hpp"

namespace vqse::enh {

TrainMode parse_mode(const std::string& name) {
  std::string s;
  for (char c : name)
    if (c != '-' && c != '_') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "baseline") return TrainMode::kBaseline;
  if (s == "pairedembedding") return TrainMode::kPairedEmbedding;
  if (s == "pairedfeature") return TrainMode::kPairedFeature;
  if (s == "unpairedembedding") return TrainMode::kUnpairedEmbedding;
  if (s == "unpairedfeature") return TrainMode::kUnpairedFeature;
  throw ConfigError("unknown training mode: " + name);
}

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kBaseline:
      return "Baseline";
    case TrainMode::kPairedEmbedding:
      return "Paired-Embedding";
    case TrainMode::kPairedFeature:
      return "Paired-Feature";
    case TrainMode::kUnpairedEmbedding:
      return "Unpaired-Embedding";
    case TrainMode::kUnpairedFeature:
      return "Unpaired-Feature";
  }
  return "Baseline";
}

bool mode_uses_unpaired(TrainMode mode) {
  return mode == TrainMode::kUnpairedEmbedding || mode == TrainMode::kUnpairedFeature;
}

bool mode_uses_embedding_loss(TrainMode mode) {
  return mode == TrainMode::kPairedEmbedding || mode == TrainMode::kUnpairedEmbedding;
}

bool mode_uses_feature_loss(TrainMode mode) {
  return mode == TrainMode::kPairedFeature || mode == TrainMode::kUnpairedFeature;
}

EnhancerModel::EnhancerModel(const EnhancerConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int bins = cfg.stft.fft_size / 2 + 1;
  in_proj_ = nn::Linear::create(params_, "in_proj", bins, cfg.input_proj, rng);
  gru_ = nn::GruStack::create(params_, "gru", cfg.input_proj, cfg.hidden, cfg.gru_layers, rng);
  out_ = nn::Linear::create(params_, "out", cfg.hidden, bins, rng);
}

std::vector<ad::Var> EnhancerModel::gain_frames(const Tensor& features) const {
  require_input(features.rank() == 4 && features.dim(1) == 1,
                "gain_frames expects (B,1,T,F) features");
  const std::int64_t B = features.dim(0), T = features.dim(2), F = features.dim(3);

  // Level normalization by the causal running mean keeps frame t a
  // function of frames [0, t] only.
  std::vector<double> running(static_cast<std::size_t>(B), 0.0);
  std::vector<ad::Var> inputs;
  inputs.reserve(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t) {
    Tensor frame({B, F});
    for (std::int64_t b = 0; b < B; ++b) {
      const double* src = features.data() + (b * T + t) * F;
      double frame_mean = 0.0;
      for (std::int64_t f = 0; f < F; ++f) frame_mean += src[f];
      frame_mean /= static_cast<double>(F);
      running[static_cast<std::size_t>(b)] +=
          (frame_mean - running[static_cast<std::size_t>(b)]) / static_cast<double>(t + 1);
      for (std::int64_t f = 0; f < F; ++f)
        frame.at(b, f) = src[f] - running[static_cast<std::size_t>(b)];
    }
    inputs.push_back(ad::constant(std::move(frame)));
  }

  std::vector<ad::Var> projected;
  projected.reserve(inputs.size());
  for (const auto& x : inputs) projected.push_back(ad::relu(in_proj_.forward(x)));
  std::vector<ad::Var> hidden = gru_.forward(projected);
  std::vector<ad::Var> gains;
  gains.reserve(hidden.size());
  for (const auto& h : hidden) gains.push_back(ad::sigmoid(out_.forward(h)));
  return gains;
}

Tensor EnhancerModel::estimate_gain(const Tensor& features_tf) const {
  require_input(features_tf.rank() == 2, "estimate_gain expects (T,F) features");
  const std::int64_t T = features_tf.dim(0), F = features_tf.dim(1);
  Tensor batch({1, 1, T, F});
  std::copy_n(features_tf.data(), T * F, batch.data());
  auto frames = gain_frames(batch);
  Tensor out({T, F});
  for (std::int64_t t = 0; t < T; ++t)
    std::copy_n(frames[static_cast<std::size_t>(t)]->value.data(), F, out.data() + t * F);
  return out;
}

void EnhancerModel::set_constant_gain_logit(double logit) {
  out_.w->value.fill(0.0);
  out_.b->value.fill(logit);
}

Waveform enhance(const Waveform& degraded, const EnhancerModel& model) {
  const auto& cfg = model.config().stft;
  auto x = dsp::stft(degraded, cfg);
  auto lp = dsp::log_power(x, model.config().floor_epsilon);
  Tensor feats({lp.frames, lp.bins}, std::move(lp.data));
  Tensor gains = model.estimate_gain(feats);
  auto mag = dsp::apply_gain(gains.values(), gains.dim(0), gains.dim(1), x);
  auto y = dsp::recombine_phase(mag, x);
  Waveform rec = dsp::istft(y, cfg);

  // Pass the uncovered edge samples through from the input.
  Waveform out = degraded;
  std::vector<double> weight = dsp::overlap_add_weight(cfg, x.frames);
  const std::size_t covered = std::min(out.samples.size(), rec.samples.size());
  for (std::size_t i = 0; i < covered; ++i)
    if (weight[i] > 1e-8) out.samples[i] = rec.samples[i];
  return out;
}

ad::Var supervised_loss(const ad::Var& est_mag, const ad::Var& ref_mag) {
  return ad::mse(est_mag, ref_mag);
}

ad::Var embedding_triplet_loss(const ad::Var& e, const ad::Var& q_speech,
                               const ad::Var& q_noise, double margin) {
  require_input(margin >= 0.0, "margin must be nonnegative");
  ad::Var d_pos = ad::cosine_distance_channel(e, q_speech);
  ad::Var d_neg = ad::cosine_distance_channel(e, q_noise);
  return ad::mean_all(ad::relu(ad::add_scalar(ad::sub(d_pos, d_neg), margin)));
}

ad::Var feature_triplet_loss(const ad::Var& anchor, const ad::Var& decoded_speech,
                             const ad::Var& decoded_noise, double margin) {
  require_input(margin >= 0.0, "margin must be nonnegative");
  ad::Var d_pos = ad::patch_cosine_distance(anchor, decoded_speech);
  ad::Var d_neg = ad::patch_cosine_distance(anchor, decoded_noise);
  return ad::mean_all(ad::relu(ad::add_scalar(ad::sub(d_pos, d_neg), margin)));
}

namespace {

struct UnsupTerms {
  ad::Var loss;          // null when mode is Baseline
  double mean_margin = 0.0;
};

// Builds the active triplet loss for one batch of enhanced features
// through the frozen VQ-VAE (eval mode, batch-independent statistics).
UnsupTerms unsup_terms(const ad::Var& enhanced_feats, vq::VqVaeModel& frozen, TrainMode mode,
                       double margin, bool anchor_decoded) {
  UnsupTerms terms;
  ad::Var e = frozen.encode(enhanced_feats, /*train=*/false);
  auto qs = vq::quantize(e, frozen.codebook(), vq::Partition::kSpeech);
  auto qn = vq::quantize(e, frozen.codebook(), vq::Partition::kNoise);

  if (mode_uses_embedding_loss(mode)) {
    terms.loss = embedding_triplet_loss(e, qs.quantized, qn.quantized, margin);
    Tensor d_pos = ad::tensor_cosine_distance_channel(e->value, qs.quantized->value);
    Tensor d_neg = ad::tensor_cosine_distance_channel(e->value, qn.quantized->value);
    double acc = 0.0;
    for (std::int64_t i = 0; i < d_pos.numel(); ++i) acc += d_pos[i] - d_neg[i];
    terms.mean_margin = acc / static_cast<double>(d_pos.numel());
  } else if (mode_uses_feature_loss(mode)) {
    ad::Var dec_s = frozen.decode(qs.quantized, /*train=*/false);
    ad::Var dec_n = frozen.decode(qn.quantized, /*train=*/false);
    ad::Var anchor = enhanced_feats;
    if (anchor_decoded) {
      auto qf = vq::quantize(e, frozen.codebook(), vq::Partition::kFull);
      anchor = frozen.decode(ad::straight_through(e, qf.quantized), /*train=*/false);
    }
    terms.loss = feature_triplet_loss(anchor, ad::detach(dec_s), ad::detach(dec_n), margin);
    ad::Var d_pos = ad::patch_cosine_distance(ad::detach(anchor), ad::detach(dec_s));
    ad::Var d_neg = ad::patch_cosine_distance(ad::detach(anchor), ad::detach(dec_n));
    double acc = 0.0;
    for (std::int64_t i = 0; i < d_pos->value.numel(); ++i)
      acc += d_pos->value[i] - d_neg->value[i];
    terms.mean_margin = acc / static_cast<double>(d_pos->value.numel());
  }
  return terms;
}

struct BatchGraph {
  ad::Var supervised;     // null for unpaired batches
  ad::Var enhanced_feats;  // (B,1,T,F)
};

// Shared forward for one batch of degraded inputs: gains, masked
// magnitudes, optional supervised loss, enhanced log-power features.
BatchGraph forward_batch(const std::vector<const Waveform*>& degraded,
                         const std::vector<const Waveform*>& clean, EnhancerModel& model,
                         bool need_features) {
  const auto& stft_cfg = model.config().stft;
  const double eps = model.config().floor_epsilon;

  std::vector<Tensor> feats, mags, ref_mags;
  for (std::size_t i = 0; i < degraded.size(); ++i) {
    feats.push_back(log_power_tensor(*degraded[i], stft_cfg, eps));
    mags.push_back(magnitude_tensor(*degraded[i], stft_cfg));
    if (!clean.empty()) ref_mags.push_back(magnitude_tensor(*clean[i], stft_cfg));
  }
  Tensor batch = batch_features(feats);
  const std::int64_t B = batch.dim(0), T = batch.dim(2), F = batch.dim(3);

  std::vector<ad::Var> gains = model.gain_frames(batch);

  auto frame_const = [&](const std::vector<Tensor>& items, std::int64_t t) {
    Tensor fr({B, F});
    for (std::int64_t b = 0; b < B; ++b)
      std::copy_n(items[static_cast<std::size_t>(b)].data() + t * F, F, fr.data() + b * F);
    return ad::constant(std::move(fr));
  };

  BatchGraph g;
  std::vector<ad::Var> est_frames;
  est_frames.reserve(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t)
    est_frames.push_back(ad::mul(gains[static_cast<std::size_t>(t)], frame_const(mags, t)));

  if (!clean.empty()) {
    ad::Var acc;
    for (std::int64_t t = 0; t < T; ++t) {
      ad::Var term = supervised_loss(est_frames[static_cast<std::size_t>(t)], frame_const(ref_mags, t));
      acc = acc ? ad::add(acc, term) : term;
    }
    g.supervised = ad::scale(acc, 1.0 / static_cast<double>(T));
  }

  if (need_features) {
    std::vector<ad::Var> feat_frames;
    feat_frames.reserve(static_cast<std::size_t>(T));
    for (const auto& est : est_frames)
      feat_frames.push_back(ad::log_clamped(ad::square(est), eps));
    g.enhanced_feats = ad::stack_frames(feat_frames);
  }
  return g;
}

void check_frozen(const vq::VqVaeModel& vqvae) {
  for (const auto& p : vqvae.params().params())
    require_config(!p.trainable && !p.var->requires_grad,
                   "VQ-VAE must be frozen before enhancement training");
}

}  // namespace

StepReport semi_supervised_step(const std::vector<datagen::PairedExample>& paired,
                                const std::vector<Waveform>& unpaired, EnhancerModel& model,
                                vq::VqVaeModel& frozen_vqvae, ad::Adam& adam,
                                const SemiSupConfig& cfg) {
  require_config(!paired.empty(), "semi_supervised_step needs a paired batch");
  check_frozen(frozen_vqvae);
  const bool needs_unpaired = mode_uses_unpaired(cfg.mode);
  require_config(!needs_unpaired || !unpaired.empty(),
                 mode_name(cfg.mode) + " requires an unpaired batch");
  const bool unsup = cfg.mode != TrainMode::kBaseline;

  std::vector<const Waveform*> degraded, clean;
  for (const auto& ex : paired) {
    degraded.push_back(&ex.degraded);
    clean.push_back(&ex.clean);
  }
  BatchGraph paired_graph = forward_batch(degraded, clean, model, unsup);

  StepReport report;
  ad::Var total = paired_graph.supervised;
  report.supervised = total->value[0];

  if (unsup) {
    UnsupTerms paired_terms = unsup_terms(paired_graph.enhanced_feats, frozen_vqvae, cfg.mode,
                                          cfg.margin, cfg.anchor_decoded);
    ad::Var unsup_loss = paired_terms.loss;
    double margin_acc = paired_terms.mean_margin;
    int margin_n = 1;

    if (needs_unpaired) {
      std::vector<const Waveform*> up;
      for (const auto& w : unpaired) up.push_back(&w);
      BatchGraph unpaired_graph = forward_batch(up, {}, model, true);
      UnsupTerms up_terms = unsup_terms(unpaired_graph.enhanced_feats, frozen_vqvae, cfg.mode,
                                        cfg.margin, cfg.anchor_decoded);
      unsup_loss = ad::scale(ad::add(unsup_loss, up_terms.loss), 0.5);
      margin_acc += up_terms.mean_margin;
      ++margin_n;
    }

    if (mode_uses_embedding_loss(cfg.mode)) report.embedding_loss = unsup_loss->value[0];
    if (mode_uses_feature_loss(cfg.mode)) report.feature_loss = unsup_loss->value[0];
    report.mean_margin = margin_acc / margin_n;
    total = ad::add(total, ad::scale(unsup_loss, cfg.lambda_u));
  }

  report.total = total->value[0];
  model.params().zero_grad();
  ad::backward(total);
  adam.step(model.params());
  return report;
}

TrainSeResult train_se(const SePools& pools, EnhancerModel& model,
                       vq::VqVaeModel& frozen_vqvae, const SemiSupConfig& cfg, bool resume) {
  require_config(!pools.paired_train.clean.empty() && !pools.paired_train.noise.empty(),
                 "train_se: paired training data required");
  check_frozen(frozen_vqvae);
  if (mode_uses_unpaired(cfg.mode))
    require_config(!pools.unpaired.empty(),
                   mode_name(cfg.mode) + " requires unpaired training data");

  ad::Adam adam(cfg.lr);
  Rng paired_rng = make_stream(cfg.seed, "se-paired-sampler");
  Rng unpaired_rng = make_stream(cfg.seed, "se-unpaired-sampler");
  int start_step = 0;

  if (resume && !cfg.checkpoint_path.empty() &&
      std::filesystem::exists(cfg.checkpoint_path)) {
    Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
    restore_params(ckpt, model.params());
    start_step = std::stoi(ckpt.meta.at("step"));
    adam.load_state(
        model.params(),
        [&](const std::string& name) -> const Tensor* {
          auto it = ckpt.tensors.find(name);
          return it == ckpt.tensors.end() ? nullptr : &it->second;
        },
        std::stoll(ckpt.meta.at("adam_steps")));
    std::istringstream ps(ckpt.meta.at("paired_state"));
    ps >> paired_rng;
    std::istringstream us(ckpt.meta.at("unpaired_state"));
    us >> unpaired_rng;
  }

  auto save = [&](int step) {
    if (cfg.checkpoint_path.empty()) return;
    auto tensors = snapshot_params(model.params());
    for (auto& [name, t] : adam.state_tensors(model.params()))
      tensors.emplace_back(name, std::move(t));
    std::ostringstream ps, us;
    ps << paired_rng;
    us << unpaired_rng;
    save_checkpoint(cfg.checkpoint_path, tensors,
                    {{"kind", "enhancer"},
                     {"mode", mode_name(cfg.mode)},
                     {"step", std::to_string(step)},
                     {"adam_steps", std::to_string(adam.steps_taken())},
                     {"paired_state", ps.str()},
                     {"unpaired_state", us.str()}});
  };

  // Fixed validation mixtures, identical across runs and modes.
  std::vector<datagen::PairedExample> val_set;
  if (!pools.paired_val.clean.empty() && !pools.paired_val.noise.empty() &&
      cfg.val_mixtures > 0) {
    Rng val_rng = make_stream(cfg.seed, "se-val");
    const double val_snrs[] = {-5.0, 0.0, 5.0};
    for (int i = 0; i < cfg.val_mixtures; ++i) {
      std::uniform_int_distribution<std::size_t> pc(0, pools.paired_val.clean.size() - 1);
      std::uniform_int_distribution<std::size_t> pn(0, pools.paired_val.noise.size() - 1);
      Waveform sp = datagen::sample_segment(*pools.paired_val.clean[pc(val_rng)],
                                            cfg.mix.segment_seconds, val_rng);
      Waveform nz = datagen::sample_segment(*pools.paired_val.noise[pn(val_rng)],
                                            cfg.mix.segment_seconds, val_rng);
      val_set.push_back(
          datagen::mix_at_snr(sp, nz, val_snrs[i % 3], val_rng, cfg.mix));
    }
  }
  auto validate = [&]() -> std::optional<double> {
    if (val_set.empty()) return std::nullopt;
    double acc = 0.0;
    for (const auto& ex : val_set)
      acc += metrics::si_sdr(enhance(ex.degraded, model), ex.clean).value_db;
    return acc / static_cast<double>(val_set.size());
  };

  TrainSeResult result;
  result.last_step = start_step;
  for (int step = start_step; step < cfg.steps; ++step) {
    std::vector<datagen::PairedExample> paired;
    for (int b = 0; b < cfg.paired_batch; ++b)
      paired.push_back(vq::sample_paired(pools.paired_train, cfg.mix, paired_rng));

    std::vector<Waveform> unpaired;
    if (mode_uses_unpaired(cfg.mode)) {
      std::uniform_int_distribution<std::size_t> pick(0, pools.unpaired.size() - 1);
      for (int b = 0; b < cfg.unpaired_batch; ++b)
        unpaired.push_back(datagen::sample_segment(*pools.unpaired[pick(unpaired_rng)],
                                                   cfg.mix.segment_seconds, unpaired_rng));
    }

    StepReport rep = semi_supervised_step(paired, unpaired, model, frozen_vqvae, adam, cfg);

    SeHistoryRow row;
    row.step = step + 1;
    row.supervised = rep.supervised;
    row.embedding_loss = rep.embedding_loss;
    row.feature_loss = rep.feature_loss;
    row.mean_margin = rep.mean_margin;
    if (cfg.val_interval > 0 && ((step + 1) % cfg.val_interval == 0 || step + 1 == cfg.steps))
      row.val_si_sdr = validate();
    result.history.push_back(row);

    if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0)
      save(step + 1);
    result.last_step = step + 1;
  }
  save(result.last_step);
  return result;
}

}  // namespace vqse::enh
