// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/vqvae.hpp"

#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "vqse/checkpoint.hpp"

namespace vqse::vq {

namespace {

Tensor init_codebook(int K, int L, Rng& rng) {
  // Uniform directions on the sphere; cosine distance ignores magnitude,
  // so unit norm removes that degeneracy.
  Tensor cb({K, L});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < K; ++k) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (int l = 0; l < L; ++l) {
        const double v = gauss(rng);
        cb[k * L + l] = v;
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-6);
    for (int l = 0; l < L; ++l) cb[k * L + l] /= norm;
  }
  return cb;
}

}  // namespace

VqVaeModel::VqVaeModel(const VqVaeConfig& cfg, Rng& rng) : cfg_(cfg) {
  require_config(cfg.codebook_size >= 2 && cfg.codebook_size % 2 == 0,
                 "codebook size must be even and >= 2");
  require_config(cfg.embedding_dim >= 1, "embedding dim must be positive");
  const int c1 = cfg.enc_channels1, c2 = cfg.enc_channels2, L = cfg.embedding_dim;

  enc1_ = nn::Conv2d::create(params_, "enc1", 1, c1, 3, 1, 1, rng);
  enc_bn1_ = nn::BatchNorm2d::create(params_, "enc_bn1", c1);
  enc2_ = nn::Conv2d::create(params_, "enc2", c1, c2, 3, 1, 1, rng);
  enc_bn2_ = nn::BatchNorm2d::create(params_, "enc_bn2", c2);
  enc3_ = nn::Conv2d::create(params_, "enc3", c2, L, 3, 1, 1, rng);
  enc_bn3_ = nn::BatchNorm2d::create(params_, "enc_bn3", L);
  res1a_ = nn::Conv2d::create(params_, "res1a", L, L, 3, 1, 1, rng);
  res1b_ = nn::Conv2d::create(params_, "res1b", L, L, 3, 1, 1, rng);
  res2a_ = nn::Conv2d::create(params_, "res2a", L, L, 3, 1, 1, rng);
  res2b_ = nn::Conv2d::create(params_, "res2b", L, L, 3, 1, 1, rng);
  emb_bn_ = nn::BatchNorm2d::create(params_, "emb_bn", L);

  dres1a_ = nn::ConvTranspose2d::create(params_, "dres1a", L, L, 3, 1, 1, rng);
  dres1b_ = nn::ConvTranspose2d::create(params_, "dres1b", L, L, 3, 1, 1, rng);
  dres2a_ = nn::ConvTranspose2d::create(params_, "dres2a", L, L, 3, 1, 1, rng);
  dres2b_ = nn::ConvTranspose2d::create(params_, "dres2b", L, L, 3, 1, 1, rng);
  dec3_ = nn::ConvTranspose2d::create(params_, "dec3", L, c2, 3, 1, 1, rng);
  dec_bn3_ = nn::BatchNorm2d::create(params_, "dec_bn3", c2);
  dec2_ = nn::ConvTranspose2d::create(params_, "dec2", c2, c1, 3, 1, 1, rng);
  dec_bn2_ = nn::BatchNorm2d::create(params_, "dec_bn2", c1);
  dec1_ = nn::ConvTranspose2d::create(params_, "dec1", c1, 1, 3, 1, 1, rng);

  codebook_ = params_.create("codebook", init_codebook(cfg.codebook_size, L, rng));
}

ad::Var VqVaeModel::encode(const ad::Var& features, bool train) {
  require_input(features->value.rank() == 4 && features->value.dim(1) == 1,
                "encode expects (B,1,T,F) features");
  ad::Var h = ad::relu(enc_bn1_.forward(enc1_.forward(features), train));
  h = ad::relu(enc_bn2_.forward(enc2_.forward(h), train));
  h = ad::relu(enc_bn3_.forward(enc3_.forward(h), train));
  h = ad::add(h, res1b_.forward(ad::relu(res1a_.forward(h))));
  h = ad::add(h, res2b_.forward(ad::relu(res2a_.forward(h))));
  // ReLU stacks leave activations in a narrow nonnegative cone where
  // cosine distances degenerate; center the embedding channels instead.
  return emb_bn_.forward(h, train);
}

ad::Var VqVaeModel::decode(const ad::Var& quantized, bool train) {
  require_input(quantized->value.rank() == 4 &&
                    quantized->value.dim(1) == cfg_.embedding_dim,
                "decode expects (B,L,T,F) embeddings");
  ad::Var h = ad::add(quantized, dres1b_.forward(ad::relu(dres1a_.forward(quantized))));
  h = ad::add(h, dres2b_.forward(ad::relu(dres2a_.forward(h))));
  h = ad::relu(dec_bn3_.forward(dec3_.forward(h), train));
  h = ad::relu(dec_bn2_.forward(dec2_.forward(h), train));
  return dec1_.forward(h);  // linear output, log-power values can be negative
}

std::pair<std::int64_t, std::int64_t> VqVaeModel::partition_range(Partition p) const {
  const std::int64_t K = cfg_.codebook_size;
  switch (p) {
    case Partition::kSpeech:
      return {0, K / 2};
    case Partition::kNoise:
      return {K / 2, K};
    case Partition::kFull:
      return {0, K};
  }
  return {0, K};
}

std::vector<std::int64_t> quantize_indices(const Tensor& e, const Tensor& codebook,
                                           Partition p) {
  require_input(e.rank() == 4, "quantize expects (B,L,T,F) embeddings");
  require_input(codebook.rank() == 2 && codebook.dim(1) == e.dim(1),
                "codebook dim does not match embedding dim");
  const std::int64_t K = codebook.dim(0), L = codebook.dim(1);
  std::int64_t lo = 0, hi = K;
  if (p == Partition::kSpeech) hi = K / 2;
  if (p == Partition::kNoise) lo = K / 2;
  require_config(hi > lo, "empty codebook partition");

  const std::int64_t B = e.dim(0), T = e.dim(2), F = e.dim(3);
  const std::int64_t stride = T * F;

  // Norms hoisted out of the scan; accumulation order per term is
  // unchanged, so distances stay bit-identical to a fused per-pair loop.
  std::vector<double> cb_norm(static_cast<std::size_t>(K));
  for (std::int64_t i = 0; i < K; ++i) {
    const double* c = codebook.data() + i * L;
    double nc = 0.0;
    for (std::int64_t l = 0; l < L; ++l) nc += c[l] * c[l];
    cb_norm[static_cast<std::size_t>(i)] = std::max(std::sqrt(nc), 1e-12);
  }

  std::vector<std::int64_t> idx(static_cast<std::size_t>(B * T * F));
  std::vector<double> vec(static_cast<std::size_t>(L));
  for (std::int64_t n = 0; n < B; ++n)
    for (std::int64_t t = 0; t < T; ++t)
      for (std::int64_t f = 0; f < F; ++f) {
        const double* ev = e.data() + (n * L * T + t) * F + f;
        double ne = 0.0;
        for (std::int64_t l = 0; l < L; ++l) {
          vec[static_cast<std::size_t>(l)] = ev[l * stride];
          ne += ev[l * stride] * ev[l * stride];
        }
        const double na = std::max(std::sqrt(ne), 1e-12);
        double best = 0.0;
        std::int64_t best_i = -1;
        for (std::int64_t i = lo; i < hi; ++i) {
          const double* c = codebook.data() + i * L;
          double dot = 0.0;
          for (std::int64_t l = 0; l < L; ++l) dot += vec[static_cast<std::size_t>(l)] * c[l];
          const double d = 1.0 - dot / (na * cb_norm[static_cast<std::size_t>(i)]);
          if (best_i < 0 || d < best) {  // strict less keeps the lowest index on ties
            best = d;
            best_i = i;
          }
        }
        idx[static_cast<std::size_t>((n * T + t) * F + f)] = best_i;
      }
  return idx;
}

QuantizeResult quantize(const ad::Var& e, const ad::Var& codebook, Partition p) {
  QuantizeResult r;
  r.indices = quantize_indices(e->value, codebook->value, p);
  r.quantized = ad::gather_codebook(codebook, r.indices, e->value.dim(0), e->value.dim(2),
                                    e->value.dim(3));
  return r;
}

VqVaeOutput vqvae_forward(VqVaeModel& model, const ad::Var& features, bool train) {
  VqVaeOutput out;
  out.embeddings = model.encode(features, train);
  auto qs = quantize(out.embeddings, model.codebook(), Partition::kSpeech);
  auto qn = quantize(out.embeddings, model.codebook(), Partition::kNoise);
  auto qf = quantize(out.embeddings, model.codebook(), Partition::kFull);
  out.quant_speech = qs.quantized;
  out.quant_noise = qn.quantized;
  out.quant_full = qf.quantized;
  out.idx_speech = std::move(qs.indices);
  out.idx_noise = std::move(qn.indices);
  out.idx_full = std::move(qf.indices);
  out.decoded_speech = model.decode(ad::straight_through(out.embeddings, out.quant_speech), train);
  out.decoded_noise = model.decode(ad::straight_through(out.embeddings, out.quant_noise), train);
  out.decoded_degraded = model.decode(ad::straight_through(out.embeddings, out.quant_full), train);
  return out;
}

ad::Var vqvae_loss(const VqVaeOutput& out, const ad::Var& f_degraded, const ad::Var& f_speech,
                   const ad::Var& f_noise, double beta, VqVaeLossReport* report) {
  ad::Var rec_s = ad::mse(out.decoded_speech, f_speech);
  ad::Var rec_n = ad::mse(out.decoded_noise, f_noise);
  ad::Var rec_d = ad::mse(out.decoded_degraded, f_degraded);

  ad::Var e_const = ad::detach(out.embeddings);
  ad::Var vq_s = ad::mean_all(ad::cosine_distance_channel(e_const, out.quant_speech));
  ad::Var vq_n = ad::mean_all(ad::cosine_distance_channel(e_const, out.quant_noise));
  ad::Var vq_d = ad::mean_all(ad::cosine_distance_channel(e_const, out.quant_full));

  ad::Var commit_s = ad::mean_all(
      ad::cosine_distance_channel(out.embeddings, ad::detach(out.quant_speech)));
  ad::Var commit_n = ad::mean_all(
      ad::cosine_distance_channel(out.embeddings, ad::detach(out.quant_noise)));
  ad::Var commit_d = ad::mean_all(
      ad::cosine_distance_channel(out.embeddings, ad::detach(out.quant_full)));

  ad::Var rec = ad::add(ad::add(rec_s, rec_n), rec_d);
  ad::Var vq = ad::add(ad::add(vq_s, vq_n), vq_d);
  ad::Var commit = ad::add(ad::add(commit_s, commit_n), commit_d);
  ad::Var total = ad::add(ad::add(rec, vq), ad::scale(commit, beta));

  if (report) {
    report->rec_speech = rec_s->value[0];
    report->rec_noise = rec_n->value[0];
    report->rec_degraded = rec_d->value[0];
    report->vq_speech = vq_s->value[0];
    report->vq_noise = vq_n->value[0];
    report->vq_degraded = vq_d->value[0];
    report->commit_speech = commit_s->value[0];
    report->commit_noise = commit_n->value[0];
    report->commit_degraded = commit_d->value[0];
    report->total = total->value[0];
  }
  return total;
}

datagen::PairedExample sample_paired(const PairedPool& pool, const datagen::MixConfig& mix,
                                     Rng& rng) {
  require_config(!pool.clean.empty() && !pool.noise.empty(), "empty paired pool");
  std::uniform_int_distribution<std::size_t> pick_clean(0, pool.clean.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_noise(0, pool.noise.size() - 1);
  std::uniform_real_distribution<double> snr(mix.snr_low_db, mix.snr_high_db);
  Waveform sp = datagen::sample_segment(*pool.clean[pick_clean(rng)], mix.segment_seconds, rng);
  Waveform nz = datagen::sample_segment(*pool.noise[pick_noise(rng)], mix.segment_seconds, rng);
  return datagen::mix_at_snr(sp, nz, snr(rng), rng, mix);
}

VqVaeTrainResult train_vqvae(const PairedPool& pool, VqVaeModel& model,
                             const VqVaeTrainConfig& cfg, bool resume) {
  require_config(!pool.clean.empty() && !pool.noise.empty(),
                 "train_vqvae: empty paired dataset");
  require_config(cfg.steps >= 0 && cfg.batch >= 1, "train_vqvae: bad step/batch config");

  ad::Adam adam(cfg.lr);
  Rng sampler = make_stream(cfg.seed, "vqvae-sampler");
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
    std::istringstream state(ckpt.meta.at("sampler_state"));
    state >> sampler;
  }

  const auto& stft_cfg = model.config().stft;
  const double eps = model.config().floor_epsilon;

  if (cfg.data_init && start_step == 0 && cfg.steps > 0) {
    // Seed codewords with unit-normalized embeddings of real bins.
    Rng seed_rng = make_stream(cfg.seed, "codebook-init");
    std::vector<Tensor> feats;
    for (int b = 0; b < std::max(2, cfg.batch); ++b) {
      datagen::PairedExample ex = sample_paired(pool, cfg.mix, seed_rng);
      feats.push_back(log_power_tensor(ex.degraded, stft_cfg, eps));
    }
    ad::Var f = ad::constant(batch_features(feats));
    ad::Var e = model.encode(f, /*train=*/false);
    const std::int64_t B = e->value.dim(0), L = e->value.dim(1), T = e->value.dim(2),
                       F = e->value.dim(3);
    const std::int64_t stride = T * F;
    Tensor& cb = model.params().find("codebook")->value;
    std::uniform_int_distribution<std::int64_t> pick(0, B * T * F - 1);
    for (std::int64_t k = 0; k < cb.dim(0); ++k) {
      double norm = 0.0;
      while (norm < 1e-8) {
        const std::int64_t bin = pick(seed_rng);
        const std::int64_t n = bin / (T * F), rem = bin % (T * F);
        const double* src = e->value.data() + n * L * T * F + rem;
        norm = 0.0;
        for (std::int64_t l = 0; l < L; ++l) {
          cb[k * cb.dim(1) + l] = src[l * stride];
          norm += src[l * stride] * src[l * stride];
        }
        norm = std::sqrt(norm);
      }
      for (std::int64_t l = 0; l < cb.dim(1); ++l) cb[k * cb.dim(1) + l] /= norm;
    }
  }

  auto save = [&](int step) {
    if (cfg.checkpoint_path.empty()) return;
    auto tensors = snapshot_params(model.params());
    for (auto& [name, t] : adam.state_tensors(model.params()))
      tensors.emplace_back(name, std::move(t));
    std::ostringstream state;
    state << sampler;
    save_checkpoint(cfg.checkpoint_path, tensors,
                    {{"kind", "vqvae"},
                     {"step", std::to_string(step)},
                     {"adam_steps", std::to_string(adam.steps_taken())},
                     {"sampler_state", state.str()}});
  };

  VqVaeTrainResult result;
  result.last_step = start_step;
  std::set<std::int64_t> used_speech, used_noise;
  const std::int64_t half = model.config().codebook_size / 2;
  int epoch_start = start_step;

  for (int step = start_step; step < cfg.steps; ++step) {
    std::vector<Tensor> fd, fs, fn;
    for (int b = 0; b < cfg.batch; ++b) {
      datagen::PairedExample ex = sample_paired(pool, cfg.mix, sampler);
      fd.push_back(log_power_tensor(ex.degraded, stft_cfg, eps));
      fs.push_back(log_power_tensor(ex.clean, stft_cfg, eps));
      fn.push_back(log_power_tensor(ex.noise, stft_cfg, eps));
    }
    ad::Var f_degraded = ad::constant(batch_features(fd));
    ad::Var f_speech = ad::constant(batch_features(fs));
    ad::Var f_noise = ad::constant(batch_features(fn));

    VqVaeOutput out = vqvae_forward(model, f_degraded, /*train=*/true);
    VqVaeLossReport report;
    ad::Var total = vqvae_loss(out, f_degraded, f_speech, f_noise, model.config().beta, &report);

    model.params().zero_grad();
    ad::backward(total);
    adam.step(model.params());
    result.history.push_back(report);

    for (auto i : out.idx_speech) used_speech.insert(i);
    for (auto i : out.idx_noise) used_noise.insert(i);
    if ((step + 1 - epoch_start) >= cfg.usage_epoch_steps || step + 1 == cfg.steps) {
      CodebookUsage u;
      u.epoch = static_cast<int>(result.usage.size());
      u.speech_fraction = static_cast<double>(used_speech.size()) / static_cast<double>(half);
      u.noise_fraction = static_cast<double>(used_noise.size()) / static_cast<double>(half);
      result.usage.push_back(u);
      used_speech.clear();
      used_noise.clear();
      epoch_start = step + 1;
    }

    if (cfg.checkpoint_interval > 0 && (step + 1) % cfg.checkpoint_interval == 0)
      save(step + 1);
    result.last_step = step + 1;
  }
  save(result.last_step);
  return result;
}

}  // namespace vqse::vq
