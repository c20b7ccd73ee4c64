// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/enhancer.hpp"

#include <doctest.h>

#include <cmath>

#include "vqse/features.hpp"
#include "vqse/metrics.hpp"

using namespace vqse;
using namespace vqse::enh;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> gauss(0.0, scale);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = gauss(rng);
  return t;
}

EnhancerConfig tiny_enh_config() {
  EnhancerConfig cfg;
  cfg.input_proj = 12;
  cfg.hidden = 12;
  cfg.gru_layers = 2;
  cfg.stft.window_length = 64;
  cfg.stft.hop_length = 32;
  cfg.stft.fft_size = 64;
  return cfg;
}

vq::VqVaeConfig tiny_vq_config() {
  vq::VqVaeConfig cfg;
  cfg.codebook_size = 8;
  cfg.embedding_dim = 4;
  cfg.enc_channels1 = 6;
  cfg.enc_channels2 = 8;
  cfg.stft.window_length = 64;
  cfg.stft.hop_length = 32;
  cfg.stft.fft_size = 64;
  return cfg;
}

Waveform tone(double freq, std::int64_t n, double amp) {
  Waveform w;
  w.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    w.samples[static_cast<std::size_t>(i)] =
        amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / kSampleRate);
  return w;
}

datagen::PairedExample make_pair(double snr_db, std::uint64_t seed) {
  Rng rng(seed);
  Waveform sp = tone(220.0, 4000, 0.4);
  std::normal_distribution<double> gauss(0.0, 0.1);
  Waveform nz;
  nz.samples.resize(4000);
  for (auto& x : nz.samples) x = gauss(rng);
  datagen::MixConfig mc;
  return datagen::mix_at_snr(sp, nz, snr_db, rng, mc);
}

// Positive/negative vectors at controlled cosine distances from a unit
// anchor along the first axis.
void fill_bin(Tensor& t, std::int64_t bin, std::int64_t channels, const double* v) {
  const std::int64_t T = t.dim(2), F = t.dim(3);
  const std::int64_t tt = bin / F, ff = bin % F;
  for (std::int64_t c = 0; c < channels; ++c) t.at(0, c, tt, ff) = v[c];
}

}  // namespace

TEST_SUITE("enhancer") {

TEST_CASE("mode table") {
  CHECK(parse_mode("Baseline") == TrainMode::kBaseline);
  CHECK(parse_mode("Paired-Embedding") == TrainMode::kPairedEmbedding);
  CHECK(parse_mode("paired_feature") == TrainMode::kPairedFeature);
  CHECK(parse_mode("UnpairedEmbedding") == TrainMode::kUnpairedEmbedding);
  CHECK(parse_mode("Unpaired-Feature") == TrainMode::kUnpairedFeature);
  CHECK_THROWS_AS(parse_mode("nope"), ConfigError);

  CHECK(mode_name(TrainMode::kPairedEmbedding) == "Paired-Embedding");
  CHECK(!mode_uses_unpaired(TrainMode::kPairedEmbedding));
  CHECK(mode_uses_unpaired(TrainMode::kUnpairedFeature));
  CHECK(mode_uses_embedding_loss(TrainMode::kUnpairedEmbedding));
  CHECK(mode_uses_feature_loss(TrainMode::kPairedFeature));
  CHECK(!mode_uses_embedding_loss(TrainMode::kBaseline));
}

TEST_CASE("gains live in [0,1] and are deterministic") {
  Rng rng(41);
  EnhancerModel model(tiny_enh_config(), rng);
  Tensor feats = random_tensor({7, 33}, rng, 2.0);
  Tensor g1 = model.estimate_gain(feats);
  Tensor g2 = model.estimate_gain(feats);
  REQUIRE(g1.shape() == feats.shape());
  for (std::int64_t i = 0; i < g1.numel(); ++i) {
    CHECK(g1[i] >= 0.0);
    CHECK(g1[i] <= 1.0);
    CHECK(g1[i] == g2[i]);
  }
}

TEST_CASE("gain estimation is causal") {
  Rng rng(42);
  EnhancerModel model(tiny_enh_config(), rng);
  Tensor feats = random_tensor({9, 33}, rng);
  Tensor base = model.estimate_gain(feats);

  Tensor perturbed = feats;
  for (std::int64_t f = 0; f < 33; ++f) perturbed.at(6, f) += 3.0;  // frame 6
  Tensor got = model.estimate_gain(perturbed);
  for (std::int64_t t = 0; t < 6; ++t)
    for (std::int64_t f = 0; f < 33; ++f)
      CHECK(got.at(t, f) == base.at(t, f));
  // and the perturbation does reach later frames
  double diff = 0.0;
  for (std::int64_t t = 6; t < 9; ++t)
    for (std::int64_t f = 0; f < 33; ++f) diff += std::abs(got.at(t, f) - base.at(t, f));
  CHECK(diff > 0.0);
}

TEST_CASE("enhance with pinned gains") {
  Rng rng(43);
  EnhancerModel model(tiny_enh_config(), rng);
  Waveform w = tone(440.0, 4000, 0.3);

  SUBCASE("unit gain reproduces the degraded input") {
    model.set_constant_gain_logit(100.0);  // sigmoid -> 1
    Waveform out = enhance(w, model);
    REQUIRE(out.size() == w.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      CHECK(std::abs(out.samples[i] - w.samples[i]) < 1e-6);
  }

  SUBCASE("zero gain silences the covered region") {
    model.set_constant_gain_logit(-100.0);  // sigmoid -> 0
    Waveform out = enhance(w, model);
    REQUIRE(out.size() == w.size());
    double covered_energy = 0.0;
    for (std::size_t i = 64; i + 64 < out.samples.size(); ++i)
      covered_energy += out.samples[i] * out.samples[i];
    CHECK(covered_energy < 1e-12);
  }
}

TEST_CASE("supervised loss examples") {
  Rng rng(44);
  Tensor a = random_tensor({3, 5}, rng);
  ad::Var va = ad::constant(a);
  CHECK(supervised_loss(va, ad::constant(a))->value[0] == 0.0);

  Tensor b = a;
  for (std::int64_t i = 0; i < b.numel(); ++i) b[i] += 1.0;
  CHECK(supervised_loss(ad::constant(b), va)->value[0] == doctest::Approx(1.0).epsilon(1e-12));

  // independent recomputation
  Tensor c = random_tensor({3, 5}, rng);
  double expect = 0.0;
  for (std::int64_t i = 0; i < c.numel(); ++i)
    expect += (a[i] - c[i]) * (a[i] - c[i]) / static_cast<double>(c.numel());
  CHECK(supervised_loss(va, ad::constant(c))->value[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("embedding triplet loss analytic cases") {
  const double m = 0.2;
  const std::int64_t L = 2;

  // anchor (1,0); positive at distance 0; negative at distance m
  Tensor e({1, L, 1, 1}), qs({1, L, 1, 1}), qn({1, L, 1, 1});
  const double anchor[2] = {1.0, 0.0};
  const double pos[2] = {2.0, 0.0};                      // d = 0
  const double neg_m[2] = {0.8, 0.6};                    // d = 1 - 0.8 = 0.2
  fill_bin(e, 0, L, anchor);
  fill_bin(qs, 0, L, pos);
  fill_bin(qn, 0, L, neg_m);
  CHECK(embedding_triplet_loss(ad::constant(e), ad::constant(qs), ad::constant(qn), m)->value[0] ==
        doctest::Approx(0.0).epsilon(1e-12));

  // equal distances -> loss m
  CHECK(embedding_triplet_loss(ad::constant(e), ad::constant(qs), ad::constant(qs), m)->value[0] ==
        doctest::Approx(m).epsilon(1e-12));

  // d_pos = 0.9, d_neg = 0.1 -> hinge(0.9 - 0.1 + 0.2) = 1.0
  const double pos_09[2] = {0.1, std::sqrt(1.0 - 0.01)};  // cos = 0.1
  const double neg_01[2] = {0.9, std::sqrt(1.0 - 0.81)};  // cos = 0.9
  Tensor qs2({1, L, 1, 1}), qn2({1, L, 1, 1});
  fill_bin(qs2, 0, L, pos_09);
  fill_bin(qn2, 0, L, neg_01);
  CHECK(embedding_triplet_loss(ad::constant(e), ad::constant(qs2), ad::constant(qn2), m)->value[0] ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("embedding triplet hinge nonnegativity on random triples") {
  Rng rng(45);
  for (int i = 0; i < 200; ++i) {
    Tensor e = random_tensor({1, 4, 2, 2}, rng);
    Tensor qs = random_tensor({1, 4, 2, 2}, rng);
    Tensor qn = random_tensor({1, 4, 2, 2}, rng);
    const double loss =
        embedding_triplet_loss(ad::constant(e), ad::constant(qs), ad::constant(qn), 0.2)->value[0];
    CHECK(loss >= 0.0);
  }
}

TEST_CASE("feature triplet loss analytic cases") {
  const double m = 0.2;
  Rng rng(46);

  // anchor == decoded speech -> d_pos = 0 per bin; craft negative via scaling
  Tensor anchor = random_tensor({1, 1, 4, 5}, rng);
  for (std::int64_t i = 0; i < anchor.numel(); ++i) anchor[i] = std::abs(anchor[i]) + 0.5;
  Tensor neg = anchor;
  for (std::int64_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];  // patch distance 2
  const double loss0 = feature_triplet_loss(ad::constant(anchor), ad::constant(anchor),
                                            ad::constant(neg), m)->value[0];
  CHECK(loss0 == doctest::Approx(0.0).epsilon(1e-12));  // 0 - 2 + 0.2 < 0

  // identical positive and negative -> loss m
  const double loss_m = feature_triplet_loss(ad::constant(anchor), ad::constant(neg),
                                             ad::constant(neg), m)->value[0];
  CHECK(loss_m == doctest::Approx(m).epsilon(1e-12));

  // random triple matches a hand recomputation through the public op
  Tensor fs = random_tensor({1, 1, 4, 5}, rng);
  Tensor fn = random_tensor({1, 1, 4, 5}, rng);
  ad::Var dp = ad::patch_cosine_distance(ad::constant(anchor), ad::constant(fs));
  ad::Var dn = ad::patch_cosine_distance(ad::constant(anchor), ad::constant(fn));
  double expect = 0.0;
  for (std::int64_t i = 0; i < dp->value.numel(); ++i)
    expect += std::max(dp->value[i] - dn->value[i] + m, 0.0);
  expect /= static_cast<double>(dp->value.numel());
  const double got = feature_triplet_loss(ad::constant(anchor), ad::constant(fs),
                                          ad::constant(fn), m)->value[0];
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("semi-supervised step: mode semantics and the frozen contract") {
  Rng vq_rng(47);
  vq::VqVaeModel vqvae(tiny_vq_config(), vq_rng);
  vqvae.freeze();
  const std::uint64_t digest_before = vqvae.params().value_digest();

  std::vector<datagen::PairedExample> paired = {make_pair(5.0, 1), make_pair(0.0, 2)};
  std::vector<Waveform> unpaired = {make_pair(10.0, 3).degraded};

  auto run_mode = [&](TrainMode mode, bool with_unpaired) {
    Rng rng(48);
    EnhancerModel model(tiny_enh_config(), rng);
    ad::Adam adam(1e-4);
    SemiSupConfig cfg;
    cfg.mode = mode;
    return semi_supervised_step(paired, with_unpaired ? unpaired : std::vector<Waveform>{},
                                model, vqvae, adam, cfg);
  };

  SUBCASE("baseline computes exactly the supervised term") {
    StepReport rep = run_mode(TrainMode::kBaseline, false);
    CHECK(rep.total == rep.supervised);
    CHECK(!rep.embedding_loss.has_value());
    CHECK(!rep.feature_loss.has_value());
    CHECK(!rep.mean_margin.has_value());
  }

  SUBCASE("paired-embedding computes the embedding term only") {
    StepReport rep = run_mode(TrainMode::kPairedEmbedding, false);
    CHECK(rep.embedding_loss.has_value());
    CHECK(!rep.feature_loss.has_value());
    CHECK(rep.mean_margin.has_value());
    CHECK(*rep.embedding_loss >= 0.0);
  }

  SUBCASE("paired-feature computes the feature term only") {
    StepReport rep = run_mode(TrainMode::kPairedFeature, false);
    CHECK(!rep.embedding_loss.has_value());
    CHECK(rep.feature_loss.has_value());
    CHECK(*rep.feature_loss >= 0.0);
  }

  SUBCASE("unpaired modes demand an unpaired batch") {
    CHECK_THROWS_AS(run_mode(TrainMode::kUnpairedEmbedding, false), ConfigError);
    StepReport rep = run_mode(TrainMode::kUnpairedEmbedding, true);
    CHECK(rep.embedding_loss.has_value());
  }

  SUBCASE("the vqvae is bit-unchanged by steps in every mode") {
    run_mode(TrainMode::kBaseline, false);
    run_mode(TrainMode::kPairedEmbedding, false);
    run_mode(TrainMode::kPairedFeature, false);
    run_mode(TrainMode::kUnpairedEmbedding, true);
    run_mode(TrainMode::kUnpairedFeature, true);
    CHECK(vqvae.params().value_digest() == digest_before);
  }

  SUBCASE("an unfrozen vqvae is rejected") {
    Rng rng2(49);
    vq::VqVaeModel live(tiny_vq_config(), rng2);
    EnhancerModel model(tiny_enh_config(), rng2);
    ad::Adam adam(1e-4);
    SemiSupConfig cfg;
    CHECK_THROWS_AS(semi_supervised_step(paired, {}, model, live, adam, cfg), ConfigError);
  }
}

TEST_CASE("lambda_u = 0 reproduces baseline updates bit-exactly") {
  Rng vq_rng(50);
  vq::VqVaeModel vqvae(tiny_vq_config(), vq_rng);
  vqvae.freeze();
  std::vector<datagen::PairedExample> paired = {make_pair(5.0, 4)};
  std::vector<Waveform> unpaired = {make_pair(10.0, 5).degraded};

  auto run = [&](TrainMode mode, double lambda_u, bool with_unpaired) {
    Rng rng(51);
    EnhancerModel model(tiny_enh_config(), rng);
    ad::Adam adam(1e-3);
    SemiSupConfig cfg;
    cfg.mode = mode;
    cfg.lambda_u = lambda_u;
    semi_supervised_step(paired, with_unpaired ? unpaired : std::vector<Waveform>{}, model,
                         vqvae, adam, cfg);
    return model.params().value_digest();
  };

  CHECK(run(TrainMode::kBaseline, 0.1, false) == run(TrainMode::kUnpairedEmbedding, 0.0, true));
}

TEST_CASE("unsupervised gradients reach the enhancer but not the vqvae") {
  Rng vq_rng(52);
  vq::VqVaeModel vqvae(tiny_vq_config(), vq_rng);
  vqvae.freeze();
  Rng rng(53);
  EnhancerModel model(tiny_enh_config(), rng);
  std::vector<datagen::PairedExample> paired = {make_pair(0.0, 6)};

  ad::Adam adam(1e-4);
  SemiSupConfig cfg;
  cfg.mode = TrainMode::kPairedEmbedding;
  cfg.lambda_u = 1.0;
  semi_supervised_step(paired, {}, model, vqvae, adam, cfg);

  double grad_norm = 0.0;
  for (const auto& p : model.params().params())
    if (p.var->grad.numel() > 0)
      for (std::int64_t i = 0; i < p.var->grad.numel(); ++i)
        grad_norm += p.var->grad[i] * p.var->grad[i];
  CHECK(grad_norm > 0.0);

  for (const auto& p : vqvae.params().params()) CHECK(p.var->grad.numel() == 0);
}

TEST_CASE("train_se validates pools per mode and records history") {
  Rng vq_rng(54);
  vq::VqVaeModel vqvae(tiny_vq_config(), vq_rng);
  vqvae.freeze();

  Waveform clean_src = tone(200.0, 16000, 0.4);
  Rng nrng(55);
  std::normal_distribution<double> gauss(0.0, 0.1);
  Waveform noise_src;
  noise_src.samples.resize(16000);
  for (auto& x : noise_src.samples) x = gauss(nrng);

  SePools pools;
  pools.paired_train.clean = {&clean_src};
  pools.paired_train.noise = {&noise_src};
  pools.paired_val.clean = {&clean_src};
  pools.paired_val.noise = {&noise_src};

  SemiSupConfig cfg;
  cfg.mode = TrainMode::kUnpairedEmbedding;
  cfg.steps = 2;
  cfg.paired_batch = 1;
  cfg.unpaired_batch = 1;
  cfg.val_interval = 0;
  cfg.val_mixtures = 0;
  cfg.checkpoint_interval = 0;
  cfg.mix.segment_seconds = 0.25;

  Rng rng(56);
  EnhancerModel model(tiny_enh_config(), rng);
  CHECK_THROWS_AS(train_se(pools, model, vqvae, cfg), ConfigError);  // no unpaired data

  pools.unpaired = {&noise_src};
  cfg.mode = TrainMode::kBaseline;
  cfg.val_interval = 2;
  cfg.val_mixtures = 2;
  TrainSeResult result = train_se(pools, model, vqvae, cfg);
  REQUIRE(result.history.size() == 2);
  CHECK(result.history[0].step == 1);
  CHECK(!result.history[0].val_si_sdr.has_value());
  CHECK(result.history[1].val_si_sdr.has_value());
}

}  // TEST_SUITE
