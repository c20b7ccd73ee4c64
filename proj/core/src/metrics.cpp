// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "vqse/enhancer.hpp"
#include "vqse/features.hpp"

namespace vqse::metrics {

namespace {

constexpr double kClampDb = 60.0;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Mix at an exact SNR with a deterministic level (degraded peak 0.5), so
// evaluation conditions differ only in SNR.
datagen::PairedExample mix_fixed_level(const Waveform& speech, const Waveform& noise,
                                       double snr_db) {
  require_input(speech.size() == noise.size(), "mix: length mismatch");
  const double rs = datagen::rms(speech), rn = datagen::rms(noise);
  require_input(rs > 0.0 && rn > 0.0, "mix: zero-RMS input");
  const double gain = (rs / rn) * std::pow(10.0, -snr_db / 20.0);

  datagen::PairedExample p;
  p.snr_db = snr_db;
  p.clean = speech;
  p.noise.samples.resize(noise.samples.size());
  p.degraded.samples.resize(noise.samples.size());
  for (std::size_t i = 0; i < noise.samples.size(); ++i) {
    p.noise.samples[i] = gain * noise.samples[i];
    p.degraded.samples[i] = p.clean.samples[i] + p.noise.samples[i];
  }
  const double pk = datagen::peak(p.degraded);
  require_input(pk > 0.0, "mix: silent mixture");
  const double c = 0.5 / pk;
  for (auto& x : p.degraded.samples) x *= c;
  for (auto& x : p.clean.samples) x *= c;
  for (auto& x : p.noise.samples) x *= c;
  return p;
}

}  // namespace

SiSdrResult si_sdr(const Waveform& estimate, const Waveform& reference) {
  require_input(estimate.size() == reference.size(), "si_sdr: length mismatch");
  require_input(estimate.size() > 0, "si_sdr: empty signals");
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    dot += estimate.samples[i] * reference.samples[i];
    ref_energy += reference.samples[i] * reference.samples[i];
  }
  require_input(ref_energy > 0.0, "si_sdr: zero reference");

  const double alpha = dot / ref_energy;
  double target_energy = 0.0, error_energy = 0.0;
  for (std::size_t i = 0; i < reference.samples.size(); ++i) {
    const double t = alpha * reference.samples[i];
    const double e = estimate.samples[i] - t;
    target_energy += t * t;
    error_energy += e * e;
  }

  SiSdrResult r;
  if (target_energy == 0.0) {  // estimate carries nothing of the reference
    r.value_db = -kClampDb;
    return r;
  }
  if (error_energy == 0.0) {
    r.value_db = kClampDb;
    return r;
  }
  r.value_db = std::clamp(10.0 * std::log10(target_energy / error_energy), -kClampDb, kClampDb);
  return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  require_input(a.size() == b.size() && a.size() >= 2, "spearman: need matched series");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  require_input(va > 0.0 && vb > 0.0, "spearman: constant series");
  return cov / std::sqrt(va * vb);
}

Waveform orthogonalize_noise(const Waveform& noise, const Waveform& speech) {
  require_input(noise.size() == speech.size(), "orthogonalize: length mismatch");
  double dot = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < speech.samples.size(); ++i) {
    dot += noise.samples[i] * speech.samples[i];
    energy += speech.samples[i] * speech.samples[i];
  }
  require_input(energy > 0.0, "orthogonalize: zero speech");
  const double alpha = dot / energy;
  Waveform out;
  out.samples.resize(noise.samples.size());
  for (std::size_t i = 0; i < noise.samples.size(); ++i)
    out.samples[i] = noise.samples[i] - alpha * speech.samples[i];
  return out;
}

MarginCurve margin_diagnostic(vq::VqVaeModel& frozen_vqvae, const vq::PairedPool& validation,
                              const MarginDiagConfig& cfg) {
  require_config(!validation.clean.empty() && !validation.noise.empty(),
                 "margin_diagnostic: empty validation set");
  const auto& stft_cfg = frozen_vqvae.config().stft;
  const double eps = frozen_vqvae.config().floor_epsilon;

  MarginCurve curve;
  Rng rng = make_stream(cfg.seed, "margin-diag");
  for (double snr : cfg.snr_grid_db) {
    double sum = 0.0, sumsq = 0.0;
    std::int64_t count = 0;
    for (int i = 0; i < cfg.mixtures_per_snr; ++i) {
      std::uniform_int_distribution<std::size_t> pc(0, validation.clean.size() - 1);
      std::uniform_int_distribution<std::size_t> pn(0, validation.noise.size() - 1);
      Waveform sp = datagen::sample_segment(*validation.clean[pc(rng)], cfg.segment_seconds, rng);
      Waveform nz = datagen::sample_segment(*validation.noise[pn(rng)], cfg.segment_seconds, rng);
      datagen::PairedExample ex = mix_fixed_level(sp, nz, snr);

      Tensor feats = log_power_tensor(ex.degraded, stft_cfg, eps);
      Tensor batch({1, 1, feats.dim(0), feats.dim(1)});
      std::copy_n(feats.data(), feats.numel(), batch.data());
      ad::Var e = frozen_vqvae.encode(ad::constant(std::move(batch)), /*train=*/false);
      auto qs = vq::quantize(e, frozen_vqvae.codebook(), vq::Partition::kSpeech);
      auto qn = vq::quantize(e, frozen_vqvae.codebook(), vq::Partition::kNoise);
      Tensor d_pos = ad::tensor_cosine_distance_channel(e->value, qs.quantized->value);
      Tensor d_neg = ad::tensor_cosine_distance_channel(e->value, qn.quantized->value);
      for (std::int64_t j = 0; j < d_pos.numel(); ++j) {
        const double m = d_pos[j] - d_neg[j];
        sum += m;
        sumsq += m * m;
        ++count;
      }
    }
    const double mean = sum / static_cast<double>(count);
    curve.snr_bins_db.push_back(snr);
    curve.mean_margin.push_back(mean);
    curve.std_margin.push_back(std::sqrt(std::max(0.0, sumsq / static_cast<double>(count) - mean * mean)));
    curve.count.push_back(count);
  }
  return curve;
}

void write_margin_csv(const std::string& path, const MarginCurve& curve) {
  std::ofstream out(path, std::ios::trunc);
  require_input(out.good(), "cannot write margin csv: " + path);
  out << "snr_db,mean,std,count\n";
  for (std::size_t i = 0; i < curve.snr_bins_db.size(); ++i)
    out << fmt(curve.snr_bins_db[i]) << ',' << fmt(curve.mean_margin[i]) << ','
        << fmt(curve.std_margin[i]) << ',' << curve.count[i] << '\n';
}

EvalReport eval_report(const enh::EnhancerModel& model, const TestPools& pools,
                       const EvalConfig& cfg) {
  require_config(!pools.clean.empty(), "eval_report: empty clean test set");
  EvalReport report;
  Rng rng = make_stream(cfg.seed, "eval");

  struct Split {
    const char* name;
    const std::vector<const Waveform*>* noise;
  };
  const Split splits[] = {{"seen", &pools.noise_seen}, {"unseen", &pools.noise_unseen}};

  for (double snr : cfg.snr_grid_db) {
    for (const auto& split : splits) {
      EvalRow row;
      row.snr_db = snr;
      row.split = split.name;
      if (split.noise->empty()) {
        report.rows.push_back(row);  // missing cell, count 0
        continue;
      }
      double acc_deg = 0.0, acc_enh = 0.0;
      for (int i = 0; i < cfg.mixtures_per_condition; ++i) {
        std::uniform_int_distribution<std::size_t> pc(0, pools.clean.size() - 1);
        std::uniform_int_distribution<std::size_t> pn(0, split.noise->size() - 1);
        Waveform sp = datagen::sample_segment(*pools.clean[pc(rng)], cfg.segment_seconds, rng);
        Waveform nz = datagen::sample_segment(*(*split.noise)[pn(rng)], cfg.segment_seconds, rng);
        if (cfg.orthogonalize) nz = orthogonalize_noise(nz, sp);
        datagen::PairedExample ex = mix_fixed_level(sp, nz, snr);
        acc_deg += si_sdr(ex.degraded, ex.clean).value_db;
        acc_enh += si_sdr(enh::enhance(ex.degraded, model), ex.clean).value_db;
      }
      row.count = cfg.mixtures_per_condition;
      row.si_sdr_degraded = acc_deg / cfg.mixtures_per_condition;
      row.si_sdr_enhanced = acc_enh / cfg.mixtures_per_condition;
      row.improvement = row.si_sdr_enhanced - row.si_sdr_degraded;
      report.rows.push_back(row);
    }
  }
  return report;
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  require_input(out.good(), "cannot write eval csv: " + path);
  out << "snr_db,split,si_sdr_degraded,si_sdr_enhanced,improvement,count\n";
  for (const auto& r : report.rows) {
    out << fmt(r.snr_db) << ',' << r.split << ',';
    if (r.count > 0)
      out << fmt(r.si_sdr_degraded) << ',' << fmt(r.si_sdr_enhanced) << ','
          << fmt(r.improvement) << ',' << r.count << '\n';
    else
      out << ",,," << r.count << '\n';
  }
}

std::string render_eval_table(const EvalReport& report) {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof(line), "%8s  %-7s  %12s  %12s  %12s  %6s\n", "snr_db", "split",
                "deg_si_sdr", "enh_si_sdr", "improvement", "count");
  out += line;
  for (const auto& r : report.rows) {
    if (r.count > 0)
      std::snprintf(line, sizeof(line), "%8.1f  %-7s  %12.3f  %12.3f  %12.3f  %6lld\n", r.snr_db,
                    r.split.c_str(), r.si_sdr_degraded, r.si_sdr_enhanced, r.improvement,
                    static_cast<long long>(r.count));
    else
      std::snprintf(line, sizeof(line), "%8.1f  %-7s  %12s  %12s  %12s  %6d\n", r.snr_db,
                    r.split.c_str(), "missing", "missing", "missing", 0);
    out += line;
  }
  return out;
}

}  // namespace vqse::metrics
