// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vqse/dsp.hpp"

namespace fs = std::filesystem;

namespace vqse::datagen {

namespace {
constexpr double kPi = 3.14159265358979323846;

std::int64_t seconds_to_samples(double seconds) {
  return std::llround(seconds * kSampleRate);
}
}  // namespace

double rms(const Waveform& w) {
  if (w.samples.empty()) return 0.0;
  double acc = 0.0;
  for (double x : w.samples) acc += x * x;
  return std::sqrt(acc / static_cast<double>(w.samples.size()));
}

double peak(const Waveform& w) {
  double p = 0.0;
  for (double x : w.samples) p = std::max(p, std::abs(x));
  return p;
}

Waveform sample_segment(const Waveform& src, double seconds, Rng& rng) {
  const std::int64_t n = seconds_to_samples(seconds);
  require_input(n > 0, "segment length must be positive");
  require_input(src.size() >= n, "source shorter than requested segment");
  std::uniform_int_distribution<std::int64_t> offset(0, src.size() - n);
  const std::int64_t o = offset(rng);
  Waveform out;
  out.samples.assign(src.samples.begin() + o, src.samples.begin() + o + n);
  return out;
}

PairedExample mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db,
                         Rng& rng, const MixConfig& cfg) {
  require_input(speech.size() == noise.size(), "speech and noise lengths differ");
  const double rs = rms(speech), rn = rms(noise);
  require_input(rs > 0.0 && rn > 0.0, "zero-RMS input to mix_at_snr");

  const double gain = (rs / rn) * std::pow(10.0, -snr_db / 20.0);
  PairedExample p;
  p.snr_db = snr_db;
  p.clean = speech;
  p.noise.samples.resize(noise.samples.size());
  for (std::size_t i = 0; i < noise.samples.size(); ++i)
    p.noise.samples[i] = gain * noise.samples[i];
  p.degraded.samples.resize(speech.samples.size());
  for (std::size_t i = 0; i < speech.samples.size(); ++i)
    p.degraded.samples[i] = p.clean.samples[i] + p.noise.samples[i];

  return scale_dynamic_range(p, cfg.dynamic_range_db, rng);
}

PairedExample scale_dynamic_range(const PairedExample& p, double dynamic_range_db, Rng& rng) {
  require_input(dynamic_range_db > 0.0, "dynamic range must be positive");
  const double pk = peak(p.degraded);
  require_input(pk > 0.0, "silent degraded signal");
  std::uniform_real_distribution<double> level(-dynamic_range_db, 0.0);
  const double c = std::pow(10.0, level(rng) / 20.0) / pk;

  PairedExample out;
  out.snr_db = p.snr_db;
  auto scale = [c](const Waveform& w) {
    Waveform s;
    s.samples.resize(w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) s.samples[i] = c * w.samples[i];
    return s;
  };
  out.degraded = scale(p.degraded);
  out.clean = scale(p.clean);
  out.noise = scale(p.noise);
  return out;
}

Waveform synth_harmonic_tone(double f0_hz, double seconds, Rng& rng) {
  const std::int64_t n = seconds_to_samples(seconds);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double am_freq = 2.0 + 6.0 * unit(rng);
  const double am_depth = 0.3 + 0.5 * unit(rng);
  const double am_phase = 2.0 * kPi * unit(rng);
  const int max_harm = std::min<int>(12, static_cast<int>(7600.0 / f0_hz));
  std::vector<double> phases(static_cast<std::size_t>(max_harm));
  for (auto& ph : phases) ph = 2.0 * kPi * unit(rng);

  Waveform w;
  w.samples.resize(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kSampleRate;
    double s = 0.0;
    for (int h = 1; h <= max_harm; ++h)
      s += std::sin(2.0 * kPi * f0_hz * h * t + phases[static_cast<std::size_t>(h - 1)]) / h;
    const double am = (1.0 + am_depth * std::sin(2.0 * kPi * am_freq * t + am_phase)) / (1.0 + am_depth);
    w.samples[static_cast<std::size_t>(i)] = s * am;
  }
  const double pk = peak(w);
  for (auto& x : w.samples) x *= 0.5 / pk;
  return w;
}

Waveform synth_band_noise(double lo_hz, double hi_hz, double seconds, Rng& rng) {
  const std::int64_t n = seconds_to_samples(seconds);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> white(static_cast<std::size_t>(n));
  for (auto& x : white) x = gauss(rng);

  auto spec = dsp::rfft(white, static_cast<int>(n));
  const double bin_hz = static_cast<double>(kSampleRate) / static_cast<double>(n);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(k) * bin_hz;
    if (f < lo_hz || f > hi_hz) spec[k] = 0.0;
  }
  Waveform w;
  w.samples = dsp::irfft(spec, static_cast<int>(n));
  const double r = rms(w);
  if (r > 0.0)
    for (auto& x : w.samples) x *= 0.1 / r;
  return w;
}

std::pair<double, double> noise_band(int cls, int num_classes) {
  require_input(num_classes > 0 && cls >= 0 && cls < num_classes, "bad noise class");
  const double lo_edge = 100.0, hi_edge = 7800.0;
  const double ratio = std::pow(hi_edge / lo_edge, 1.0 / num_classes);
  const double lo = lo_edge * std::pow(ratio, cls);
  const double hi = std::min(hi_edge, lo * ratio * 1.2);  // slight band overlap
  return {lo, hi};
}

ToyCorpus toy_corpus(Rng& rng, const ToyCorpusSpec& spec) {
  require_input(spec.num_noise_classes > 0, "need at least one noise class");
  ToyCorpus c;
  std::uniform_real_distribution<double> f0(100.0, 300.0);

  auto gen_clean = [&](int count, std::vector<Waveform>& out, std::vector<double>& f0s) {
    for (int i = 0; i < count; ++i) {
      const double f = f0(rng);
      f0s.push_back(f);
      out.push_back(synth_harmonic_tone(f, spec.clean_seconds, rng));
    }
  };
  gen_clean(spec.clean_train, c.clean_train, c.clean_train_f0);
  gen_clean(spec.clean_val, c.clean_val, c.clean_val_f0);
  gen_clean(spec.clean_test, c.clean_test, c.clean_test_f0);

  auto gen_noise = [&](int per_class, std::vector<std::vector<Waveform>>& out) {
    out.resize(static_cast<std::size_t>(spec.num_noise_classes));
    for (int k = 0; k < spec.num_noise_classes; ++k) {
      auto [lo, hi] = noise_band(k, spec.num_noise_classes);
      for (int i = 0; i < per_class; ++i)
        out[static_cast<std::size_t>(k)].push_back(synth_band_noise(lo, hi, spec.noise_seconds, rng));
    }
  };
  gen_noise(spec.noise_train_per_class, c.noise_train);
  gen_noise(spec.noise_val_per_class, c.noise_val);
  gen_noise(spec.noise_test_per_class, c.noise_test);

  // Unpaired items come from fresh held-out sources so they emulate a
  // distinct real-world distribution; only seen classes contribute.
  std::vector<int> seen;
  for (int k = 0; k < spec.num_noise_classes; ++k)
    if (std::find(spec.unseen_classes.begin(), spec.unseen_classes.end(), k) ==
        spec.unseen_classes.end())
      seen.push_back(k);
  require_input(!seen.empty(), "all noise classes marked unseen");

  std::uniform_real_distribution<double> snr(spec.unpaired_snr_center_db - spec.unpaired_snr_halfwidth_db,
                                             spec.unpaired_snr_center_db + spec.unpaired_snr_halfwidth_db);
  std::uniform_int_distribution<std::size_t> pick_seen(0, seen.size() - 1);
  MixConfig mix_cfg;
  for (int i = 0; i < spec.unpaired_count; ++i) {
    Waveform sp = synth_harmonic_tone(f0(rng), spec.unpaired_seconds, rng);
    auto [lo, hi] = noise_band(seen[pick_seen(rng)], spec.num_noise_classes);
    Waveform nz = synth_band_noise(lo, hi, spec.unpaired_seconds, rng);
    const double s = snr(rng);
    PairedExample p = mix_at_snr(sp, nz, s, rng, mix_cfg);
    c.unpaired.push_back(std::move(p.degraded));  // references discarded
    c.unpaired_true_snr_db.push_back(s);
  }
  return c;
}

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  require_config(in.good(), "cannot open manifest: " + manifest_path);
  const fs::path base = fs::absolute(fs::path(manifest_path)).parent_path();
  std::vector<ManifestEntry> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    require_config(tab != std::string::npos, "manifest row missing tab separator: " + line);
    ManifestEntry e;
    fs::path p(line.substr(0, tab));
    e.path = (p.is_absolute() ? p : base / p).lexically_normal().string();
    e.role = line.substr(tab + 1);
    require_config(e.role == "clean" || e.role == "noise" || e.role == "unpaired",
                   "unknown manifest role: " + e.role);
    rows.push_back(std::move(e));
  }
  return rows;
}

void write_manifest(const std::string& manifest_path, const std::vector<ManifestEntry>& rows) {
  const fs::path base = fs::absolute(fs::path(manifest_path)).parent_path();
  std::string tmp = manifest_path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    require_config(out.good(), "cannot write manifest: " + manifest_path);
    for (const auto& e : rows) {
      fs::path p(e.path);
      std::string rel = p.is_absolute() ? fs::relative(p, base).string() : e.path;
      out << rel << '\t' << e.role << '\n';
    }
  }
  fs::rename(tmp, manifest_path);
}

std::optional<int> noise_class_of(const std::string& path) {
  const std::string name = fs::path(path).filename().string();
  auto pos = name.find("_c");
  while (pos != std::string::npos) {
    std::size_t i = pos + 2;
    std::size_t j = i;
    while (j < name.size() && std::isdigit(static_cast<unsigned char>(name[j]))) ++j;
    if (j > i && j < name.size() && name[j] == '_')
      return std::stoi(name.substr(i, j - i));
    pos = name.find("_c", pos + 1);
  }
  return std::nullopt;
}

void write_toy_corpus(const ToyCorpus& corpus, const ToyCorpusSpec& spec, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "clean");
  fs::create_directories(root / "noise");
  fs::create_directories(root / "unpaired");

  auto is_unseen = [&](int cls) {
    return std::find(spec.unseen_classes.begin(), spec.unseen_classes.end(), cls) !=
           spec.unseen_classes.end();
  };

  char buf[256];
  std::vector<ManifestEntry> train, val, test;

  auto write_clean = [&](const std::vector<Waveform>& items, const char* tag,
                         std::vector<ManifestEntry>& manifest) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "clean/clean_%s_%03zu.wav", tag, i);
      write_wav((root / buf).string(), items[i]);
      manifest.push_back({(root / buf).string(), "clean"});
    }
  };
  write_clean(corpus.clean_train, "train", train);
  write_clean(corpus.clean_val, "val", val);
  write_clean(corpus.clean_test, "test", test);

  auto write_noise = [&](const std::vector<std::vector<Waveform>>& items, const char* tag,
                         std::vector<ManifestEntry>* manifest, bool include_unseen) {
    for (std::size_t k = 0; k < items.size(); ++k) {
      for (std::size_t i = 0; i < items[k].size(); ++i) {
        std::snprintf(buf, sizeof(buf), "noise/noise_%s_c%zu_%03zu.wav", tag, k, i);
        write_wav((root / buf).string(), items[k][i]);
        if (manifest && (include_unseen || !is_unseen(static_cast<int>(k))))
          manifest->push_back({(root / buf).string(), "noise"});
      }
    }
  };
  write_noise(corpus.noise_train, "train", &train, false);
  write_noise(corpus.noise_val, "val", &val, false);
  write_noise(corpus.noise_test, "test", &test, true);

  for (std::size_t i = 0; i < corpus.unpaired.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "unpaired/unpaired_%03zu.wav", i);
    write_wav((root / buf).string(), corpus.unpaired[i]);
    train.push_back({(root / buf).string(), "unpaired"});
  }

  write_manifest((root / "train.tsv").string(), train);
  write_manifest((root / "val.tsv").string(), val);
  write_manifest((root / "test.tsv").string(), test);
}

const Waveform& WaveStore::get(const std::string& path) {
  auto it = cache_.find(path);
  if (it == cache_.end()) it = cache_.emplace(path, read_wav(path)).first;
  return it->second;
}

}  // namespace vqse::datagen
