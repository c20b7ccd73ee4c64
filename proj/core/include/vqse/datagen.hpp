// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef VQSE_DATAGEN_HPP_
#define VQSE_DATAGEN_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vqse/rng.hpp"
#include "vqse/wav.hpp"

namespace vqse::datagen {

// degraded == clean + noise samplewise (within 1e-9) at all times.
struct PairedExample {
  Waveform degraded;
  Waveform clean;
  Waveform noise;
  double snr_db = 0.0;
};

struct UnpairedExample {
  Waveform degraded;
};

struct MixConfig {
  double snr_low_db = -10.0;
  double snr_high_db = 30.0;  // exclusive
  double dynamic_range_db = 40.0;
  double segment_seconds = 1.0;
  std::uint64_t rng_seed = 0;
};

double rms(const Waveform& w);
double peak(const Waveform& w);

// Contiguous slice of exactly seconds*sample_rate samples; the offset is
// uniform over the valid range.
Waveform sample_segment(const Waveform& src, double seconds, Rng& rng);

// Scales the noise by (rms(speech)/rms(noise)) * 10^(-snr_db/20), adds it
// to the untouched speech, then applies scale_dynamic_range jointly.
PairedExample mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db,
                         Rng& rng, const MixConfig& cfg);

// Multiplies all three signals by 10^(level/20)/peak(|degraded|) with
// level ~ Uniform[-dynamic_range_db, 0] dB re full scale. SNR and the
// additive identity are preserved.
PairedExample scale_dynamic_range(const PairedExample& p, double dynamic_range_db, Rng& rng);

// ---------------------------------------------------------------------
// Toy corpus: synthetic stand-ins for speech (harmonic tone complexes
// with amplitude modulation) and noise (band-limited filtered noise in
// several band classes). The unpaired set is built from held-out sources
// mixed near 10 dB SNR with the references discarded.

struct ToyCorpusSpec {
  int clean_train = 24;
  int clean_val = 6;
  int clean_test = 8;
  int noise_train_per_class = 6;
  int noise_val_per_class = 2;
  int noise_test_per_class = 3;
  int num_noise_classes = 4;
  std::vector<int> unseen_classes = {3};  // never listed in train/val, never in unpaired
  int unpaired_count = 16;
  double clean_seconds = 2.0;
  double noise_seconds = 2.0;
  double unpaired_seconds = 2.0;
  double unpaired_snr_center_db = 10.0;
  double unpaired_snr_halfwidth_db = 5.0;
};

struct ToyCorpus {
  std::vector<Waveform> clean_train, clean_val, clean_test;
  // noise_*[class][item]
  std::vector<std::vector<Waveform>> noise_train, noise_val, noise_test;
  std::vector<Waveform> unpaired;
  std::vector<double> clean_train_f0, clean_val_f0, clean_test_f0;
  std::vector<double> unpaired_true_snr_db;
};

ToyCorpus toy_corpus(Rng& rng, const ToyCorpusSpec& spec);

// Synthesis primitives, exposed for tests and diagnostics.
Waveform synth_harmonic_tone(double f0_hz, double seconds, Rng& rng);
Waveform synth_band_noise(double lo_hz, double hi_hz, double seconds, Rng& rng);
// Band edges of a noise class, derived from the class count.
std::pair<double, double> noise_band(int cls, int num_classes);

// ---------------------------------------------------------------------
// Corpus manifests: one "path<TAB>role" line per file with role one of
// clean|noise|unpaired. Paths are stored relative to the manifest file.

struct ManifestEntry {
  std::string path;  // absolute after reading
  std::string role;
};

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);
void write_manifest(const std::string& manifest_path, const std::vector<ManifestEntry>& rows);

// Noise class index encoded in toy file names ("..._c<k>_...").
std::optional<int> noise_class_of(const std::string& path);

// Writes clean/, noise/, unpaired/ plus train.tsv, val.tsv, test.tsv.
void write_toy_corpus(const ToyCorpus& corpus, const ToyCorpusSpec& spec, const std::string& dir);

// In-memory cache of decoded waveforms keyed by absolute path.
class WaveStore {
 public:
  const Waveform& get(const std::string& path);

 private:
  std::map<std::string, Waveform> cache_;
};

}  // namespace vqse::datagen

#endif  // VQSE_DATAGEN_HPP_
