// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/config.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace vqse {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string strip_comment(const std::string& line) {
  for (std::size_t i = 0; i < line.size(); ++i) {
    if ((line[i] == '#' || line[i] == ';') &&
        (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t'))
      return line.substr(0, i);
  }
  return line;
}

// Flat "section.key" -> value map with consumption tracking.
class Binder {
 public:
  explicit Binder(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  template <typename T>
  void bind(const std::string& key, T& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    consumed_.insert(key);
    parse(key, it->second, out);
  }

  void check_all_consumed() const {
    for (const auto& [k, v] : kv_)
      require_config(consumed_.count(k) > 0, "unknown config key: " + k);
  }

 private:
  static void parse(const std::string& key, const std::string& v, double& out) {
    try {
      out = std::stod(v);
    } catch (...) {
      throw ConfigError("bad numeric value for " + key + ": " + v);
    }
  }
  static void parse(const std::string& key, const std::string& v, int& out) {
    try {
      out = std::stoi(v);
    } catch (...) {
      throw ConfigError("bad integer value for " + key + ": " + v);
    }
  }
  static void parse(const std::string& key, const std::string& v, std::uint64_t& out) {
    try {
      out = std::stoull(v);
    } catch (...) {
      throw ConfigError("bad integer value for " + key + ": " + v);
    }
  }
  static void parse(const std::string&, const std::string& v, std::string& out) { out = v; }
  static void parse(const std::string& key, const std::string& v, bool& out) {
    if (v == "true" || v == "1" || v == "yes")
      out = true;
    else if (v == "false" || v == "0" || v == "no")
      out = false;
    else
      throw ConfigError("bad boolean value for " + key + ": " + v);
  }
  static void parse(const std::string& key, const std::string& v, std::vector<double>& out) {
    out.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      try {
        out.push_back(std::stod(item));
      } catch (...) {
        throw ConfigError("bad list value for " + key + ": " + v);
      }
    }
  }
  static void parse(const std::string& key, const std::string& v, std::vector<int>& out) {
    std::vector<double> tmp;
    parse(key, v, tmp);
    out.clear();
    for (double d : tmp) out.push_back(static_cast<int>(d));
  }
  static void parse(const std::string&, const std::string& v, std::vector<std::string>& out) {
    out.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
  }

  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
};

void bind_all(Binder& b, ExperimentConfig& cfg) {
  b.bind("run.seed", cfg.seed);
  b.bind("run.out_dir", cfg.out_dir);
  b.bind("run.data_dir", cfg.data_dir);
  b.bind("run.paired_fraction", cfg.paired_fraction);

  b.bind("stft.window_length", cfg.stft.window_length);
  b.bind("stft.hop_length", cfg.stft.hop_length);
  b.bind("stft.fft_size", cfg.stft.fft_size);
  std::string window = dsp::window_name(cfg.stft.window);
  b.bind("stft.window", window);
  cfg.stft.window = dsp::parse_window(window);
  b.bind("stft.floor_epsilon", cfg.floor_epsilon);

  b.bind("mix.snr_low_db", cfg.mix.snr_low_db);
  b.bind("mix.snr_high_db", cfg.mix.snr_high_db);
  b.bind("mix.dynamic_range_db", cfg.mix.dynamic_range_db);
  b.bind("mix.segment_seconds", cfg.mix.segment_seconds);

  b.bind("corpus.clean_train", cfg.corpus.clean_train);
  b.bind("corpus.clean_val", cfg.corpus.clean_val);
  b.bind("corpus.clean_test", cfg.corpus.clean_test);
  b.bind("corpus.noise_train_per_class", cfg.corpus.noise_train_per_class);
  b.bind("corpus.noise_val_per_class", cfg.corpus.noise_val_per_class);
  b.bind("corpus.noise_test_per_class", cfg.corpus.noise_test_per_class);
  b.bind("corpus.num_noise_classes", cfg.corpus.num_noise_classes);
  b.bind("corpus.unseen_classes", cfg.corpus.unseen_classes);
  b.bind("corpus.unpaired_count", cfg.corpus.unpaired_count);
  b.bind("corpus.clean_seconds", cfg.corpus.clean_seconds);
  b.bind("corpus.noise_seconds", cfg.corpus.noise_seconds);
  b.bind("corpus.unpaired_seconds", cfg.corpus.unpaired_seconds);
  b.bind("corpus.unpaired_snr_center_db", cfg.corpus.unpaired_snr_center_db);
  b.bind("corpus.unpaired_snr_halfwidth_db", cfg.corpus.unpaired_snr_halfwidth_db);

  b.bind("vqvae.codebook_size", cfg.vqvae.codebook_size);
  b.bind("vqvae.embedding_dim", cfg.vqvae.embedding_dim);
  b.bind("vqvae.beta", cfg.vqvae.beta);
  b.bind("vqvae.enc_channels1", cfg.vqvae.enc_channels1);
  b.bind("vqvae.enc_channels2", cfg.vqvae.enc_channels2);
  b.bind("vqvae.steps", cfg.vqvae_steps);
  b.bind("vqvae.batch", cfg.vqvae_batch);
  b.bind("vqvae.lr", cfg.vqvae_lr);
  b.bind("vqvae.checkpoint_interval", cfg.vqvae_checkpoint_interval);
  b.bind("vqvae.data_init", cfg.vqvae_data_init);
  b.bind("vqvae.usage_epoch_steps", cfg.usage_epoch_steps);

  std::string mode = enh::mode_name(cfg.semi.mode);
  b.bind("enhancer.mode", mode);
  cfg.semi.mode = enh::parse_mode(mode);
  b.bind("enhancer.input_proj", cfg.enhancer.input_proj);
  b.bind("enhancer.hidden", cfg.enhancer.hidden);
  b.bind("enhancer.gru_layers", cfg.enhancer.gru_layers);
  b.bind("enhancer.margin", cfg.semi.margin);
  b.bind("enhancer.lambda_u", cfg.semi.lambda_u);
  b.bind("enhancer.paired_batch", cfg.semi.paired_batch);
  b.bind("enhancer.unpaired_batch", cfg.semi.unpaired_batch);
  b.bind("enhancer.steps", cfg.semi.steps);
  b.bind("enhancer.lr", cfg.semi.lr);
  b.bind("enhancer.val_interval", cfg.semi.val_interval);
  b.bind("enhancer.val_mixtures", cfg.semi.val_mixtures);
  b.bind("enhancer.checkpoint_interval", cfg.semi.checkpoint_interval);
  std::string anchor = cfg.semi.anchor_decoded ? "decoded" : "input";
  b.bind("enhancer.anchor", anchor);
  if (anchor == "input")
    cfg.semi.anchor_decoded = false;
  else if (anchor == "decoded")
    cfg.semi.anchor_decoded = true;
  else
    throw ConfigError("enhancer.anchor must be input or decoded, got " + anchor);

  b.bind("eval.snr_grid", cfg.snr_grid_db);
  b.bind("eval.mixtures_per_condition", cfg.eval_mixtures_per_condition);
  b.bind("eval.orthogonalize", cfg.eval_orthogonalize);

  b.bind("margin.mixtures_per_snr", cfg.margin_mixtures_per_snr);

  b.bind("sweep.fractions", cfg.sweep_fractions);
  b.bind("sweep.modes", cfg.sweep_modes);
}

}  // namespace

void finalize_config(ExperimentConfig& cfg) {
  require_config(cfg.paired_fraction > 0.0 && cfg.paired_fraction <= 1.0,
                 "paired_fraction must lie in (0, 1]");
  require_config(cfg.mix.snr_low_db < cfg.mix.snr_high_db, "snr_low_db must be < snr_high_db");
  require_config(cfg.mix.dynamic_range_db > 0.0, "dynamic_range_db must be positive");
  require_config(cfg.floor_epsilon > 0.0, "floor_epsilon must be positive");
  dsp::validate_stft_config(cfg.stft);

  cfg.mix.rng_seed = cfg.seed;
  cfg.vqvae.stft = cfg.stft;
  cfg.vqvae.floor_epsilon = cfg.floor_epsilon;
  cfg.enhancer.stft = cfg.stft;
  cfg.enhancer.floor_epsilon = cfg.floor_epsilon;
  cfg.semi.mix = cfg.mix;
  cfg.semi.seed = cfg.seed;
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  finalize_config(cfg);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  require_config(in.good(), "cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      require_config(line.back() == ']', "bad section header at line " + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    require_config(eq != std::string::npos, "expected key = value at line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    require_config(!section.empty(), "key outside any section at line " + std::to_string(lineno));
    kv[section + "." + key] = value;
  }

  ExperimentConfig cfg;
  Binder binder(std::move(kv));
  bind_all(binder, cfg);
  binder.check_all_consumed();
  finalize_config(cfg);
  return cfg;
}

void apply_overrides(ExperimentConfig& cfg, const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> kv;
  for (const auto& ov : overrides) {
    auto eq = ov.find('=');
    require_config(eq != std::string::npos, "override must be section.key=value: " + ov);
    kv[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }
  Binder binder(std::move(kv));
  bind_all(binder, cfg);
  binder.check_all_consumed();
  finalize_config(cfg);
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  auto list = [&num](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
    return s;
  };

  out << "[run]\n";
  out << "seed = " << cfg.seed << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  out << "data_dir = " << cfg.data_dir << "\n";
  out << "paired_fraction = " << num(cfg.paired_fraction) << "\n\n";

  out << "[stft]\n";
  out << "window_length = " << cfg.stft.window_length << "\n";
  out << "hop_length = " << cfg.stft.hop_length << "\n";
  out << "fft_size = " << cfg.stft.fft_size << "\n";
  out << "window = " << dsp::window_name(cfg.stft.window) << "\n";
  out << "floor_epsilon = " << num(cfg.floor_epsilon) << "\n\n";

  out << "[mix]\n";
  out << "snr_low_db = " << num(cfg.mix.snr_low_db) << "\n";
  out << "snr_high_db = " << num(cfg.mix.snr_high_db) << "\n";
  out << "dynamic_range_db = " << num(cfg.mix.dynamic_range_db) << "\n";
  out << "segment_seconds = " << num(cfg.mix.segment_seconds) << "\n\n";

  out << "[corpus]\n";
  out << "clean_train = " << cfg.corpus.clean_train << "\n";
  out << "clean_val = " << cfg.corpus.clean_val << "\n";
  out << "clean_test = " << cfg.corpus.clean_test << "\n";
  out << "noise_train_per_class = " << cfg.corpus.noise_train_per_class << "\n";
  out << "noise_val_per_class = " << cfg.corpus.noise_val_per_class << "\n";
  out << "noise_test_per_class = " << cfg.corpus.noise_test_per_class << "\n";
  out << "num_noise_classes = " << cfg.corpus.num_noise_classes << "\n";
  {
    std::string s;
    for (std::size_t i = 0; i < cfg.corpus.unseen_classes.size(); ++i)
      s += (i ? "," : "") + std::to_string(cfg.corpus.unseen_classes[i]);
    out << "unseen_classes = " << s << "\n";
  }
  out << "unpaired_count = " << cfg.corpus.unpaired_count << "\n";
  out << "clean_seconds = " << num(cfg.corpus.clean_seconds) << "\n";
  out << "noise_seconds = " << num(cfg.corpus.noise_seconds) << "\n";
  out << "unpaired_seconds = " << num(cfg.corpus.unpaired_seconds) << "\n";
  out << "unpaired_snr_center_db = " << num(cfg.corpus.unpaired_snr_center_db) << "\n";
  out << "unpaired_snr_halfwidth_db = " << num(cfg.corpus.unpaired_snr_halfwidth_db) << "\n\n";

  out << "[vqvae]\n";
  out << "codebook_size = " << cfg.vqvae.codebook_size << "\n";
  out << "embedding_dim = " << cfg.vqvae.embedding_dim << "\n";
  out << "beta = " << num(cfg.vqvae.beta) << "\n";
  out << "enc_channels1 = " << cfg.vqvae.enc_channels1 << "\n";
  out << "enc_channels2 = " << cfg.vqvae.enc_channels2 << "\n";
  out << "steps = " << cfg.vqvae_steps << "\n";
  out << "batch = " << cfg.vqvae_batch << "\n";
  out << "lr = " << num(cfg.vqvae_lr) << "\n";
  out << "checkpoint_interval = " << cfg.vqvae_checkpoint_interval << "\n";
  out << "usage_epoch_steps = " << cfg.usage_epoch_steps << "\n";
  out << "data_init = " << (cfg.vqvae_data_init ? "true" : "false") << "\n\n";

  out << "[enhancer]\n";
  out << "mode = " << enh::mode_name(cfg.semi.mode) << "\n";
  out << "input_proj = " << cfg.enhancer.input_proj << "\n";
  out << "hidden = " << cfg.enhancer.hidden << "\n";
  out << "gru_layers = " << cfg.enhancer.gru_layers << "\n";
  out << "margin = " << num(cfg.semi.margin) << "\n";
  out << "lambda_u = " << num(cfg.semi.lambda_u) << "\n";
  out << "paired_batch = " << cfg.semi.paired_batch << "\n";
  out << "unpaired_batch = " << cfg.semi.unpaired_batch << "\n";
  out << "steps = " << cfg.semi.steps << "\n";
  out << "lr = " << num(cfg.semi.lr) << "\n";
  out << "val_interval = " << cfg.semi.val_interval << "\n";
  out << "val_mixtures = " << cfg.semi.val_mixtures << "\n";
  out << "checkpoint_interval = " << cfg.semi.checkpoint_interval << "\n";
  out << "anchor = " << (cfg.semi.anchor_decoded ? "decoded" : "input") << "\n\n";

  out << "[eval]\n";
  out << "snr_grid = " << list(cfg.snr_grid_db) << "\n";
  out << "mixtures_per_condition = " << cfg.eval_mixtures_per_condition << "\n";
  out << "orthogonalize = " << (cfg.eval_orthogonalize ? "true" : "false") << "\n\n";

  out << "[margin]\n";
  out << "mixtures_per_snr = " << cfg.margin_mixtures_per_snr << "\n\n";

  out << "[sweep]\n";
  out << "fractions = " << list(cfg.sweep_fractions) << "\n";
  {
    std::string s;
    for (std::size_t i = 0; i < cfg.sweep_modes.size(); ++i)
      s += (i ? "," : "") + cfg.sweep_modes[i];
    out << "modes = " << s << "\n";
  }
  return out.str();
}

}  // namespace vqse
