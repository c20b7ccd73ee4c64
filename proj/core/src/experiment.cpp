// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "vqse/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vqse {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_run_manifest(const ExperimentConfig& cfg, const std::string& command,
                        const std::vector<std::string>& checkpoints,
                        const std::vector<std::string>& reports, double wall_seconds) {
  json m;
  m["command"] = command;
  m["code_version"] = kVersion;
  m["seed"] = cfg.seed;
  m["config"] = render_config(cfg);
  m["checkpoints"] = checkpoints;
  m["reports"] = reports;
  m["wall_clock_seconds"] = wall_seconds;
  const std::string path = cfg.out_dir + "/run_manifest_" + command + ".json";
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    require_config(out.good(), "cannot write run manifest: " + path);
    out << m.dump(2) << "\n";
  }
  fs::rename(tmp, path);
}

// First ceil(fraction * n) entries, at least one.
template <typename T>
std::vector<T> take_fraction(const std::vector<T>& items, double fraction) {
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(items.size()))));
  return {items.begin(), items.begin() + static_cast<std::ptrdiff_t>(std::min(keep, items.size()))};
}

struct ManifestPools {
  std::vector<std::string> clean, noise, unpaired;
};

ManifestPools split_roles(const std::vector<datagen::ManifestEntry>& rows) {
  ManifestPools p;
  for (const auto& r : rows) {
    if (r.role == "clean") p.clean.push_back(r.path);
    if (r.role == "noise") p.noise.push_back(r.path);
    if (r.role == "unpaired") p.unpaired.push_back(r.path);
  }
  return p;
}

// Keeps rows at or below resume_step from an existing history file so a
// resumed run rewrites a seamless history.
std::vector<std::string> existing_history_rows(const std::string& path, int resume_step) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  if (!in.good()) return rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const int step = std::atoi(line.c_str());
    if (step <= resume_step) rows.push_back(line);
  }
  return rows;
}

void write_se_history_csv(const std::string& path, const std::vector<std::string>& prior,
                          const std::vector<enh::SeHistoryRow>& rows) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    require_config(out.good(), "cannot write history: " + path);
    out << "step,L_s,L_embed,L_feat,mean_margin,val_si_sdr\n";
    for (const auto& line : prior) out << line << '\n';
    for (const auto& r : rows)
      out << r.step << ',' << fmt(r.supervised) << ',' << opt_fmt(r.embedding_loss) << ','
          << opt_fmt(r.feature_loss) << ',' << opt_fmt(r.mean_margin) << ','
          << opt_fmt(r.val_si_sdr) << '\n';
  }
  fs::rename(tmp, path);
}

}  // namespace

std::string vqvae_checkpoint_path(const ExperimentConfig& cfg) {
  return cfg.out_dir + "/vqvae.ckpt";
}

std::string se_checkpoint_path(const ExperimentConfig& cfg, enh::TrainMode mode) {
  std::string name = enh::mode_name(mode);
  std::replace(name.begin(), name.end(), '-', '_');
  return cfg.out_dir + "/se_" + name + ".ckpt";
}

LoadedData load_data(const ExperimentConfig& cfg) {
  LoadedData data;
  data.store = std::make_unique<datagen::WaveStore>();

  const auto train = split_roles(datagen::read_manifest(cfg.data_dir + "/train.tsv"));
  const auto val = split_roles(datagen::read_manifest(cfg.data_dir + "/val.tsv"));
  const auto test = split_roles(datagen::read_manifest(cfg.data_dir + "/test.tsv"));

  auto load_list = [&](const std::vector<std::string>& paths) {
    std::vector<const Waveform*> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(&data.store->get(p));
    return out;
  };

  data.paired_train.clean = load_list(take_fraction(train.clean, cfg.paired_fraction));
  data.paired_train.noise = load_list(take_fraction(train.noise, cfg.paired_fraction));
  data.unpaired = load_list(train.unpaired);
  data.paired_val.clean = load_list(val.clean);
  data.paired_val.noise = load_list(val.noise);

  data.test.clean = load_list(test.clean);
  std::vector<std::string> seen, unseen;
  for (const auto& p : test.noise) {
    auto cls = datagen::noise_class_of(p);
    const bool is_unseen =
        cls && std::find(cfg.corpus.unseen_classes.begin(), cfg.corpus.unseen_classes.end(),
                         *cls) != cfg.corpus.unseen_classes.end();
    (is_unseen ? unseen : seen).push_back(p);
  }
  data.test.noise_seen = load_list(seen);
  data.test.noise_unseen = load_list(unseen);
  return data;
}

int cmd_synth_data(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(cfg.data_dir);
  fs::create_directories(cfg.out_dir);
  Rng rng = make_stream(cfg.seed, "datagen");
  datagen::ToyCorpus corpus = datagen::toy_corpus(rng, cfg.corpus);
  datagen::write_toy_corpus(corpus, cfg.corpus, cfg.data_dir);
  std::cout << "wrote toy corpus to " << cfg.data_dir << "\n";
  write_run_manifest(cfg, "synth-data", {},
                     {cfg.data_dir + "/train.tsv", cfg.data_dir + "/val.tsv",
                      cfg.data_dir + "/test.tsv"},
                     elapsed_seconds(start));
  return 0;
}

int cmd_train_vqvae(const ExperimentConfig& cfg, bool resume) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);
  LoadedData data = load_data(cfg);

  Rng init = make_stream(cfg.seed, "vqvae-init");
  vq::VqVaeModel model(cfg.vqvae, init);

  vq::VqVaeTrainConfig train_cfg;
  train_cfg.steps = cfg.vqvae_steps;
  train_cfg.batch = cfg.vqvae_batch;
  train_cfg.lr = cfg.vqvae_lr;
  train_cfg.checkpoint_interval = cfg.vqvae_checkpoint_interval;
  train_cfg.usage_epoch_steps = cfg.usage_epoch_steps;
  train_cfg.data_init = cfg.vqvae_data_init;
  train_cfg.seed = cfg.seed;
  train_cfg.mix = cfg.mix;
  train_cfg.checkpoint_path = vqvae_checkpoint_path(cfg);

  vq::VqVaeTrainResult result = vq::train_vqvae(data.paired_train, model, train_cfg, resume);

  const int start_step = result.last_step - static_cast<int>(result.history.size());
  const std::string csv = cfg.out_dir + "/vqvae_loss.csv";
  const std::vector<std::string> prior =
      resume ? existing_history_rows(csv, start_step) : std::vector<std::string>{};
  {
    const std::string tmp = csv + ".tmp";
    std::ofstream out(tmp, std::ios::trunc);
    require_config(out.good(), "cannot write loss history: " + csv);
    out << "step,rec_s,rec_n,rec_d,vq_s,vq_n,vq_d,commit_s,commit_n,commit_d,total\n";
    for (const auto& line : prior) out << line << '\n';
    for (std::size_t i = 0; i < result.history.size(); ++i) {
      const auto& r = result.history[i];
      out << start_step + static_cast<int>(i) + 1 << ',' << fmt(r.rec_speech) << ','
          << fmt(r.rec_noise) << ',' << fmt(r.rec_degraded) << ',' << fmt(r.vq_speech) << ','
          << fmt(r.vq_noise) << ',' << fmt(r.vq_degraded) << ',' << fmt(r.commit_speech) << ','
          << fmt(r.commit_noise) << ',' << fmt(r.commit_degraded) << ',' << fmt(r.total)
          << '\n';
    }
    out.close();
    fs::rename(tmp, csv);
  }

  {
    const std::string usage_csv = cfg.out_dir + "/vqvae_usage.csv";
    const std::string tmp = usage_csv + ".tmp";
    std::ofstream out(tmp, std::ios::trunc);
    out << "epoch,speech_fraction,noise_fraction\n";
    for (const auto& u : result.usage)
      out << u.epoch << ',' << fmt(u.speech_fraction) << ',' << fmt(u.noise_fraction) << '\n';
    out.close();
    fs::rename(tmp, usage_csv);
  }

  if (!result.history.empty())
    std::cout << "vqvae training done: steps=" << result.last_step
              << " final_total=" << result.history.back().total << "\n";
  write_run_manifest(cfg, "train-vqvae", {vqvae_checkpoint_path(cfg)},
                     {csv, cfg.out_dir + "/vqvae_usage.csv"}, elapsed_seconds(start));
  return 0;
}

namespace {

vq::VqVaeModel load_frozen_vqvae(const ExperimentConfig& cfg, const std::string& path) {
  require_config(fs::exists(path), "missing VQ-VAE checkpoint: " + path);
  Rng init = make_stream(cfg.seed, "vqvae-init");
  vq::VqVaeModel model(cfg.vqvae, init);
  Checkpoint ckpt = load_checkpoint(path);
  restore_params(ckpt, model.params());
  model.freeze();
  return model;
}

}  // namespace

int cmd_train_se(const ExperimentConfig& cfg, const std::string& vqvae_checkpoint, bool resume) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);
  LoadedData data = load_data(cfg);

  const std::string vq_path =
      vqvae_checkpoint.empty() ? vqvae_checkpoint_path(cfg) : vqvae_checkpoint;
  vq::VqVaeModel frozen = load_frozen_vqvae(cfg, vq_path);

  Rng init = make_stream(cfg.seed, "se-init");
  enh::EnhancerModel model(cfg.enhancer, init);

  enh::SemiSupConfig semi = cfg.semi;
  semi.checkpoint_path = se_checkpoint_path(cfg, semi.mode);

  enh::SePools pools;
  pools.paired_train = data.paired_train;
  pools.paired_val = data.paired_val;
  pools.unpaired = data.unpaired;

  enh::TrainSeResult result = enh::train_se(pools, model, frozen, semi, resume);

  const int start_step = result.last_step - static_cast<int>(result.history.size());
  const std::string csv =
      cfg.out_dir + "/se_history_" + enh::mode_name(semi.mode) + ".csv";
  write_se_history_csv(csv, resume ? existing_history_rows(csv, start_step) : std::vector<std::string>{},
                       result.history);

  if (!result.history.empty()) {
    std::cout << "se training done: mode=" << enh::mode_name(semi.mode)
              << " steps=" << result.last_step;
    if (result.history.back().val_si_sdr)
      std::cout << " val_si_sdr=" << *result.history.back().val_si_sdr;
    std::cout << "\n";
  }
  write_run_manifest(cfg, "train-se", {semi.checkpoint_path}, {csv}, elapsed_seconds(start));
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& se_checkpoint) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);
  LoadedData data = load_data(cfg);

  const std::string path =
      se_checkpoint.empty() ? se_checkpoint_path(cfg, cfg.semi.mode) : se_checkpoint;
  require_config(fs::exists(path), "missing enhancer checkpoint: " + path);
  Rng init = make_stream(cfg.seed, "se-init");
  enh::EnhancerModel model(cfg.enhancer, init);
  Checkpoint ckpt = load_checkpoint(path);
  restore_params(ckpt, model.params());

  metrics::EvalConfig ev;
  ev.snr_grid_db = cfg.snr_grid_db;
  ev.mixtures_per_condition = cfg.eval_mixtures_per_condition;
  ev.orthogonalize = cfg.eval_orthogonalize;
  ev.segment_seconds = cfg.mix.segment_seconds;
  ev.seed = cfg.seed;

  metrics::EvalReport report = metrics::eval_report(model, data.test, ev);
  const std::string csv = cfg.out_dir + "/eval_report.csv";
  metrics::write_eval_csv(csv, report);
  const std::string txt = cfg.out_dir + "/eval_report.txt";
  {
    const std::string tmp = txt + ".tmp";
    std::ofstream out(tmp, std::ios::trunc);
    out << metrics::render_eval_table(report);
    out.close();
    fs::rename(tmp, txt);
  }
  std::cout << metrics::render_eval_table(report);
  write_run_manifest(cfg, "eval", {path}, {csv, txt}, elapsed_seconds(start));
  return 0;
}

int cmd_margin_diag(const ExperimentConfig& cfg, const std::string& vqvae_checkpoint) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);
  LoadedData data = load_data(cfg);

  const std::string path =
      vqvae_checkpoint.empty() ? vqvae_checkpoint_path(cfg) : vqvae_checkpoint;
  vq::VqVaeModel frozen = load_frozen_vqvae(cfg, path);

  metrics::MarginDiagConfig md;
  md.snr_grid_db = cfg.snr_grid_db;
  md.mixtures_per_snr = cfg.margin_mixtures_per_snr;
  md.segment_seconds = cfg.mix.segment_seconds;
  md.seed = cfg.seed;

  metrics::MarginCurve curve = metrics::margin_diagnostic(frozen, data.paired_val, md);
  const std::string csv = cfg.out_dir + "/margin_curve.csv";
  metrics::write_margin_csv(csv, curve);
  for (std::size_t i = 0; i < curve.snr_bins_db.size(); ++i)
    std::cout << "snr " << curve.snr_bins_db[i] << " dB: mean margin " << curve.mean_margin[i]
              << " (std " << curve.std_margin[i] << ", bins " << curve.count[i] << ")\n";
  write_run_manifest(cfg, "margin-diag", {path}, {csv}, elapsed_seconds(start));
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(cfg.out_dir);

  struct Row {
    std::string mode;
    double fraction;
    std::optional<double> seen, unseen;
    std::string error;
  };
  std::vector<Row> rows;

  for (double fraction : cfg.sweep_fractions) {
    ExperimentConfig sub = cfg;
    sub.paired_fraction = fraction;
    char frac_buf[32];
    std::snprintf(frac_buf, sizeof(frac_buf), "%g", fraction);
    sub.out_dir = cfg.out_dir + "/sweep/f" + frac_buf;
    finalize_config(sub);
    fs::create_directories(sub.out_dir);

    bool vqvae_ok = true;
    std::string vqvae_error;
    try {
      cmd_train_vqvae(sub, /*resume=*/false);
    } catch (const std::exception& e) {
      vqvae_ok = false;
      vqvae_error = e.what();
    }

    for (const auto& mode_name : cfg.sweep_modes) {
      Row row;
      row.mode = mode_name;
      row.fraction = fraction;
      if (!vqvae_ok) {
        row.error = "vqvae training failed: " + vqvae_error;
        rows.push_back(row);
        continue;
      }
      try {
        ExperimentConfig cell = sub;
        cell.semi.mode = enh::parse_mode(mode_name);
        std::string cell_mode = enh::mode_name(cell.semi.mode);
        std::replace(cell_mode.begin(), cell_mode.end(), '-', '_');
        cell.out_dir = sub.out_dir + "/" + cell_mode;
        finalize_config(cell);
        fs::create_directories(cell.out_dir);
        cmd_train_se(cell, vqvae_checkpoint_path(sub), /*resume=*/false);
        cmd_eval(cell, se_checkpoint_path(cell, cell.semi.mode));

        // Aggregate the improvements from the cell's eval report.
        std::ifstream in(cell.out_dir + "/eval_report.csv");
        require_config(in.good(), "missing cell eval report");
        std::string line;
        std::getline(in, line);  // header
        double seen_acc = 0, unseen_acc = 0;
        int seen_n = 0, unseen_n = 0;
        while (std::getline(in, line)) {
          std::stringstream ss(line);
          std::string snr, split, deg, enh_col, imp, count;
          std::getline(ss, snr, ',');
          std::getline(ss, split, ',');
          std::getline(ss, deg, ',');
          std::getline(ss, enh_col, ',');
          std::getline(ss, imp, ',');
          std::getline(ss, count, ',');
          if (imp.empty()) continue;
          if (split == "seen") {
            seen_acc += std::stod(imp);
            ++seen_n;
          } else {
            unseen_acc += std::stod(imp);
            ++unseen_n;
          }
        }
        if (seen_n) row.seen = seen_acc / seen_n;
        if (unseen_n) row.unseen = unseen_acc / unseen_n;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(row);
    }
  }

  const std::string csv = cfg.out_dir + "/sweep_aggregate.csv";
  {
    const std::string tmp = csv + ".tmp";
    std::ofstream out(tmp, std::ios::trunc);
    require_config(out.good(), "cannot write sweep aggregate: " + csv);
    out << "mode,fraction,si_sdr_improvement_seen,si_sdr_improvement_unseen,error\n";
    for (const auto& r : rows) {
      out << r.mode << ',' << fmt(r.fraction) << ',' << opt_fmt(r.seen) << ','
          << opt_fmt(r.unseen) << ',' << r.error << '\n';
    }
    out.close();
    fs::rename(tmp, csv);
  }
  std::cout << "sweep complete: " << rows.size() << " cells -> " << csv << "\n";
  write_run_manifest(cfg, "sweep", {}, {csv}, elapsed_seconds(start));
  return 0;
}

}  // namespace vqse
