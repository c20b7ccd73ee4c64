// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <CLI11.hpp>

#include <iostream>

#include "vqse/experiment.hpp"

namespace {

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out_dir;
  std::string data_dir;
  std::vector<std::string> overrides;
};

vqse::ExperimentConfig resolve_config(const GlobalArgs& args) {
  vqse::ExperimentConfig cfg = args.config_path.empty()
                                   ? vqse::default_config()
                                   : vqse::load_config_file(args.config_path);
  vqse::apply_overrides(cfg, args.overrides);
  if (args.seed_given) cfg.seed = args.seed;
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.data_dir.empty()) cfg.data_dir = args.data_dir;
  vqse::finalize_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised speech enhancement with a partitioned-codebook VQ-VAE"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "configuration file (key = value with [sections])");
  auto* seed_opt = app.add_option("--seed", args.seed, "master seed; per-component streams derive from it");
  app.add_option("--out", args.out_dir, "output directory");
  app.add_option("--data", args.data_dir, "corpus directory (manifests + wav files)");
  app.add_option("--set", args.overrides, "override a config value as section.key=value")
      ->take_all();

  auto* synth = app.add_subcommand("synth-data", "generate the toy corpus and manifests");
  auto* train_vq = app.add_subcommand("train-vqvae", "supervised VQ-VAE training on mixed pairs");
  bool vq_resume = false;
  train_vq->add_flag("--resume", vq_resume, "continue from the last checkpoint");
  auto* train_se = app.add_subcommand("train-se", "semi-supervised enhancement training");
  std::string vqvae_ckpt;
  bool se_resume = false;
  train_se->add_option("--vqvae", vqvae_ckpt, "VQ-VAE checkpoint (default: <out>/vqvae.ckpt)");
  train_se->add_flag("--resume", se_resume, "continue from the last checkpoint");
  auto* eval = app.add_subcommand("eval", "SI-SDR evaluation over the SNR grid");
  std::string se_ckpt;
  eval->add_option("--checkpoint", se_ckpt, "enhancer checkpoint (default: <out>/se_<mode>.ckpt)");
  auto* margin = app.add_subcommand("margin-diag", "embedding margin vs global SNR diagnostic");
  std::string margin_ckpt;
  margin->add_option("--vqvae", margin_ckpt, "VQ-VAE checkpoint (default: <out>/vqvae.ckpt)");
  auto* sweep = app.add_subcommand("sweep", "paired-fraction x mode grid of runs");
  std::vector<std::string> sweep_fractions, sweep_modes;
  sweep->add_option("--fractions", sweep_fractions, "comma-free list of paired fractions")
      ->take_all();
  sweep->add_option("--modes", sweep_modes, "list of training modes")->take_all();

  CLI11_PARSE(app, argc, argv);
  args.seed_given = seed_opt->count() > 0;

  try {
    vqse::ExperimentConfig cfg = resolve_config(args);
    if (synth->parsed()) return vqse::cmd_synth_data(cfg);
    if (train_vq->parsed()) return vqse::cmd_train_vqvae(cfg, vq_resume);
    if (train_se->parsed()) return vqse::cmd_train_se(cfg, vqvae_ckpt, se_resume);
    if (eval->parsed()) return vqse::cmd_eval(cfg, se_ckpt);
    if (margin->parsed()) return vqse::cmd_margin_diag(cfg, margin_ckpt);
    if (sweep->parsed()) {
      if (!sweep_fractions.empty()) {
        cfg.sweep_fractions.clear();
        for (const auto& f : sweep_fractions) cfg.sweep_fractions.push_back(std::stod(f));
      }
      if (!sweep_modes.empty()) cfg.sweep_modes = sweep_modes;
      return vqse::cmd_sweep(cfg);
    }
  } catch (const vqse::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
