// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

// eigennet command-line tool.
//
//   eigennet train        --dataset mnist --mode local --epochs 10
//   eigennet sweep-lambda --dataset mnist --fraction 0.1
//   eigennet layer-loss   --dataset mnist --epochs 20
//   eigennet speedup      --dataset cifar10 --preset cnn-4block --train-limit 5000

#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "eigennet/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Eigenbasis network training and experiments"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "key = value config file");

  // Flag values are applied after the config file, so they win.
  std::map<std::string, std::string> values;
  const std::vector<std::pair<std::string, std::string>> flags{
      {"mode", "global | local"},
      {"lambda", "orthogonality weight"},
      {"lr", "learning rate"},
      {"optimizer", "adamw | sgd"},
      {"momentum", "sgd momentum"},
      {"weight-decay", "decoupled weight decay"},
      {"clip-norm", "max global gradient norm"},
      {"epochs", "training epochs"},
      {"batch-size", "mini-batch size"},
      {"workers", "local-mode worker threads"},
      {"seed", "random seed"},
      {"dataset", "mnist | cifar10 | synth"},
      {"data-dir", "dataset root (default $EIGENNET_DATA_DIR)"},
      {"out-dir", "output directory"},
      {"preset", "mlp-4block | cnn-4block"},
      {"checkpoint-interval", "epochs between checkpoints (0: final only)"},
      {"train-limit", "use the first N training samples"},
      {"test-limit", "use the first N test samples"},
      {"grid", "comma-separated lambda grid (sweep-lambda)"},
      {"sweep-epochs", "epochs per sweep run"},
      {"fraction", "training fraction per sweep run"},
  };
  for (const auto& [name, help] : flags) {
    app.add_option("--" + name, values[name], help);
  }
  std::size_t steps = 20;
  auto* train = app.add_subcommand("train", "train one model, write metrics.csv");
  auto* sweep = app.add_subcommand("sweep-lambda", "short runs over a lambda grid");
  auto* layer = app.add_subcommand("layer-loss", "per-head local loss by epoch");
  auto* speed = app.add_subcommand("speedup", "step-time comparison of the modes");
  speed->add_option("--steps", steps, "timed steps per configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), eigennet::kExitConfig);
  }

  eigennet::RunConfig run;
  eigennet::SweepSpec spec;
  // The sweep defaults to end-to-end training; --mode or the config file
  // can still select local mode.
  if (*sweep) run.train.mode = eigennet::TrainMode::kGlobal;
  try {
    if (!config_path.empty()) eigennet::load_config_file(config_path, run, spec);
    for (const auto& [name, help] : flags) {
      if (app.count("--" + name) > 0) {
        eigennet::apply_setting(run, spec, name, values[name]);
      }
    }
  } catch (const eigennet::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return eigennet::kExitConfig;
  }

  if (*train) return eigennet::cmd_train(run);
  if (*sweep) return eigennet::cmd_sweep_lambda(run, spec);
  if (*layer) return eigennet::cmd_layer_loss(run);
  if (*speed) return eigennet::cmd_speedup(run, steps);
  return eigennet::kExitConfig;
}
