// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment commands behind the eigennet CLI: train, sweep-lambda,
// layer-loss and speedup. Each command returns a process exit status.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "eigennet/checkpoint.hpp"
#include "eigennet/data.hpp"
#include "eigennet/errors.hpp"
#include "eigennet/model.hpp"
#include "eigennet/trainers.hpp"

namespace eigennet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;

inline constexpr const char* kMetricsHeader =
    "epoch,block,l_cls,l_orth,l_total,test_acc,step_ms,orth_drift";

inline std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("EIGENNET_DATA_DIR"); env && *env) return env;
  return "data";
}

struct RunConfig {
  TrainConfig train;
  std::string dataset = "mnist";  // mnist | cifar10 | synth
  std::filesystem::path data_dir = default_data_dir();
  std::string preset = "mlp-4block";
  std::filesystem::path out_dir = "runs";
  std::size_t checkpoint_interval = 0;  // epochs; 0 keeps only the final one
  std::size_t train_limit = 0;          // 0 uses the full split
  std::size_t test_limit = 0;
  std::size_t synth_dims = 32;
  std::size_t synth_train_per_class = 200;
  std::size_t synth_test_per_class = 50;
  double synth_separation = 6.0;

  void validate() const {
    train.validate();
    if (dataset != "mnist" && dataset != "cifar10" && dataset != "synth") {
      throw ConfigError("unknown dataset '" + dataset +
                        "' (expected mnist, cifar10 or synth)");
    }
    if (preset != "mlp-4block" && preset != "cnn-4block") {
      throw ConfigError("unknown preset '" + preset +
                        "' (expected mlp-4block or cnn-4block)");
    }
    if (out_dir.empty()) throw ConfigError("output directory must not be empty");
    if (dataset != "synth" && !std::filesystem::is_directory(data_dir)) {
      throw ConfigError("data directory '" + data_dir.string() + "' does not exist");
    }
    if (synth_dims == 0 || synth_train_per_class == 0 || synth_test_per_class == 0 ||
        !(synth_separation > 0.0)) {
      throw ConfigError("synthetic dataset settings must be positive");
    }
  }
};

struct SweepSpec {
  std::vector<double> grid{0.0, 1e-5, 1e-4, 2e-4, 1e-3, 4e-3, 1e-2};
  std::size_t epochs = 15;
  double fraction = 0.1;  // of the training split

  void validate() const {
    if (grid.empty()) throw ConfigError("lambda grid is empty");
    for (double l : grid) {
      if (!(l >= 0.0 && l <= 0.01)) {
        throw ConfigError("lambda " + std::to_string(l) +
                          " lies outside the swept interval [0, 0.01]");
      }
    }
    if (epochs == 0) throw ConfigError("sweep epochs must be >= 1");
    if (!(fraction > 0.0 && fraction <= 1.0)) {
      throw ConfigError("dataset fraction must lie in (0, 1]");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
}

inline std::size_t parse_count(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used == value.size() && v >= 0) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw ConfigError("'" + key + "' expects a non-negative integer, got '" +
                    value + "'");
}

}  // namespace detail

/// Applies one `key = value` setting. Dashes and underscores are
/// interchangeable in keys.
inline void apply_setting(RunConfig& run, SweepSpec& sweep, std::string key,
                          const std::string& value) {
  for (char& c : key) {
    if (c == '-') c = '_';
  }
  auto& t = run.train;
  if (key == "mode") {
    if (value == "global") t.mode = TrainMode::kGlobal;
    else if (value == "local") t.mode = TrainMode::kLocal;
    else throw ConfigError("mode must be global or local, got '" + value + "'");
  } else if (key == "lambda") {
    t.lambda = detail::parse_double(key, value);
  } else if (key == "lr" || key == "learning_rate") {
    t.optim.learning_rate = detail::parse_double(key, value);
  } else if (key == "optimizer") {
    if (value == "adamw") t.optim.rule = UpdateRule::kAdaptiveDecoupled;
    else if (value == "sgd") t.optim.rule = UpdateRule::kSgdMomentum;
    else throw ConfigError("optimizer must be adamw or sgd, got '" + value + "'");
  } else if (key == "momentum") {
    t.optim.momentum = detail::parse_double(key, value);
  } else if (key == "weight_decay") {
    t.optim.weight_decay = detail::parse_double(key, value);
  } else if (key == "clip_norm") {
    t.optim.clip_norm = detail::parse_double(key, value);
  } else if (key == "epochs") {
    t.epochs = detail::parse_count(key, value);
  } else if (key == "batch_size") {
    t.batch_size = detail::parse_count(key, value);
  } else if (key == "workers") {
    t.workers = detail::parse_count(key, value);
  } else if (key == "seed") {
    t.seed = detail::parse_count(key, value);
  } else if (key == "dataset") {
    run.dataset = value;
  } else if (key == "data_dir") {
    run.data_dir = value;
  } else if (key == "out_dir") {
    run.out_dir = value;
  } else if (key == "preset") {
    run.preset = value;
  } else if (key == "checkpoint_interval") {
    run.checkpoint_interval = detail::parse_count(key, value);
  } else if (key == "train_limit") {
    run.train_limit = detail::parse_count(key, value);
  } else if (key == "test_limit") {
    run.test_limit = detail::parse_count(key, value);
  } else if (key == "synth_dims") {
    run.synth_dims = detail::parse_count(key, value);
  } else if (key == "synth_separation") {
    run.synth_separation = detail::parse_double(key, value);
  } else if (key == "grid") {
    sweep.grid.clear();
    std::stringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) {
      sweep.grid.push_back(detail::parse_double(key, detail::trim(item)));
    }
  } else if (key == "sweep_epochs") {
    sweep.epochs = detail::parse_count(key, value);
  } else if (key == "fraction") {
    sweep.fraction = detail::parse_double(key, value);
  } else {
    throw ConfigError("unknown setting '" + key + "'");
  }
}

/// Flat `key = value` file; '#' starts a comment.
inline void load_config_file(const std::filesystem::path& path, RunConfig& run,
                             SweepSpec& sweep) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.resize(hash);
    }
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) +
                        ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(number) +
                        ": empty key");
    }
    apply_setting(run, sweep, key, value);
  }
}

struct DataSplits {
  Dataset train;
  Dataset test;
};

inline DataSplits load_data(const RunConfig& run) {
  DataSplits d;
  if (run.dataset == "synth") {
    const std::size_t classes = 10;
    const Dataset all =
        synth_blobs(classes, run.synth_dims,
                    run.synth_train_per_class + run.synth_test_per_class,
                    run.synth_separation, run.train.seed);
    // Samples cycle through the classes, so both slices stay balanced.
    const std::size_t n_train = run.synth_train_per_class * classes;
    d.train = take(all, n_train);
    d.test = all;
    d.test.labels.erase(d.test.labels.begin(),
                        d.test.labels.begin() + static_cast<long>(n_train));
    d.test.pixels.erase(
        d.test.pixels.begin(),
        d.test.pixels.begin() + static_cast<long>(n_train * all.sample_size()));
  } else {
    auto pick = [&](const char* sub) {
      const auto nested = run.data_dir / sub;
      return std::filesystem::is_directory(nested) ? nested : run.data_dir;
    };
    auto require = [](const std::filesystem::path& p) {
      if (!std::filesystem::exists(p)) {
        throw ConfigError("missing data file '" + p.string() + "'");
      }
    };
    if (run.dataset == "mnist") {
      const auto dir = pick("mnist");
      for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                            "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}) {
        require(dir / f);
      }
      d.train = load_mnist_dir(dir, true);
      d.test = load_mnist_dir(dir, false);
    } else {
      const auto dir = pick("cifar-10-batches-bin");
      require(dir / "data_batch_1.bin");
      require(dir / "test_batch.bin");
      d.train = load_cifar10_dir(dir, true);
      d.test = load_cifar10_dir(dir, false);
    }
  }
  if (run.train_limit > 0) d.train = take(d.train, run.train_limit);
  if (run.test_limit > 0) d.test = take(d.test, run.test_limit);
  return d;
}

inline Model build_model(const RunConfig& run, const Dataset& data) {
  const InputGeometry input{data.channels, data.height, data.width};
  try {
    return Model::build(preset(run.preset, input, data.classes), run.train.seed);
  } catch (const GeometryError& e) {
    throw ConfigError("preset '" + run.preset + "' does not fit " + data.name +
                      " inputs: " + e.what());
  }
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : "";
}

/// metrics.csv writer; appending to a file with another header is an error.
class MetricsCsv {
 public:
  MetricsCsv(const std::filesystem::path& path, bool append) {
    const bool existing = append && std::filesystem::exists(path) &&
                          std::filesystem::file_size(path) > 0;
    if (existing) {
      std::ifstream in(path);
      std::string header;
      std::getline(in, header);
      if (header != kMetricsHeader) {
        throw FormatError(path.string() + ": header '" + header +
                          "' does not match '" + kMetricsHeader + "'");
      }
    }
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw Error("cannot write " + path.string());
    if (!existing) out_ << kMetricsHeader << "\n";
  }

  void write(const MetricsRecord& rec) {
    for (std::size_t b = 0; b < rec.blocks.size(); ++b) {
      const auto& m = rec.blocks[b];
      out_ << rec.epoch << "," << b + 1 << "," << format_optional(m.l_cls) << ","
           << format_number(m.l_orth) << "," << format_optional(m.l_total) << ","
           << format_optional(m.test_acc) << "," << format_number(rec.step_ms)
           << "," << format_number(m.drift) << "\n";
    }
    out_.flush();
  }

 private:
  std::ofstream out_;
};

/// Runs `body`, mapping failures to exit statuses with a message on stderr.
template <typename Body>
int guarded(const char* command, Body&& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    std::cerr << command << ": diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const ConfigError& e) {
    std::cerr << command << ": config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << command << ": unexpected failure: " << e.what() << "\n";
    return kExitFailure;
  }
}

/// train: metrics.csv plus checkpoints under out_dir.
inline int cmd_train(const RunConfig& run, std::ostream& log = std::cout) {
  return guarded("train", [&] {
    run.validate();
    const auto data = load_data(run);
    Model model = build_model(run, data.train);
    std::filesystem::create_directories(run.out_dir);
    MetricsCsv csv(run.out_dir / "metrics.csv", /*append=*/false);
    auto observer = [&](const MetricsRecord& rec) {
      csv.write(rec);
      log << "epoch " << rec.epoch << " test_acc " << format_number(rec.test_accuracy)
          << " drift " << format_number(rec.drift) << " step_ms "
          << format_number(rec.step_ms) << "\n";
      if (run.checkpoint_interval > 0 && rec.epoch % run.checkpoint_interval == 0) {
        save_checkpoint(model, run.out_dir /
                                   ("checkpoint-epoch" + std::to_string(rec.epoch) +
                                    ".enn"));
      }
    };
    try {
      train(model, data.train, &data.test, run.train, observer);
    } catch (const DivergenceError& e) {
      if (!e.records().empty()) csv.write(e.records().back());
      throw;
    }
    save_checkpoint(model, run.out_dir / "checkpoint-final.enn");
    return kExitOk;
  });
}

struct SweepRow {
  double lambda = 0.0;
  std::optional<double> combined;  // empty when the run failed
  double val_cls = 0.0;
  double val_orth = 0.0;
  std::string status = "ok";
};

inline std::string sweep_csv_header() { return "lambda,val_combined,val_cls,val_orth,status"; }

/// One short-budget run per lambda on the same seed and data slice; the
/// validation split is the held-out test split.
inline std::vector<SweepRow> run_sweep(const RunConfig& run, const SweepSpec& sweep,
                                       std::ostream& log = std::cout) {
  sweep.validate();
  run.validate();
  auto data = load_data(run);
  const auto n = static_cast<std::size_t>(
      std::max(1.0, std::floor(sweep.fraction * static_cast<double>(data.train.size()))));
  const Dataset train_slice = take(data.train, n);
  std::vector<SweepRow> rows;
  for (double lambda : sweep.grid) {
    SweepRow row;
    row.lambda = lambda;
    TrainConfig cfg = run.train;
    cfg.lambda = lambda;
    cfg.epochs = sweep.epochs;
    try {
      Model model = build_model(run, train_slice);
      train(model, train_slice, nullptr, cfg);
      row.val_cls = evaluate_loss(model, data.test, cfg.eval_batch_size);
      row.val_orth = total_orth_penalty(model);
      row.combined = row.val_cls + lambda * row.val_orth;
      if (!std::isfinite(*row.combined)) {
        row.combined.reset();
        row.status = "diverged";
      }
    } catch (const DivergenceError& e) {
      row.status = "diverged";
    }
    log << "lambda " << format_number(lambda) << " combined "
        << format_optional(row.combined) << " cls " << format_number(row.val_cls)
        << " orth " << format_number(row.val_orth) << " " << row.status << "\n";
    rows.push_back(row);
  }
  return rows;
}

inline int cmd_sweep_lambda(const RunConfig& run, const SweepSpec& sweep,
                            std::ostream& log = std::cout) {
  return guarded("sweep-lambda", [&] {
    const auto rows = run_sweep(run, sweep, log);
    std::filesystem::create_directories(run.out_dir);
    std::ofstream out(run.out_dir / "sweep.csv", std::ios::trunc);
    out << sweep_csv_header() << "\n";
    for (const auto& r : rows) {
      out << format_number(r.lambda) << "," << format_optional(r.combined) << ","
          << format_number(r.val_cls) << "," << format_number(r.val_orth) << ","
          << r.status << "\n";
    }
    return kExitOk;
  });
}

/// Per-epoch local classification loss of every head (epochs x blocks).
inline std::vector<std::vector<double>> run_layer_loss(const RunConfig& run,
                                                       std::ostream& log = std::cout) {
  run.validate();
  if (run.train.mode != TrainMode::kLocal) {
    throw ConfigError("layer-loss needs local mode (global-mode heads are untrained)");
  }
  const auto data = load_data(run);
  Model model = build_model(run, data.train);
  if (model.num_blocks() < 2) throw ConfigError("layer-loss needs at least two blocks");
  std::vector<std::vector<double>> matrix;
  train_local(model, data.train, nullptr, run.train, [&](const MetricsRecord& rec) {
    std::vector<double> row;
    log << "epoch " << rec.epoch;
    for (const auto& b : rec.blocks) {
      row.push_back(*b.l_cls);
      log << " " << format_number(*b.l_cls);
    }
    log << "\n";
    matrix.push_back(std::move(row));
  });
  return matrix;
}

inline int cmd_layer_loss(const RunConfig& run, std::ostream& log = std::cout) {
  return guarded("layer-loss", [&] {
    const auto matrix = run_layer_loss(run, log);
    std::filesystem::create_directories(run.out_dir);
    std::ofstream out(run.out_dir / "layer_loss.csv", std::ios::trunc);
    out << "epoch";
    const std::size_t blocks = matrix.empty() ? 0 : matrix.front().size();
    for (std::size_t b = 0; b < blocks; ++b) out << ",block" << b + 1;
    out << "\n";
    for (std::size_t e = 0; e < matrix.size(); ++e) {
      out << e + 1;
      for (double v : matrix[e]) out << "," << format_number(v);
      out << "\n";
    }
    return kExitOk;
  });
}

struct SpeedupRow {
  TrainMode mode = TrainMode::kGlobal;
  std::size_t workers = 1;
  TimingSummary timing;
  double ratio = 1.0;  // step time relative to global
};

struct SpeedupReport {
  std::vector<SpeedupRow> rows;
  ParameterCounts params;
  std::string hardware;
};

inline std::string describe_hardware() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  for (std::string line; std::getline(cpuinfo, line);) {
    if (line.rfind("model name", 0) == 0) {
      model = detail::trim(line.substr(line.find(':') + 1));
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " hardware threads";
}

inline SpeedupReport run_speedup(const RunConfig& run, std::size_t steps = 20,
                                 std::ostream& log = std::cout) {
  run.validate();
  const auto data = load_data(run);
  const Model model = build_model(run, data.train);
  const std::vector<std::size_t> worker_counts{1, 2, 4};
  if (model.num_blocks() != worker_counts.back()) {
    throw ConfigError("speedup needs a preset with " +
                      std::to_string(worker_counts.back()) + " blocks, got " +
                      std::to_string(model.num_blocks()));
  }
  SpeedupReport report;
  report.params = count_parameters(model);
  report.hardware = describe_hardware();
  TrainConfig cfg = run.train;
  cfg.workers = 1;
  SpeedupRow global{TrainMode::kGlobal, 1,
                    measure_step_time(model, data.train, cfg, TrainMode::kGlobal, steps)};
  report.rows.push_back(global);
  for (std::size_t w : worker_counts) {
    cfg.workers = w;
    SpeedupRow row{TrainMode::kLocal, w,
                   measure_step_time(model, data.train, cfg, TrainMode::kLocal, steps)};
    row.ratio = row.timing.median_ms / global.timing.median_ms;
    report.rows.push_back(row);
  }
  for (const auto& r : report.rows) {
    log << to_string(r.mode) << " workers " << r.workers << " median_ms "
        << format_number(r.timing.median_ms) << " ratio " << format_number(r.ratio)
        << "\n";
  }
  return report;
}

inline int cmd_speedup(const RunConfig& run, std::size_t steps = 20,
                       std::ostream& log = std::cout) {
  return guarded("speedup", [&] {
    const auto report = run_speedup(run, steps, log);
    std::filesystem::create_directories(run.out_dir);
    std::ofstream out(run.out_dir / "speedup.csv", std::ios::trunc);
    out << "mode,workers,median_ms,p10_ms,p90_ms,ratio\n";
    for (const auto& r : report.rows) {
      out << to_string(r.mode) << "," << r.workers << ","
          << format_number(r.timing.median_ms) << "," << format_number(r.timing.p10_ms)
          << "," << format_number(r.timing.p90_ms) << "," << format_number(r.ratio)
          << "\n";
    }
    std::ofstream txt(run.out_dir / "speedup_report.txt", std::ios::trunc);
    const auto& p = report.params;
    txt << "hardware: " << report.hardware << "\n"
        << "stored factor entries: " << p.stored_factors << "\n"
        << "effective factor dof: " << p.effective << "\n"
        << "dense weight count: " << p.dense << "\n"
        << "biases: " << p.biases << "\n"
        << "head parameters: " << p.heads << "\n";
    log << "hardware: " << report.hardware << "\n"
        << "params stored " << p.stored_factors << " effective " << p.effective
        << " dense " << p.dense << "\n";
    return kExitOk;
  });
}

}  // namespace eigennet
