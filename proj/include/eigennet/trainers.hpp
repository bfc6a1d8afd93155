// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end training through the whole stack (one global loss, one backward
// pass) and block-local training (detached block inputs, one loss per block,
// block updates run concurrently on a worker pool).

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eigennet/data.hpp"
#include "eigennet/errors.hpp"
#include "eigennet/model.hpp"
#include "eigennet/ops.hpp"
#include "eigennet/optim.hpp"
#include "eigennet/tape.hpp"
#include "eigennet/worker_pool.hpp"

namespace eigennet {

enum class TrainMode { kGlobal, kLocal };

inline std::string to_string(TrainMode mode) {
  return mode == TrainMode::kGlobal ? "global" : "local";
}

struct TrainConfig {
  TrainMode mode = TrainMode::kLocal;
  double lambda = kDefaultOrthWeight;
  OptimConfig optim;
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  std::size_t workers = 1;  // local mode only
  std::uint64_t seed = 0;
  std::size_t eval_batch_size = 1000;

  void validate() const {
    optim.validate();
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (workers == 0) throw ConfigError("worker count must be >= 1");
    if (eval_batch_size == 0) throw ConfigError("eval batch size must be >= 1");
  }
};

struct BlockMetrics {
  std::optional<double> l_cls;    // absent for untrained heads (global mode)
  double l_orth = 0.0;
  std::optional<double> l_total;
  std::optional<double> test_acc;
  double drift = 0.0;             // max ||F^T F - I||_F over the block
};

struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based
  std::vector<BlockMetrics> blocks;
  double test_accuracy = 0.0;  // final head
  double step_ms = 0.0;        // mean wall time per optimizer step
  double drift = 0.0;          // max over blocks
  bool diverged = false;
  std::string diagnostic;
};

/// Non-finite loss or gradient. Carries the records up to and including a
/// diagnostic record for the failing epoch.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<MetricsRecord> records)
      : Error(what), records_(std::move(records)) {}
  const std::vector<MetricsRecord>& records() const { return records_; }

 private:
  std::vector<MetricsRecord> records_;
};

/// Losses observed during one step (before its update), per block.
struct StepLosses {
  std::vector<std::optional<double>> cls;
  std::vector<double> orth;
  std::vector<std::optional<double>> total;
};

namespace detail {

inline bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

inline void watch_all(Tape& tape, const ParameterList& params) {
  for (const auto& p : params) tape.watch(p.tensor);
}

inline void zero_grads(ParameterList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

inline void require_finite_grads(const ParameterList& params) {
  for (const auto& p : params) {
    if (!all_finite(p.tensor.grad())) {
      throw DivergenceError("non-finite gradient in '" + p.name + "'", {});
    }
  }
}

}  // namespace detail

/// One optimizer step per batch over a single global objective.
class GlobalTrainer {
 public:
  GlobalTrainer(Model& model, const TrainConfig& cfg)
      : model_(&model), cfg_(cfg) {
    cfg_.validate();
    for (std::size_t b = 0; b < model.num_blocks(); ++b) {
      auto p = model.block_layer_parameters(b);
      params_.insert(params_.end(), p.begin(), p.end());
    }
    auto head = model.head_parameters(model.num_blocks() - 1);
    params_.insert(params_.end(), head.begin(), head.end());
  }

  StepLosses step(const Batch& batch) {
    const std::size_t blocks = model_->num_blocks();
    StepLosses losses{std::vector<std::optional<double>>(blocks),
                      std::vector<double>(blocks),
                      std::vector<std::optional<double>>(blocks)};
    tape_.clear();
    detail::watch_all(tape_, params_);
    const Tensor logits = model_->predict(batch.x);
    const Tensor task = softmax_cross_entropy(logits, batch.y);
    Tensor orth_sum = block_orth_penalty(model_->block(0));
    losses.orth[0] = orth_sum.item();
    for (std::size_t b = 1; b < blocks; ++b) {
      const Tensor orth = block_orth_penalty(model_->block(b));
      losses.orth[b] = orth.item();
      orth_sum = add(orth_sum, orth);
    }
    const Tensor loss = global_loss(task, orth_sum, cfg_.lambda);
    losses.cls[blocks - 1] = task.item();
    losses.total[blocks - 1] = loss.item();
    if (!std::isfinite(loss.item())) {
      tape_.clear();
      throw DivergenceError("non-finite global loss", {});
    }
    detail::zero_grads(params_);
    tape_.backward(loss);
    tape_.clear();
    detail::require_finite_grads(params_);
    eigennet::step(params_, state_, cfg_.optim);
    return losses;
  }

  const ParameterList& parameters() const { return params_; }

 private:
  Model* model_;
  TrainConfig cfg_;
  ParameterList params_;
  OptimState state_;
  Tape tape_;
};

/// Block-local training: every block sees the detached output of its
/// predecessor and is updated from its own loss only.
class LocalTrainer {
 public:
  LocalTrainer(Model& model, const TrainConfig& cfg)
      : model_(&model), cfg_(cfg), pool_(cfg.workers) {
    cfg_.validate();
    for (std::size_t b = 0; b < model.num_blocks(); ++b) {
      params_.push_back(model.block_parameters(b));
      states_.emplace_back();
      tapes_.push_back(std::make_unique<Tape>());
    }
  }

  StepLosses step(const Batch& batch) {
    const std::size_t blocks = model_->num_blocks();
    StepLosses losses{std::vector<std::optional<double>>(blocks),
                      std::vector<double>(blocks),
                      std::vector<std::optional<double>>(blocks)};

    // Forward sweep: block b consumes detach(h_{b-1}).
    std::vector<Tensor> logits(blocks);
    Tensor input = batch.x;
    for (std::size_t b = 0; b < blocks; ++b) {
      tapes_[b]->clear();
      detail::watch_all(*tapes_[b], params_[b]);
      const Tensor h = block_forward(model_->block(b), input);
      logits[b] = head_forward(model_->block(b).head, h);
      if (b + 1 < blocks) input = detach(h);
    }

    // Local losses and gradients, concurrently across blocks. Nothing is
    // applied until every block has finished.
    std::vector<std::function<void()>> grads;
    for (std::size_t b = 0; b < blocks; ++b) {
      grads.emplace_back([&, b] {
        const Tensor cls = softmax_cross_entropy(logits[b], batch.y);
        const Tensor orth = block_orth_penalty(model_->block(b));
        const Tensor loss = local_loss(cls, orth, cfg_.lambda);
        losses.cls[b] = cls.item();
        losses.orth[b] = orth.item();
        losses.total[b] = loss.item();
        if (!std::isfinite(loss.item())) {
          throw DivergenceError(
              "non-finite local loss in block " + std::to_string(b + 1), {});
        }
        detail::zero_grads(params_[b]);
        tapes_[b]->backward(loss);
        detail::require_finite_grads(params_[b]);
      });
    }
    try {
      pool_.run(std::move(grads));
    } catch (...) {
      clear_tapes();
      throw;
    }
    clear_tapes();

    std::vector<std::function<void()>> updates;
    for (std::size_t b = 0; b < blocks; ++b) {
      updates.emplace_back(
          [&, b] { eigennet::step(params_[b], states_[b], cfg_.optim); });
    }
    pool_.run(std::move(updates));
    return losses;
  }

  const std::vector<ParameterList>& parameters() const { return params_; }

 private:
  void clear_tapes() {
    for (auto& t : tapes_) t->clear();
  }

  Model* model_;
  TrainConfig cfg_;
  WorkerPool pool_;
  std::vector<ParameterList> params_;
  std::vector<OptimState> states_;
  std::vector<std::unique_ptr<Tape>> tapes_;
};

/// Gradient norms of every block's parameters after backpropagating each
/// block's local loss separately through one shared tape. Entry [k][b] is
/// the L2 norm of d L_k / d(params of block b); off-diagonal entries vanish
/// when the detach cut holds.
inline std::vector<std::vector<double>> cross_block_gradient_norms(
    Model& model, const Batch& batch, double lambda) {
  const std::size_t blocks = model.num_blocks();
  std::vector<ParameterList> params;
  for (std::size_t b = 0; b < blocks; ++b) {
    params.push_back(model.block_parameters(b));
  }
  std::vector<std::vector<double>> norms(blocks, std::vector<double>(blocks));
  for (std::size_t k = 0; k < blocks; ++k) {
    Tape tape;
    for (auto& p : params) detail::watch_all(tape, p);
    Tensor input = batch.x;
    Tensor loss;
    for (std::size_t b = 0; b <= k; ++b) {
      const Tensor h = block_forward(model.block(b), input);
      if (b == k) {
        const Tensor cls =
            softmax_cross_entropy(head_forward(model.block(b).head, h), batch.y);
        loss = local_loss(cls, block_orth_penalty(model.block(b)), lambda);
      }
      input = detach(h);
    }
    for (auto& p : params) detail::zero_grads(p);
    tape.backward(loss);
    for (std::size_t b = 0; b < blocks; ++b) {
      double sq = 0.0;
      for (const auto& p : params[b]) {
        for (double g : p.tensor.grad()) sq += g * g;
      }
      norms[k][b] = std::sqrt(sq);
    }
  }
  for (auto& p : params) {
    for (auto& param : p) param.tensor.clear_grad();
  }
  return norms;
}

/// Accuracy of every head (block order) on `data`; no tape is recorded.
inline std::vector<double> evaluate_heads(const Model& model,
                                          const Dataset& data,
                                          std::size_t batch_size = 1000) {
  if (data.size() == 0) throw EvaluationError("cannot evaluate on an empty dataset");
  BatchStream stream(data, std::min(batch_size, data.size()), 0, std::nullopt,
                     /*shuffle=*/false);
  std::vector<std::size_t> correct(model.num_blocks(), 0);
  while (auto batch = stream.next()) {
    const auto logits = model.predict_all(batch->x);
    for (std::size_t h = 0; h < logits.size(); ++h) {
      const std::size_t classes = logits[h].dim(1);
      const auto z = logits[h].data();
      for (std::size_t i = 0; i < batch->y.size(); ++i) {
        const auto row = z.subspan(i * classes, classes);
        const auto best = static_cast<std::size_t>(
            std::max_element(row.begin(), row.end()) - row.begin());
        if (best == batch->y[i]) ++correct[h];
      }
    }
  }
  std::vector<double> acc(correct.size());
  for (std::size_t h = 0; h < acc.size(); ++h) {
    acc[h] = static_cast<double>(correct[h]) / static_cast<double>(data.size());
  }
  return acc;
}

/// Final-head accuracy.
inline double evaluate(const Model& model, const Dataset& data,
                       std::size_t batch_size = 1000) {
  if (data.size() == 0) throw EvaluationError("cannot evaluate on an empty dataset");
  BatchStream stream(data, std::min(batch_size, data.size()), 0, std::nullopt,
                     /*shuffle=*/false);
  std::size_t correct = 0;
  while (auto batch = stream.next()) {
    const Tensor logits = model.predict(batch->x);
    const std::size_t classes = logits.dim(1);
    const auto z = logits.data();
    for (std::size_t i = 0; i < batch->y.size(); ++i) {
      const auto row = z.subspan(i * classes, classes);
      const auto best = static_cast<std::size_t>(
          std::max_element(row.begin(), row.end()) - row.begin());
      if (best == batch->y[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Mean cross-entropy of the final head over `data`.
inline double evaluate_loss(const Model& model, const Dataset& data,
                            std::size_t batch_size = 1000) {
  if (data.size() == 0) throw EvaluationError("cannot evaluate on an empty dataset");
  BatchStream stream(data, std::min(batch_size, data.size()), 0, std::nullopt,
                     /*shuffle=*/false);
  double total = 0.0;
  while (auto batch = stream.next()) {
    const Tensor ce = softmax_cross_entropy(model.predict(batch->x), batch->y);
    total += ce.item() * static_cast<double>(batch->y.size());
  }
  return total / static_cast<double>(data.size());
}

/// Sum of every layer's orthogonality penalty.
inline double total_orth_penalty(const Model& model) {
  double total = 0.0;
  for (const auto& block : model.blocks()) total += block_orth_penalty(block).item();
  return total;
}

using EpochObserver = std::function<void(const MetricsRecord&)>;

namespace detail {

template <typename Trainer>
std::vector<MetricsRecord> run_epochs(Model& model, const Dataset& train,
                                      const Dataset* test,
                                      const TrainConfig& cfg,
                                      const EpochObserver& observer) {
  cfg.validate();
  std::vector<MetricsRecord> records;
  if (cfg.epochs == 0) return records;
  Trainer trainer(model, cfg);
  BatchStream stream(train, std::min(cfg.batch_size, train.size()), cfg.seed);
  const std::size_t blocks = model.num_blocks();
  const bool local = cfg.mode == TrainMode::kLocal;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    stream.start_epoch(epoch - 1);
    MetricsRecord rec;
    rec.epoch = epoch;
    rec.blocks.resize(blocks);
    std::vector<double> cls(blocks, 0.0), orth(blocks, 0.0), total(blocks, 0.0);
    std::size_t steps = 0;
    double elapsed_ms = 0.0;
    while (auto batch = stream.next()) {
      const auto start = std::chrono::steady_clock::now();
      StepLosses losses;
      try {
        losses = trainer.step(*batch);
      } catch (const DivergenceError& e) {
        rec.diverged = true;
        rec.diagnostic = std::string(e.what()) + " at epoch " +
                         std::to_string(epoch) + ", step " +
                         std::to_string(steps + 1);
        records.push_back(rec);
        throw DivergenceError(rec.diagnostic, records);
      }
      elapsed_ms += std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
      for (std::size_t b = 0; b < blocks; ++b) {
        if (losses.cls[b]) cls[b] += *losses.cls[b];
        orth[b] += losses.orth[b];
        if (losses.total[b]) total[b] += *losses.total[b];
      }
      ++steps;
    }
    const double n = static_cast<double>(steps);
    rec.step_ms = elapsed_ms / n;
    std::vector<double> head_acc;
    if (test != nullptr) {
      if (local) {
        head_acc = evaluate_heads(model, *test, cfg.eval_batch_size);
      } else {
        head_acc.assign(blocks, 0.0);
        head_acc.back() = evaluate(model, *test, cfg.eval_batch_size);
      }
      rec.test_accuracy = head_acc.back();
    }
    for (std::size_t b = 0; b < blocks; ++b) {
      auto& bm = rec.blocks[b];
      const bool trained_head = local || b + 1 == blocks;
      bm.l_orth = orth[b] / n;
      if (trained_head) {
        bm.l_cls = cls[b] / n;
        bm.l_total = total[b] / n;
        if (test != nullptr) bm.test_acc = head_acc[b];
      }
      bm.drift = block_orth_drift(model.block(b));
      rec.drift = std::max(rec.drift, bm.drift);
    }
    records.push_back(rec);
    if (observer) observer(rec);
  }
  return records;
}

}  // namespace detail

/// Whole-stack backpropagation of CE(final head) + lambda * sum of penalties.
inline std::vector<MetricsRecord> train_global(Model& model,
                                               const Dataset& train,
                                               const Dataset* test,
                                               TrainConfig cfg,
                                               const EpochObserver& observer = {}) {
  cfg.mode = TrainMode::kGlobal;
  return detail::run_epochs<GlobalTrainer>(model, train, test, cfg, observer);
}

/// Block-local training with detached inputs and concurrent block updates.
inline std::vector<MetricsRecord> train_local(Model& model,
                                              const Dataset& train,
                                              const Dataset* test,
                                              TrainConfig cfg,
                                              const EpochObserver& observer = {}) {
  cfg.mode = TrainMode::kLocal;
  return detail::run_epochs<LocalTrainer>(model, train, test, cfg, observer);
}

inline std::vector<MetricsRecord> train(Model& model, const Dataset& train_set,
                                        const Dataset* test,
                                        const TrainConfig& cfg,
                                        const EpochObserver& observer = {}) {
  return cfg.mode == TrainMode::kGlobal
             ? train_global(model, train_set, test, cfg, observer)
             : train_local(model, train_set, test, cfg, observer);
}

struct TimingSummary {
  double median_ms = 0.0;
  double p10_ms = 0.0;
  double p90_ms = 0.0;
  std::size_t steps = 0;
};

inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

/// Wall-clock per optimizer step on a copy of `model`. The batch stream is a
/// function of cfg.seed only, so every mode sees the same batches.
inline TimingSummary measure_step_time(const Model& model, const Dataset& data,
                                       TrainConfig cfg, TrainMode mode,
                                       std::size_t steps = 20,
                                       std::size_t warmup = 10) {
  cfg.mode = mode;
  cfg.validate();
  if (warmup < 10) throw ConfigError("at least 10 warmup steps are required");
  Model copy = model.clone();
  BatchStream stream(data, std::min(cfg.batch_size, data.size()), cfg.seed);
  std::size_t epoch = 0;
  auto next_batch = [&] {
    auto batch = stream.next();
    if (!batch) {
      stream.start_epoch(++epoch);
      batch = stream.next();
    }
    return *batch;
  };
  std::vector<double> times;
  auto run = [&](auto& trainer) {
    for (std::size_t i = 0; i < warmup + steps; ++i) {
      const Batch batch = next_batch();
      const auto start = std::chrono::steady_clock::now();
      trainer.step(batch);
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
      if (i >= warmup) times.push_back(ms);
    }
  };
  if (mode == TrainMode::kGlobal) {
    GlobalTrainer trainer(copy, cfg);
    run(trainer);
  } else {
    LocalTrainer trainer(copy, cfg);
    run(trainer);
  }
  return {percentile(times, 0.5), percentile(times, 0.1),
          percentile(times, 0.9), times.size()};
}

}  // namespace eigennet
