// Copyright 2026 The eigennet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

#include "eigennet/errors.hpp"

namespace eigennet {

/// Fixed set of threads executing batches of independent tasks.
///
/// run() returns once every task of the batch has finished, which makes it
/// the step barrier. With one worker tasks run inline on the caller.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers) : workers_(workers) {
    if (workers == 0) throw ConfigError("worker count must be >= 1");
    if (workers == 1) return;
    threads_.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { loop(); });
    }
  }

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  std::size_t size() const { return workers_; }

  /// Runs every task, waits for all of them, then rethrows the first
  /// exception (by task order) if any task failed.
  void run(std::vector<std::function<void()>> tasks) {
    std::vector<std::exception_ptr> errors(tasks.size());
    if (threads_.empty()) {
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        try {
          tasks[i]();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    } else {
      std::size_t remaining = tasks.size();
      std::condition_variable done;
      {
        std::lock_guard lock(mutex_);
        for (std::size_t i = 0; i < tasks.size(); ++i) {
          queue_.push([&, i] {
            try {
              tasks[i]();
            } catch (...) {
              errors[i] = std::current_exception();
            }
            std::lock_guard inner(mutex_);
            if (--remaining == 0) done.notify_all();
          });
        }
      }
      wake_.notify_all();
      std::unique_lock lock(mutex_);
      done.wait(lock, [&] { return remaining == 0; });
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

 private:
  void loop() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
        if (stopping_ && queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop();
      }
      job();
    }
  }

  std::size_t workers_;
  std::vector<std::thread> threads_;
  std::queue<std::function<void()>> queue_;
  std::mutex mutex_;
  std::condition_variable wake_;
  bool stopping_ = false;
};

}  // namespace eigennet
