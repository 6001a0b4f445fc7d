#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "sppnet/errors.hpp"

namespace sppnet::pipeline {

/// Bounded single-producer/single-consumer queue with blocking push/pop.
///
/// Waiters spin briefly when the host has spare hardware threads, then park
/// on a condition variable. Parked waiters re-check `abort` every millisecond
/// and throw PipelineError once it is set.
template <typename T>
class SpscQueue {
public:
  explicit SpscQueue(std::size_t capacity, const std::atomic<bool>* abort = nullptr)
      : slots_(capacity), abort_(abort), spin_(std::thread::hardware_concurrency() > 1 ? 2000 : 0) {
    if (capacity == 0) throw DomainError("queue capacity must be >= 1");
  }

  std::size_t capacity() const { return slots_.size(); }
  std::size_t size() const { return tail_.load() - head_.load(); }

  void push(T value) {
    const std::size_t tail = tail_.load(std::memory_order_relaxed);
    wait_until([&] { return tail - head_.load() < slots_.size(); });
    slots_[tail % slots_.size()] = std::move(value);
    tail_.store(tail + 1);
    wake();
  }

  T pop() {
    const std::size_t head = head_.load(std::memory_order_relaxed);
    wait_until([&] { return tail_.load() > head; });
    auto& slot = slots_[head % slots_.size()];
    T value = std::move(*slot);
    slot.reset();
    head_.store(head + 1);
    wake();
    return value;
  }

private:
  template <typename Pred>
  void wait_until(Pred ready) {
    for (unsigned i = 0; i < spin_; ++i) {
      if (ready()) return;
    }
    if (ready()) return;
    waiters_.fetch_add(1);
    std::unique_lock lock(mutex_);
    while (!ready()) {
      if (abort_ && abort_->load()) {
        waiters_.fetch_sub(1);
        throw PipelineError("queue wait aborted");
      }
      cv_.wait_for(lock, std::chrono::milliseconds(1));
    }
    waiters_.fetch_sub(1);
  }

  void wake() {
    if (waiters_.load() > 0) {
      std::lock_guard lock(mutex_);
      cv_.notify_all();
    }
  }

  std::vector<std::optional<T>> slots_;
  std::atomic<std::size_t> head_{0};
  std::atomic<std::size_t> tail_{0};
  std::atomic<int> waiters_{0};
  std::mutex mutex_;
  std::condition_variable cv_;
  const std::atomic<bool>* abort_;
  unsigned spin_;
};

}  // namespace sppnet::pipeline
