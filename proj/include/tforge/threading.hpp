#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace tforge::threading {

// Work-sharing pool. Tasks are indexed 0..count-1 and each index is executed
// exactly once with results written to caller-owned disjoint slots, so the
// outcome is bitwise independent of the number of workers.
class ThreadPool {
 public:
  explicit ThreadPool(unsigned workers) {
    unsigned extra = workers > 1 ? workers - 1 : 0;  // caller participates
    for (unsigned i = 0; i < extra; ++i)
      threads_.emplace_back([this] { worker_loop(); });
  }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  ~ThreadPool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  unsigned size() const { return static_cast<unsigned>(threads_.size()) + 1; }

  void run(std::size_t count, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    if (threads_.empty() || count == 1 || in_task_) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
      return;
    }
    std::unique_lock<std::mutex> lk(mu_);
    fn_ = &fn;
    next_.store(0, std::memory_order_relaxed);
    count_ = count;
    pending_ = count;
    error_ = nullptr;
    ++generation_;
    lk.unlock();
    cv_.notify_all();

    drain();

    lk.lock();
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    fn_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void drain() {
    in_task_ = true;
    while (true) {
      std::size_t i = next_.fetch_add(1, std::memory_order_relaxed);
      if (i >= count_) break;
      try {
        (*fn_)(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu_);
        if (!error_) error_ = std::current_exception();
      }
      if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
        std::lock_guard<std::mutex> lk(mu_);
        done_cv_.notify_all();
      }
    }
    in_task_ = false;
  }

  void worker_loop() {
    std::uint64_t seen = 0;
    while (true) {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      lk.unlock();
      drain();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  const std::function<void(std::size_t)>* fn_ = nullptr;
  std::atomic<std::size_t> next_{0};
  std::atomic<std::size_t> pending_{0};
  std::size_t count_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
  static thread_local bool in_task_;
};

inline thread_local bool ThreadPool::in_task_ = false;

namespace detail {
inline std::unique_ptr<ThreadPool>& pool_slot() {
  static std::unique_ptr<ThreadPool> pool;
  return pool;
}
inline unsigned default_workers() {
  if (const char* env = std::getenv("TFORGE_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}
}  // namespace detail

inline ThreadPool& global_pool() {
  auto& slot = detail::pool_slot();
  if (!slot) slot = std::make_unique<ThreadPool>(detail::default_workers());
  return *slot;
}

// Test hook; 0 restores the default size. Not safe while work is in flight.
inline void set_global_pool_size(unsigned workers) {
  detail::pool_slot() =
      std::make_unique<ThreadPool>(workers ? workers : detail::default_workers());
}

inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  global_pool().run(count, fn);
}

// Chunked variant for elementwise loops. Chunk geometry depends only on
// `count`, never on the worker count.
inline void parallel_chunks(std::size_t count, std::size_t chunk,
                            const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  std::size_t n_chunks = (count + chunk - 1) / chunk;
  parallel_for(n_chunks, [&](std::size_t ci) {
    std::size_t b = ci * chunk;
    std::size_t e = b + chunk < count ? b + chunk : count;
    fn(b, e);
  });
}

}  // namespace tforge::threading
