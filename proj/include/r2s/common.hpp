#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace r2s {

// Error taxonomy. Everything user-facing derives from Error so the CLI can
// map library failures to one exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class InvalidTaskError : public Error { public: using Error::Error; };
class EpisodeFinishedError : public Error { public: using Error::Error; };
class ArityError : public Error { public: using Error::Error; };
class NumericFaultError : public Error { public: using Error::Error; };
class InvalidNoiseError : public Error { public: using Error::Error; };
class PipelineOrderError : public Error { public: using Error::Error; };
class IncompleteEvaluationError : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

namespace detail {
inline thread_local bool tls_in_worker = false;
}

// Fixed-size worker pool. Work is split into chunks whose boundaries depend
// only on the job count, never on the number of workers, and every output
// slot is written by exactly one chunk. Results are therefore identical for
// any pool size, including 1.
class ThreadPool {
 public:
  static ThreadPool& global() {
    static ThreadPool pool;
    return pool;
  }

  explicit ThreadPool(int threads = 0) { start(threads > 0 ? threads : default_threads()); }

  ~ThreadPool() { stop(); }

  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  int threads() const { return static_cast<int>(workers_.size()) + 1; }

  void set_threads(int n) {
    stop();
    start(n > 0 ? n : default_threads());
  }

  // Runs fn(job) for job in [0, jobs). Calls from inside a worker run inline
  // to avoid deadlock on nested parallelism.
  void run_jobs(int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 0) return;
    if (jobs == 1 || workers_.empty() || detail::tls_in_worker) {
      for (int j = 0; j < jobs; ++j) fn(j);
      return;
    }
    auto ctx = std::make_shared<TaskCtx>();
    ctx->jobs = jobs;
    ctx->fn = &fn;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      task_ = ctx;
      generation_++;
    }
    cv_.notify_all();
    work(*ctx);  // the caller participates
    while (ctx->done.load(std::memory_order_acquire) < jobs) std::this_thread::yield();
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (task_ == ctx) task_ = nullptr;
    }
    // Wait until no worker still holds the function pointer.
    while (ctx->active.load(std::memory_order_acquire) > 0) std::this_thread::yield();
  }

 private:
  struct TaskCtx {
    int jobs = 0;
    const std::function<void(int)>* fn = nullptr;
    std::atomic<int> next{0};
    std::atomic<int> done{0};
    std::atomic<int> active{0};
  };

  static void work(TaskCtx& ctx) {
    ctx.active.fetch_add(1, std::memory_order_acq_rel);
    for (;;) {
      const int j = ctx.next.fetch_add(1, std::memory_order_relaxed);
      if (j >= ctx.jobs) break;
      (*ctx.fn)(j);
      ctx.done.fetch_add(1, std::memory_order_acq_rel);
    }
    ctx.active.fetch_sub(1, std::memory_order_acq_rel);
  }

  static int default_threads() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
  }

  void start(int n) {
    stopping_ = false;
    generation_ = 0;
    int extra = n - 1;
    for (int i = 0; i < extra; ++i) {
      workers_.emplace_back([this] {
        detail::tls_in_worker = true;
        std::uint64_t seen = 0;
        for (;;) {
          std::shared_ptr<TaskCtx> ctx;
          {
            std::unique_lock<std::mutex> lock(mutex_);
            cv_.wait(lock, [&] { return stopping_ || (task_ && generation_ != seen); });
            if (stopping_) return;
            seen = generation_;
            ctx = task_;
          }
          if (ctx) work(*ctx);
        }
      });
    }
  }

  void stop() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::shared_ptr<TaskCtx> task_;
  std::uint64_t generation_ = 0;
  bool stopping_ = false;
};

// Parallel loop over [0, n) in `chunks` fixed slices. fn(chunk, begin, end).
template <typename F>
void parallel_chunks(std::int64_t n, int chunks, F&& fn) {
  if (n <= 0) return;
  if (chunks > n) chunks = static_cast<int>(n);
  if (chunks < 1) chunks = 1;
  auto body = [&](int c) {
    std::int64_t begin = n * c / chunks;
    std::int64_t end = n * (c + 1) / chunks;
    fn(c, begin, end);
  };
  ThreadPool::global().run_jobs(chunks, body);
}

// Parallel loop over items, one call per index.
template <typename F>
void parallel_for(std::int64_t n, F&& fn) {
  parallel_chunks(n, static_cast<int>(n > 64 ? 64 : n), [&](int, std::int64_t b, std::int64_t e) {
    for (std::int64_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace r2s
