#include "logonet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace logonet {
namespace {

class WorkerPool {
 public:
  explicit WorkerPool(int workers) {
    for (int i = 0; i < workers; ++i) {
      threads_.emplace_back([this] { loop(); });
    }
  }

  ~WorkerPool() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    wake_.notify_all();
    for (auto& t : threads_) t.join();
  }

  int size() const { return static_cast<int>(threads_.size()); }

  void run(int64_t count, const std::function<void(int64_t)>& body) {
    std::unique_lock lock(mutex_);
    body_ = &body;
    count_ = count;
    next_.store(0);
    pending_ = static_cast<int>(threads_.size());
    error_ = nullptr;
    ++generation_;
    wake_.notify_all();
    lock.unlock();

    drain();

    lock.lock();
    done_.wait(lock, [this] { return pending_ == 0; });
    body_ = nullptr;
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void drain() {
    for (;;) {
      const int64_t i = next_.fetch_add(1);
      if (i >= count_) return;
      try {
        (*body_)(i);
      } catch (...) {
        std::lock_guard lock(error_mutex_);
        if (!error_) error_ = std::current_exception();
      }
    }
  }

  void loop() {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock lock(mutex_);
        wake_.wait(lock, [&] { return stopping_ || generation_ != seen; });
        if (stopping_) return;
        seen = generation_;
      }
      drain();
      {
        std::lock_guard lock(mutex_);
        if (--pending_ == 0) done_.notify_all();
      }
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::mutex error_mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(int64_t)>* body_ = nullptr;
  int64_t count_ = 0;
  std::atomic<int64_t> next_{0};
  int pending_ = 0;
  uint64_t generation_ = 0;
  bool stopping_ = false;
  std::exception_ptr error_;
};

std::mutex g_config_mutex;
int g_threads = 1;
std::unique_ptr<WorkerPool> g_pool;
thread_local bool t_inside_parallel = false;

}  // namespace

void set_num_threads(int threads) {
  std::lock_guard lock(g_config_mutex);
  g_threads = std::max(1, threads);
  g_pool.reset();
  if (g_threads > 1) g_pool = std::make_unique<WorkerPool>(g_threads - 1);
}

int num_threads() { return g_threads; }

void parallel_for(int64_t count, const std::function<void(int64_t)>& body) {
  if (count <= 0) return;
  if (g_threads <= 1 || count == 1 || t_inside_parallel || !g_pool) {
    for (int64_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::lock_guard lock(g_config_mutex);
  const auto guarded = [&](int64_t i) {
    const bool was_inside = t_inside_parallel;
    t_inside_parallel = true;
    try {
      body(i);
    } catch (...) {
      t_inside_parallel = was_inside;
      throw;
    }
    t_inside_parallel = was_inside;
  };
  g_pool->run(count, guarded);
}

}  // namespace logonet
