#include "dsrgan/parallel.hpp"

#include <algorithm>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dsrgan {

namespace {

// Graph building allocates and frees the same multi-megabyte activation
// buffers every step; keep them on the heap free list instead of handing
// them back to the kernel each time.
[[maybe_unused]] const bool malloc_tuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}();

}  // namespace

int worker_count() {
  static const int n = [] {
    if (const char* env = std::getenv("DSRGAN_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return std::min(v, 64);
    }
    // operator-level threading rarely pays at these tensor sizes; large
    // jobs parallelize across runs instead. Opt in via DSRGAN_THREADS.
    return 1;
  }();
  return n;
}

namespace {

class Pool {
 public:
  static Pool& instance() {
    static Pool pool(worker_count());
    return pool;
  }

  void run(long n, void (*fn)(void*, long), void* ctx) {
    if (n <= 0) return;
    if (threads_ == 1 || n == 1) {
      for (long i = 0; i < n; ++i) fn(ctx, i);
      return;
    }
    {
      std::lock_guard<std::mutex> lk(m_);
      fn_ = fn;
      ctx_ = ctx;
      n_ = n;
      pending_ = threads_ - 1;
      ++epoch_;
    }
    cv_work_.notify_all();
    for (long i = 0; i < n; i += threads_) fn(ctx, i);  // main thread is worker 0
    std::unique_lock<std::mutex> lk(m_);
    cv_done_.wait(lk, [this] { return pending_ == 0; });
    fn_ = nullptr;
  }

 private:
  explicit Pool(int threads) : threads_(threads) {
    for (int w = 1; w < threads_; ++w)
      workers_.emplace_back([this, w] { worker_loop(w); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
      ++epoch_;
    }
    cv_work_.notify_all();
    for (auto& t : workers_) t.join();
  }

  void worker_loop(int id) {
    std::uint64_t seen = 0;
    for (;;) {
      void (*fn)(void*, long);
      void* ctx;
      long n;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_work_.wait(lk, [&] { return epoch_ != seen; });
        seen = epoch_;
        if (stop_) return;
        fn = fn_;
        ctx = ctx_;
        n = n_;
      }
      for (long i = id; i < n; i += threads_) fn(ctx, i);
      {
        std::lock_guard<std::mutex> lk(m_);
        if (--pending_ == 0) cv_done_.notify_one();
      }
    }
  }

  const int threads_;
  std::vector<std::thread> workers_;
  std::mutex m_;
  std::condition_variable cv_work_, cv_done_;
  void (*fn_)(void*, long) = nullptr;
  void* ctx_ = nullptr;
  long n_ = 0;
  int pending_ = 0;
  std::uint64_t epoch_ = 0;
  bool stop_ = false;
};

}  // namespace

namespace detail {
void parallel_for_impl(long n, void (*fn)(void*, long), void* ctx) {
  Pool::instance().run(n, fn, ctx);
}
}  // namespace detail

}  // namespace dsrgan
