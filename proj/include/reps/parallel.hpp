// Index-parallel loop capped by the REPS_THREADS environment variable.

#ifndef REPS_PARALLEL_HPP
#define REPS_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace reps {

/// REPS_THREADS: unset, empty or 0 means hardware concurrency.
inline std::size_t thread_count() {
  std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const char* env = std::getenv("REPS_THREADS");
  if (!env || !*env) return hw;
  try {
    const long v = std::stol(env);
    return v <= 0 ? hw : std::size_t(v);
  } catch (const std::exception&) {
    return hw;
  }
}

/// Calls f(i) for i in [0, n). Each index runs exactly once; callers write to
/// per-index slots so results do not depend on scheduling. The first
/// exception thrown is rethrown after all workers finish.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto run = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace reps

#endif  // REPS_PARALLEL_HPP
