#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace esrgcnn {

namespace detail {
inline std::atomic<unsigned>& thread_cap() {
  static std::atomic<unsigned> cap{1};
  return cap;
}
}  // namespace detail

/// Caps the worker threads used inside batch-parallel kernels. Results do not
/// depend on the cap: every kernel reduces per-sample partials in sample order.
inline void set_num_threads(unsigned n) { detail::thread_cap().store(std::max(1u, n)); }
inline unsigned num_threads() { return detail::thread_cap().load(); }

/// Reads ESRG_THREADS (default 1) and applies it.
inline unsigned configure_threads_from_env() {
  unsigned n = 1;
  if (const char* env = std::getenv("ESRG_THREADS")) {
    try {
      long v = std::stol(env);
      if (v > 0) n = static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  set_num_threads(n);
  return n;
}

/// Runs fn(i) for i in [0, count). Iterations must write disjoint outputs.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(num_threads(), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace esrgcnn
