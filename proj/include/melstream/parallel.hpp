#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string_view>
#include <thread>
#include <vector>

namespace melstream {

// Requested worker count, capped by MELSTREAM_THREADS when set.
inline std::size_t effective_jobs(std::size_t requested) {
  std::size_t jobs = std::max<std::size_t>(requested, 1);
  if (const char* env = std::getenv("MELSTREAM_THREADS")) {
    const std::string_view s(env);
    std::size_t cap = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
    if (ec == std::errc{} && cap > 0) jobs = std::min(jobs, cap);
  }
  return jobs;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is visited
// exactly once; the first exception is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::min(effective_jobs(jobs), n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace melstream
