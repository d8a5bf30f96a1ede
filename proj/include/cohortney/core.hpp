#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cohortney {

// Event offsets and epochs are integral seconds; derived quantities (grid
// nodes, survival fractions, risks) are doubles.
using Seconds = std::int64_t;

// Error taxonomy mirrored by the CLI exit codes: validation -> 1, io -> 2,
// anything else (internal invariant breakage) -> 3.
struct validation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct internal_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest text for a double that parses back to the exact bit pattern; used
// for canonical cluster-key text. Candidates are compared by string length so
// plain forms ("86400") beat equally precise scientific ones ("8.64e+04").
inline std::string real_text(double v) {
  std::string best;
  for (int prec = 1; prec <= 17; ++prec) {
    char probe[40];
    std::snprintf(probe, sizeof(probe), "%.*g", prec, v);
    if (std::strtod(probe, nullptr) != v) continue;
    if (best.empty() || std::strlen(probe) < best.size()) best = probe;
  }
  return best;
}

namespace detail {

inline unsigned max_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("COHORTNEY_THREADS")) {
    char* end = nullptr;
    long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1 && static_cast<unsigned>(cap) < hw)
      hw = static_cast<unsigned>(cap);
  }
  return hw;
}

// Runs fn(i) for i in [0, n). Work is split into contiguous index blocks so
// results keyed by index merge deterministically regardless of thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  unsigned workers = max_threads();
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  if (workers > n) workers = static_cast<unsigned>(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

// splitmix64: cheap, well-distributed stream used to derive per-item seeds so
// generation order (and any parallel split) cannot change the output.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t s = seed ^ (0x632be59bd9b4e019ull * (index + 1));
  return splitmix64(s);
}

}  // namespace detail
}  // namespace cohortney
