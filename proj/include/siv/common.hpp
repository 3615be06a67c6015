#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace siv {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad inputs: malformed generators, out-of-range parameters, config violations.
struct ValidationError : Error {
  using Error::Error;
};

/// A numeric routine failed to converge or produced an unusable result.
struct NumericError : Error {
  using Error::Error;
};

/// NaN/Inf appeared during time stepping.
struct BlowupError : Error {
  BlowupError(const std::string& msg, long step, int cell, std::string component)
      : Error(msg), step(step), cell(cell), component(std::move(component)) {}
  long step = -1;
  int cell = -1;
  std::string component;
};

/// Least-squares data matrix is rank deficient (insufficient excitation).
struct ExcitationError : Error {
  using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Decorrelated per-stream seed (ensemble workers, regime vs. noise streams).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x9E3779B97F4A7C15ull));
}

/// mt19937_64 with explicit uniform/normal/exponential transforms so sampled
/// values do not depend on the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform on [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; one spare value cached.
  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    const double u1 = 1.0 - uniform();  // (0,1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cache_ = r * std::sin(theta);
    has_cache_ = true;
    return r * std::cos(theta);
  }

  double exponential(double rate) { return -std::log(1.0 - uniform()) / rate; }

  /// Integer in [0, n).
  int below(int n) { return static_cast<int>(uniform() * n) % n; }

 private:
  std::mt19937_64 eng_;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

/// Runs body(i) for i in [0, n). Results must go to disjoint slots so the
/// outcome is independent of the thread count.
inline void parallel_for(int n, int n_threads, const std::function<void(int)>& body) {
  if (n_threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  const int workers = std::min(n_threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// 17 significant digits: round-trip exact, so byte equality of output files
/// is numeric equality.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline bool approx_eq(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace siv
