// Shared plumbing: error taxonomy, the pinned portable RNG, threading helper,
// and small numeric utilities used across the library.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace csurv {

// ---------------------------------------------------------------------------
// Errors. One class per failure family; the CLI maps each to a distinct
// exit code (see tools/).
// ---------------------------------------------------------------------------
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SelectionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LinAlgError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FingerprintError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PredictionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// RNG. xoshiro256** seeded through SplitMix64, with stream splitting by
// (seed, stream) mixing. Fully portable: no std::<distribution> involved,
// so identical draws on every platform/stdlib. The identity string is
// embedded in serialized models.
// ---------------------------------------------------------------------------
inline constexpr const char* kRngIdentity = "xoshiro256**/splitmix64-streams-v1";

namespace detail {
inline uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
inline uint64_t rotl64(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace detail

class Rng {
 public:
  using result_type = uint64_t;

  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : state_) word = detail::splitmix64_next(sm);
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
  }

  // Independent stream for (seed, stream): used for per-tree and
  // per-bootstrap-replicate generators so results never depend on thread
  // scheduling.
  static Rng stream(uint64_t seed, uint64_t stream_index) {
    uint64_t mixed = seed;
    uint64_t salt = 0xD1B54A32D192ED03ULL + stream_index;
    mixed ^= detail::splitmix64_next(salt);
    return Rng(mixed);
  }

  uint64_t next() {
    const uint64_t result = detail::rotl64(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = detail::rotl64(state_[3], 45);
    return result;
  }

  uint64_t operator()() { return next(); }
  static constexpr uint64_t min() { return 0; }
  static constexpr uint64_t max() { return UINT64_MAX; }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_pos() { return 1.0 - uniform(); }

  double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  // Unbiased integer in [0, n) (Lemire's multiply-shift with rejection).
  uint64_t below(uint64_t n) {
    uint64_t x = next();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      const uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        x = next();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  // Fisher–Yates over the first k slots; v[0..k) is then a uniform draw of k
  // elements without replacement.
  template <class T>
  void partial_shuffle(std::vector<T>& v, size_t k) {
    const size_t n = v.size();
    for (size_t i = 0; i < k && i + 1 < n; ++i) {
      const size_t j = i + static_cast<size_t>(below(n - i));
      std::swap(v[i], v[j]);
    }
  }

  // Knuth's method; fine for the small means used here.
  size_t poisson(double mean) {
    const double limit = std::exp(-mean);
    double p = 1.0;
    size_t k = 0;
    do {
      ++k;
      p *= uniform_pos();
    } while (p > limit);
    return k - 1;
  }

 private:
  uint64_t state_[4];
};

// ---------------------------------------------------------------------------
// Threading. Work items are pulled off an atomic counter; callers must write
// results into per-index slots so output is scheduling-independent.
// ---------------------------------------------------------------------------
inline unsigned default_thread_count() {
  if (const char* env = std::getenv("CSURV_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

template <class Fn>
void parallel_for(size_t count, unsigned num_threads, Fn&& fn) {
  if (num_threads == 0) num_threads = default_thread_count();
  if (num_threads <= 1 || count <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i, 0);
    return;
  }
  num_threads = static_cast<unsigned>(std::min<size_t>(num_threads, count));
  std::atomic<size_t> cursor{0};
  std::vector<std::thread> pool;
  pool.reserve(num_threads);
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::atomic<int> error_guard{0};
  for (unsigned t = 0; t < num_threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        while (true) {
          const size_t i = cursor.fetch_add(1);
          if (i >= count || failed.load()) break;
          fn(i, t);
        }
      } catch (...) {
        if (error_guard.fetch_add(1) == 0) first_error = std::current_exception();
        failed.store(true);
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failed.load() && first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Numeric helpers.
// ---------------------------------------------------------------------------
inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  const size_t n = v.size();
  if (n < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

// Quantile with R's default (type 7) interpolation on a sorted copy.
inline double quantile_type7(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  if (p <= 0) return v.front();
  if (p >= 1) return v.back();
  const double idx = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<size_t>(idx);
  const double frac = idx - static_cast<double>(lo);
  if (lo + 1 >= v.size()) return v.back();
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

// Two-sided normal p-value for a t statistic (D18: normal reference).
inline double normal_two_sided_p(double t) {
  return std::erfc(std::fabs(t) / std::sqrt(2.0));
}

// FNV-1a over raw bytes; used for data fingerprints and model hashes.
inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xCBF29CE484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline uint64_t fnv1a64_append(uint64_t h, double x) {
  static_assert(std::numeric_limits<double>::is_iec559);
  uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  return fnv1a64(&bits, sizeof bits, h);
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace csurv
