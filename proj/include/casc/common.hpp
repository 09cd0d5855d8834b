#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace casc {

// Error hierarchy. The CLI maps these onto process exit codes:
// config 1, data 2, checkpoint 3.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct shape_error : error {
  using error::error;
};
struct contract_error : error {
  using error::error;
};
struct config_error : error {
  using error::error;
};
struct data_error : error {
  using error::error;
};
struct checkpoint_error : error {
  using error::error;
};

inline constexpr double kPi = 3.14159265358979323846;

/// Deterministic splitmix64 generator. Used everywhere randomness is
/// needed so runs are bit-identical across platforms for a given seed
/// (the standard library distributions are not portable).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; consumes two raw draws per call.
  double gaussian() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  Rng r(seed ^ (salt * 0x9e3779b97f4a7c15ULL + 0x165667b19e3779f9ULL));
  return r.next_u64();
}

/// Independent stream for (master seed, sample index, variant index).
/// Parallel and serial traversals of a dataset draw identical values.
inline Rng derive_rng(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(mix_seed(mix_seed(master, a + 1), b + 1));
}

/// Round half up: -0.5 -> 0, 0.5 -> 1, 1.4 -> 1.
inline long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

inline long clamp_index(long v, long lo, long hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace casc
