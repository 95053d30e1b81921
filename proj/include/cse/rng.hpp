#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cse {

/// Counter-based deterministic RNG. A (seed, stream) pair fully determines the
/// sequence on every platform: the generator is pure 64-bit integer mixing
/// (splitmix finalizer over a per-stream odd increment), so no libc or
/// distribution-object variance can creep in.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) : seed_(seed), stream_(stream) {
    state_ = mix(seed ^ mix(stream + 0x1D8AF066EF9DE14BULL));
    gamma_ = mix(stream ^ mix(seed + 0xA24BAED4963EE407ULL)) | 1ULL;  // odd => full-period orbit
  }

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

  /// Independent stream derived from this generator's identity (not its position).
  Rng substream(uint64_t id) const { return Rng(seed_, mix(stream_ + 0x9E3779B97F4A7C15ULL * (id + 1))); }

  uint64_t next_u64() {
    state_ += gamma_;
    return mix(state_);
  }

  /// Uniform in [0, 1) with 53-bit resolution; exact on all platforms.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  uint64_t below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t x = next_u64();
      if (x >= threshold) return x % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (pair cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices from [0, n), order of draw preserved.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
    if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
    std::vector<size_t> pool(n);
    for (size_t i = 0; i < n; ++i) pool[i] = i;
    std::vector<size_t> out;
    out.reserve(k);
    for (size_t i = 0; i < k; ++i) {
      const size_t j = i + static_cast<size_t>(below(n - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }

  static uint64_t mix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  uint64_t seed_ = 0;
  uint64_t stream_ = 0;
  uint64_t state_ = 0;
  uint64_t gamma_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace cse
