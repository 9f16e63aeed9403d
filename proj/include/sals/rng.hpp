#pragma once

#include <cmath>
#include <cstdint>

namespace sals {

// splitmix64 finalizer; good avalanche, cheap, and stable across platforms.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based stream: output i is a pure function of (key, i), so a stream
// can be forked into disjoint child streams and draws can run in parallel
// without shared state.  Not cryptographic; statistical quality is what we
// need for sketching and sampling.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : key_(mix64(seed ^ 0x8e1f0f7c3d2b5a91ULL)) {}

  // Independent child stream; fork(a) and fork(b) are decorrelated for a != b.
  SplitRng fork(std::uint64_t stream) const {
    SplitRng r(0);
    r.key_ = mix64(key_ ^ mix64(stream + 0x6a09e667f3bcc909ULL));
    r.ctr_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++ctr_); }

  // Uniform in [0, n).  Modulo bias is < n / 2^64, irrelevant at our scales.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Uniform in [0, 1) with 53 significant bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (explicit so sequences are platform-stable).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// One normal draw addressed by key alone: used where reproducibility must not
// depend on evaluation order (e.g. noise fields filled in parallel).
inline double keyed_normal(std::uint64_t seed, std::uint64_t key) {
  std::uint64_t a = mix64(seed ^ mix64(key + 0x452821e638d01377ULL));
  std::uint64_t b = mix64(a);
  double u1 = static_cast<double>((a >> 11) | 1ULL) * 0x1.0p-53;
  double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(6.283185307179586476925286766559 * u2);
}

}  // namespace sals
