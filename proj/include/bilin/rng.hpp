#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace bilin {

// Stream ids keep initialization, shuffling, noise and augmentation draws
// independent of each other for a given seed.
enum class RngStream : std::uint64_t {
  kInit = 0,
  kShuffle = 1,
  kNoise = 2,
  kAugment = 3,
  kGeneric = 4,
};

namespace detail {

struct PhiloxState {
  std::array<std::uint32_t, 4> ctr;
  std::array<std::uint32_t, 2> key;
};

inline std::uint32_t mulhi32(std::uint32_t a, std::uint32_t b) {
  return std::uint32_t((std::uint64_t(a) * b) >> 32);
}

// Philox4x32-10 round function (Salmon et al. counter-based generator).
inline std::array<std::uint32_t, 4> philox4x32(PhiloxState s) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0 = mulhi32(kM0, s.ctr[0]);
    std::uint32_t lo0 = kM0 * s.ctr[0];
    std::uint32_t hi1 = mulhi32(kM1, s.ctr[2]);
    std::uint32_t lo1 = kM1 * s.ctr[2];
    s.ctr = {hi1 ^ s.ctr[1] ^ s.key[0], lo1, hi0 ^ s.ctr[3] ^ s.key[1], lo0};
    s.key[0] += kW0;
    s.key[1] += kW1;
  }
  return s.ctr;
}

}  // namespace detail

// Counter-based generator: output block i of stream (seed, stream) is a pure
// function of (seed, stream, i), so streams can be split freely and replayed.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, RngStream stream)
      : CounterRng(seed, static_cast<std::uint64_t>(stream)) {}
  CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64() {
    if (pos_ >= 4) refill();
    std::uint64_t lo = block_[pos_], hi = block_[pos_ + 1];
    pos_ += 2;
    return (hi << 32) | lo;
  }

  // uniform in [0, 1), 53 random bits
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller; exactly two uniforms per pair of draws
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    double u2 = double(next_u64() >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // uniform integer in [0, n), unbiased via rejection
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) return 0;
    std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n);
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // integer in [lo, hi] inclusive
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + std::int64_t(below(std::uint64_t(hi - lo + 1)));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = std::size_t(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  void refill() {
    detail::PhiloxState s;
    s.ctr = {std::uint32_t(counter_), std::uint32_t(counter_ >> 32), std::uint32_t(stream_),
             std::uint32_t(stream_ >> 32)};
    s.key = {std::uint32_t(seed_), std::uint32_t(seed_ >> 32)};
    block_ = detail::philox4x32(s);
    ++counter_;
    pos_ = 0;
  }

  std::uint64_t seed_, stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stable seed derivation for parallel sweep cells and permutation baselines.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  CounterRng rng(base, ~index);
  return rng.next_u64();
}

}  // namespace bilin
