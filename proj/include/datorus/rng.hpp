#pragma once

#include <array>
#include <cstdint>

namespace datorus {

// Philox4x32-10 counter-based generator. Each (seed, counter) pair yields an
// independent 128-bit block, so parallel sampling is order-independent.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t counter)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        ctr_{static_cast<std::uint32_t>(counter),
             static_cast<std::uint32_t>(counter >> 32), 0u, 0u} {
    refill();
  }

  std::uint32_t next_u32() {
    if (pos_ == 4) {
      if (++ctr_[2] == 0u) ++ctr_[3];
      refill();
    }
    return block_[pos_++];
  }

  std::uint64_t next_u64() {
    std::uint64_t lo = next_u32();
    std::uint64_t hi = next_u32();
    return lo | (hi << 32);
  }

  /// Uniform double in [0,1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Unbiased uniform integer in [0, bound), bound > 0.
  std::uint64_t next_below(std::uint64_t bound) {
    // rejection from the top 64-bit range
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound) - 1;
    for (;;) {
      std::uint64_t v = next_u64();
      if (v <= limit) return v % bound;
    }
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
    std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void refill() {
    std::uint32_t x0 = ctr_[0], x1 = ctr_[1], x2 = ctr_[2], x3 = ctr_[3];
    std::uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(kMul0, x0, hi0, lo0);
      mulhilo(kMul1, x2, hi1, lo1);
      std::uint32_t y0 = hi1 ^ x1 ^ k0;
      std::uint32_t y1 = lo1;
      std::uint32_t y2 = hi0 ^ x3 ^ k1;
      std::uint32_t y3 = lo0;
      x0 = y0; x1 = y1; x2 = y2; x3 = y3;
      k0 += kW0;
      k1 += kW1;
    }
    block_ = {x0, x1, x2, x3};
    pos_ = 0;
  }

  std::uint32_t key0_, key1_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 0;
};

}  // namespace datorus
