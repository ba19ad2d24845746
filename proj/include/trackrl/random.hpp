#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace trackrl {

// PCG32 (XSH-RR, 64-bit state, 32-bit output). Every stochastic draw in the
// library goes through this generator so results do not depend on the
// standard library's distribution implementations.
class Pcg32 {
 public:
  Pcg32() : Pcg32(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL) {}
  Pcg32(std::uint64_t init_state, std::uint64_t init_seq) { seed(init_state, init_seq); }

  // Independent stream for (seed, label, index). Labels name the consumer
  // ("env", "policy_init", ...) so adding a consumer never shifts another.
  static Pcg32 stream(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);
  static Pcg32 from_entropy();

  void seed(std::uint64_t init_state, std::uint64_t init_seq);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
  std::uint32_t uniform_int(std::uint32_t bound);
  // Standard normal via Box-Muller (one value per call, no caching).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t state() const { return state_; }
  std::uint64_t increment() const { return inc_; }
  void restore(std::uint64_t state, std::uint64_t increment) {
    state_ = state;
    inc_ = increment;
  }

  friend bool operator==(const Pcg32&, const Pcg32&) = default;

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 1;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace trackrl
