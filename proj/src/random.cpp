#include "trackrl/random.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace trackrl {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Pcg32 Pcg32::stream(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  const std::uint64_t tag = fnv1a64(label);
  const std::uint64_t state = splitmix64(seed ^ splitmix64(tag + index));
  const std::uint64_t seq = splitmix64(tag ^ splitmix64(index ^ 0x5851f42d4c957f2dULL));
  return Pcg32(state, seq);
}

Pcg32 Pcg32::from_entropy() {
  std::random_device device;
  const std::uint64_t a = (static_cast<std::uint64_t>(device()) << 32) | device();
  const std::uint64_t b = (static_cast<std::uint64_t>(device()) << 32) | device();
  return Pcg32(a, b);
}

void Pcg32::seed(std::uint64_t init_state, std::uint64_t init_seq) {
  state_ = 0;
  inc_ = (init_seq << 1U) | 1U;
  next_u32();
  state_ += init_state;
  next_u32();
}

std::uint32_t Pcg32::next_u32() {
  const std::uint64_t old = state_;
  state_ = old * 6364136223846793005ULL + inc_;
  const auto xorshifted = static_cast<std::uint32_t>(((old >> 18U) ^ old) >> 27U);
  const auto rot = static_cast<std::uint32_t>(old >> 59U);
  return (xorshifted >> rot) | (xorshifted << ((-rot) & 31U));
}

std::uint64_t Pcg32::next_u64() {
  const std::uint64_t hi = next_u32();
  return (hi << 32U) | next_u32();
}

double Pcg32::uniform() { return static_cast<double>(next_u64() >> 11U) * 0x1.0p-53; }

std::uint32_t Pcg32::uniform_int(std::uint32_t bound) {
  std::uint64_t m = static_cast<std::uint64_t>(next_u32()) * bound;
  auto low = static_cast<std::uint32_t>(m);
  if (low < bound) {
    const std::uint32_t threshold = (0U - bound) % bound;
    while (low < threshold) {
      m = static_cast<std::uint64_t>(next_u32()) * bound;
      low = static_cast<std::uint32_t>(m);
    }
  }
  return static_cast<std::uint32_t>(m >> 32U);
}

double Pcg32::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace trackrl
