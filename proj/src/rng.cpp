#include "glad/rng.hpp"

#include <cmath>
#include <numbers>

namespace glad {
namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

CounterRng::CounterRng(std::uint64_t seed, std::string_view stream)
    : state_{mix64(mix64(seed + kGolden) ^ hash_label(stream)), 0} {}

CounterRng CounterRng::derive(std::string_view label) const {
  return CounterRng(RngState{mix64(state_.key ^ mix64(hash_label(label))), 0});
}

std::uint64_t CounterRng::next_u64() {
  const std::uint64_t c = state_.counter++;
  return mix64(state_.key ^ mix64(c * kGolden + 1));
}

double CounterRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double CounterRng::truncated_normal(double stddev) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * stddev;
  }
}

std::size_t CounterRng::below(std::size_t n) {
  // Reject the tail so every residue is equally likely.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound);
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x < limit) return static_cast<std::size_t>(x % bound);
  }
}

}  // namespace glad
