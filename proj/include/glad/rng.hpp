#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace glad {

struct RngState {
  std::uint64_t key = 0;
  std::uint64_t counter = 0;

  bool operator==(const RngState&) const = default;
};

// Counter-based generator: draw i is a pure function of (key, i), so a stream
// can be saved as two integers and streams derived by label never interact.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view stream);
  explicit CounterRng(RngState state) : state_(state) {}

  // Independent child stream; does not advance this one.
  CounterRng derive(std::string_view label) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double normal();
  // Normal(0, stddev) resampled until it lies within +-2 stddev.
  double truncated_normal(double stddev);
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
  }

  RngState state() const { return state_; }

 private:
  RngState state_;
};

std::uint64_t hash_label(std::string_view label);

}  // namespace glad
