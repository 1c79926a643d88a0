#pragma once

#include <cstdint>
#include <limits>
#include <initializer_list>

namespace fkm {

// Counter-based generator: the n-th output is a bijective mix of (key, n), so
// a stream is fully described by its key and position. Sub-streams are split
// off by hashing the parent key with an index; the parent is never advanced,
// which keeps results independent of how work is scheduled across threads.
//
// Satisfies UniformRandomBitGenerator, so it plugs into <random> distributions.
class CounterRng {
public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key = 0) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return mix(key_, counter_++); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  // Child stream keyed by (this key, index). Does not advance this stream.
  [[nodiscard]] CounterRng split(std::uint64_t index) const noexcept {
    return CounterRng(derive_key(key_, index));
  }

  // Child stream keyed by a path of indices, e.g. {cell, trial}.
  [[nodiscard]] CounterRng split(std::initializer_list<std::uint64_t> path) const noexcept {
    std::uint64_t k = key_;
    for (auto i : path) k = derive_key(k, i);
    return CounterRng(k);
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t position() const noexcept { return counter_; }

  static std::uint64_t derive_key(std::uint64_t key, std::uint64_t index) noexcept;

private:
  static std::uint64_t mix(std::uint64_t key, std::uint64_t counter) noexcept;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace fkm
