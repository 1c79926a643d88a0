#include "fkm/rng.hpp"

namespace fkm {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t CounterRng::mix(std::uint64_t key, std::uint64_t counter) noexcept {
  // Two finalizer rounds so that nearby keys do not produce correlated streams.
  return splitmix_finalize(splitmix_finalize(key) + (counter + 1) * kGolden);
}

std::uint64_t CounterRng::derive_key(std::uint64_t key, std::uint64_t index) noexcept {
  return splitmix_finalize(key ^ splitmix_finalize(index * kGolden + 0x632be59bd9b4e019ULL));
}

}  // namespace fkm
