#include "fkm/lloyd.hpp"

namespace fkm {

namespace {
__extension__ typedef unsigned __int128 uint128;
}  // namespace

Partition random_partition(std::size_t n, std::size_t k, CounterRng& rng) {
  if (k == 0) throw std::invalid_argument("random_partition: k must be >= 1");
  std::vector<std::size_t> labels(n);
  for (auto& l : labels) {
    // Multiply-shift maps a 64-bit draw onto [0, k).
    const uint128 wide = static_cast<uint128>(rng()) * k;
    l = static_cast<std::size_t>(wide >> 64);
  }
  return Partition(std::move(labels), k);
}

Partition multistart_initial_partition(std::size_t n, std::size_t k, std::uint64_t seed,
                                       std::size_t index) {
  CounterRng rng = CounterRng(seed).split({index, 0});
  return random_partition(n, k, rng);
}

std::uint64_t multistart_fit_seed(std::uint64_t seed, std::size_t index) {
  return CounterRng(seed).split({index, 1}).key();
}

}  // namespace fkm
