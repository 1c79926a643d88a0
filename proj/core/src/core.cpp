#include "fkm/core.hpp"

#include <string>

namespace fkm {

Partition::Partition(std::vector<std::size_t> l, std::size_t clusters)
    : labels(std::move(l)), k(clusters) {
  if (k == 0) throw std::invalid_argument("Partition: k must be >= 1");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= k)
      throw std::invalid_argument("Partition: label " + std::to_string(labels[i]) + " at index " +
                                  std::to_string(i) + " out of range for k=" + std::to_string(k));
  }
}

std::vector<std::size_t> Partition::counts() const {
  std::vector<std::size_t> c(k, 0);
  for (auto l : labels) ++c[l];
  return c;
}

}  // namespace fkm
