#pragma once

// Alternating-minimization k-means with centers in an arbitrary space.
//
// A problem supplies the observation and center types, the cost between them,
// a per-cluster center fit, and the (already weighted) regularizer of a center.
// The engine alternates refitting every cluster and reassigning every
// observation to its cheapest center until the partition stops changing.

#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkm/core.hpp"
#include "fkm/rng.hpp"

namespace fkm {

template <class Center>
struct FitContext {
  std::size_t n_total = 0;        // size of the whole data set, not the cluster
  CounterRng rng;                 // stream private to this (iteration, cluster)
  const Center* previous = nullptr;  // the cluster's center from the last iteration, if any
};

template <class P>
concept ClusterProblem = requires(const P& p, const typename P::observation_type& x,
                                  const typename P::center_type& c,
                                  std::span<const typename P::observation_type> cluster,
                                  const FitContext<typename P::center_type>& ctx) {
  { p.cost(x, c) } -> std::convertible_to<double>;
  { p.fit(cluster, ctx) } -> std::same_as<typename P::center_type>;
  { p.penalty(c) } -> std::convertible_to<double>;
};

enum class EmptyClusterPolicy { reseed_farthest, drop_error };

struct LloydConfig {
  std::size_t k = 1;
  std::size_t max_iter = 100;
  EmptyClusterPolicy empty_cluster_policy = EmptyClusterPolicy::reseed_farthest;
  std::uint64_t seed = 0;
};

class EmptyClusterError : public std::runtime_error {
public:
  explicit EmptyClusterError(std::size_t cluster)
      : std::runtime_error("cluster " + std::to_string(cluster) + " became empty"), cluster_(cluster) {}
  std::size_t cluster() const noexcept { return cluster_; }

private:
  std::size_t cluster_;
};

template <class Center>
struct FitResult {
  std::vector<Center> centers;
  Partition partition;
  EnergyReport energy;
  std::size_t iterations = 0;
  bool converged = false;
  // Energy of (centers, partition) after every refit, in order.
  std::vector<double> energy_trace;
};

// Energy of centers under a given partition (not necessarily the nearest one).
template <ClusterProblem P>
EnergyReport partition_energy(const P& problem, std::span<const typename P::observation_type> data,
                              std::span<const typename P::center_type> centers,
                              const Partition& partition) {
  if (data.empty()) throw std::invalid_argument("energy of an empty data set");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) sum += problem.cost(data[i], centers[partition[i]]);
  double reg = 0.0;
  for (const auto& c : centers) reg += problem.penalty(c);
  EnergyReport r;
  r.data_term = sum / static_cast<double>(data.size());
  r.reg_term = reg;
  r.total = r.data_term + r.reg_term;
  return r;
}

// Energy with every observation charged its cheapest center.
template <ClusterProblem P>
EnergyReport min_energy(const P& problem, std::span<const typename P::observation_type> data,
                        std::span<const typename P::center_type> centers) {
  using Obs = typename P::observation_type;
  using Center = typename P::center_type;
  const Partition nearest = assign_nearest(
      data, centers, [&](const Obs& x, const Center& c) { return problem.cost(x, c); });
  return partition_energy(problem, data, centers, nearest);
}

Partition random_partition(std::size_t n, std::size_t k, CounterRng& rng);

namespace detail {

template <ClusterProblem P>
typename P::center_type fit_cluster(const P& problem,
                                    std::span<const typename P::observation_type> data,
                                    const Partition& partition, std::size_t j,
                                    const FitContext<typename P::center_type>& ctx) {
  std::vector<typename P::observation_type> members;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (partition[i] == j) members.push_back(data[i]);
  return problem.fit(std::span<const typename P::observation_type>(members), ctx);
}

// Refit every cluster for the given partition. Empty clusters are either an
// error or repopulated with the worst-fitting observation, which may modify
// the partition.
template <ClusterProblem P>
std::vector<typename P::center_type> refit(const P& problem,
                                           std::span<const typename P::observation_type> data,
                                           Partition& partition, const LloydConfig& config,
                                           std::size_t iteration,
                                           const std::vector<typename P::center_type>* previous) {
  using Center = typename P::center_type;
  const std::size_t k = partition.k;
  const CounterRng base(config.seed);
  auto context = [&](std::size_t j) {
    FitContext<Center> ctx;
    ctx.n_total = data.size();
    ctx.rng = base.split({iteration, j});
    ctx.previous = previous ? &(*previous)[j] : nullptr;
    return ctx;
  };

  std::vector<std::size_t> counts = partition.counts();
  std::vector<std::optional<Center>> fitted(k);
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] > 0) {
      fitted[j] = fit_cluster(problem, data, partition, j, context(j));
    } else if (config.empty_cluster_policy == EmptyClusterPolicy::drop_error) {
      throw EmptyClusterError(j);
    }
  }

  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] > 0) continue;
    // Move the observation that its own center explains worst, taken from a
    // cluster that keeps at least one member.
    std::size_t donor_index = data.size();
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::size_t owner = partition[i];
      if (!fitted[owner] || counts[owner] < 2) continue;
      const double c = problem.cost(data[i], *fitted[owner]);
      if (c > worst) {
        worst = c;
        donor_index = i;
      }
    }
    if (donor_index == data.size())
      throw std::invalid_argument("cannot repopulate empty cluster: fewer observations than clusters");
    const std::size_t donor = partition[donor_index];
    partition.labels[donor_index] = j;
    --counts[donor];
    ++counts[j];
    fitted[donor] = fit_cluster(problem, data, partition, donor, context(donor));
    fitted[j] = fit_cluster(problem, data, partition, j, context(j));
  }

  std::vector<Center> centers;
  centers.reserve(k);
  for (auto& c : fitted) centers.push_back(std::move(*c));
  return centers;
}

}  // namespace detail

template <ClusterProblem P>
FitResult<typename P::center_type> lloyd_run(const P& problem,
                                             std::span<const typename P::observation_type> data,
                                             const LloydConfig& config, Partition initial) {
  using Obs = typename P::observation_type;
  using Center = typename P::center_type;
  if (data.empty()) throw std::invalid_argument("lloyd_run: empty data set");
  if (config.k == 0) throw std::invalid_argument("lloyd_run: k must be >= 1");
  if (config.max_iter == 0) throw std::invalid_argument("lloyd_run: max_iter must be >= 1");
  if (initial.size() != data.size() || initial.k != config.k)
    throw std::invalid_argument("lloyd_run: initial partition does not match (n, k)");

  auto cost = [&](const Obs& x, const Center& c) { return problem.cost(x, c); };

  FitResult<Center> result;
  Partition partition = std::move(initial);
  std::vector<Center> centers = detail::refit(problem, data, partition, config, 0, nullptr);
  result.iterations = 1;
  result.energy_trace.push_back(
      partition_energy(problem, data, std::span<const Center>(centers), partition).total);

  for (;;) {
    Partition next = assign_nearest(data, std::span<const Center>(centers), cost);
    if (next == partition) {
      result.converged = true;
      break;
    }
    partition = std::move(next);
    if (result.iterations >= config.max_iter) break;
    centers = detail::refit(problem, data, partition, config, result.iterations, &centers);
    ++result.iterations;
    result.energy_trace.push_back(
        partition_energy(problem, data, std::span<const Center>(centers), partition).total);
  }

  result.energy = partition_energy(problem, data, std::span<const Center>(centers), partition);
  result.centers = std::move(centers);
  result.partition = std::move(partition);
  return result;
}

// Initial partition used by start `index` of multistart.
Partition multistart_initial_partition(std::size_t n, std::size_t k, std::uint64_t seed,
                                       std::size_t index);
// Fit seed used by start `index` of multistart.
std::uint64_t multistart_fit_seed(std::uint64_t seed, std::size_t index);

// Best of n_starts runs from uniformly random partitions; ties keep the first.
template <ClusterProblem P>
FitResult<typename P::center_type> multistart(const P& problem,
                                              std::span<const typename P::observation_type> data,
                                              const LloydConfig& config, std::size_t n_starts) {
  if (n_starts == 0) throw std::invalid_argument("multistart: n_starts must be >= 1");
  std::optional<FitResult<typename P::center_type>> best;
  for (std::size_t s = 0; s < n_starts; ++s) {
    LloydConfig cfg = config;
    cfg.seed = multistart_fit_seed(config.seed, s);
    auto run = lloyd_run(problem, data, cfg,
                         multistart_initial_partition(data.size(), config.k, config.seed, s));
    if (!best || run.energy.total < best->energy.total) best = std::move(run);
  }
  return std::move(*best);
}

}  // namespace fkm
