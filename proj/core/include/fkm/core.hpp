#pragma once

// Generic k-means energies shared by the association and tracking problems.
//
// Data live in one space and centers in another; all that ties them together
// is a nonnegative cost d(observation, center). The energy of a set of centers
// is the mean over observations of the cheapest cost, plus a weighted
// regularizer on the centers.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "fkm/rng.hpp"

namespace fkm {

// A (time, value) sample for the smoothing-data association problem.
struct Observation2D {
  double t = 0.0;
  double z = 0.0;
};

// Maps observation index -> cluster index in [0, k).
struct Partition {
  std::vector<std::size_t> labels;
  std::size_t k = 0;

  Partition() = default;
  Partition(std::vector<std::size_t> l, std::size_t clusters);

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t operator[](std::size_t i) const { return labels[i]; }

  // Number of observations in each cluster.
  std::vector<std::size_t> counts() const;

  bool operator==(const Partition&) const = default;
};

struct EnergyReport {
  double total = 0.0;
  double data_term = 0.0;
  double reg_term = 0.0;
};

// Anything that can be evaluated at a time t.
template <class C>
concept Trajectory = requires(const C& c, double t) {
  { c(t) } -> std::convertible_to<double>;
};

// A trajectory that also reports its bending energy, the integral of (c'')^2.
template <class C>
concept BendingTrajectory = Trajectory<C> && requires(const C& c) {
  { c.bending_energy() } -> std::convertible_to<double>;
};

// |z - mu(t)|^2
template <Trajectory C>
double pointwise_cost(const Observation2D& obs, const C& center) {
  const double r = obs.z - static_cast<double>(center(obs.t));
  return r * r;
}

// Index of the cheapest center; ties go to the lowest index.
template <class Obs, class Center, class Cost>
std::size_t nearest_center(const Obs& obs, std::span<const Center> centers, Cost&& cost) {
  std::size_t best = 0;
  double best_cost = cost(obs, centers[0]);
  for (std::size_t j = 1; j < centers.size(); ++j) {
    const double c = cost(obs, centers[j]);
    if (c < best_cost) {
      best_cost = c;
      best = j;
    }
  }
  return best;
}

template <class Obs, class Center, class Cost>
Partition assign_nearest(std::span<const Obs> data, std::span<const Center> centers, Cost&& cost) {
  if (centers.empty()) throw std::invalid_argument("assign_partition: no centers");
  std::vector<std::size_t> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    labels[i] = nearest_center(data[i], centers, cost);
  return Partition(std::move(labels), centers.size());
}

template <Trajectory C>
Partition assign_partition(std::span<const Observation2D> data, std::span<const C> centers) {
  return assign_nearest(data, centers,
                        [](const Observation2D& x, const C& c) { return pointwise_cost(x, c); });
}

// (1/n) sum_i min_j |z_i - mu_j(t_i)|^2 + lambda * sum_j int (mu_j'')^2
template <BendingTrajectory C>
EnergyReport kmeans_energy(std::span<const Observation2D> data, std::span<const C> centers,
                           double lambda) {
  if (data.empty()) throw std::invalid_argument("kmeans_energy: empty data set");
  if (centers.empty()) throw std::invalid_argument("kmeans_energy: no centers");
  if (!(lambda >= 0.0)) throw std::invalid_argument("kmeans_energy: lambda must be >= 0");

  double sum = 0.0;
  for (const auto& x : data) {
    double best = pointwise_cost(x, centers[0]);
    for (std::size_t j = 1; j < centers.size(); ++j) best = std::min(best, pointwise_cost(x, centers[j]));
    sum += best;
  }
  double bending = 0.0;
  for (const auto& c : centers) bending += c.bending_energy();

  EnergyReport r;
  r.data_term = sum / static_cast<double>(data.size());
  r.reg_term = lambda * bending;
  r.total = r.data_term + r.reg_term;
  return r;
}

// Monte Carlo estimate of the population energy
//   E[min_j |z - mu_j(t)|^2] + lambda * sum_j int (mu_j'')^2
// with the standard error of the data term.
struct McEstimate {
  double value = 0.0;
  double data_mean = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
};

using ObservationSampler = std::function<Observation2D(CounterRng&)>;

template <BendingTrajectory C>
McEstimate limit_energy_mc(std::span<const C> centers, const ObservationSampler& sample,
                           double lambda, std::size_t n_mc, CounterRng rng) {
  if (n_mc < 2) throw std::invalid_argument("limit_energy_mc: need at least 2 samples");
  if (centers.empty()) throw std::invalid_argument("limit_energy_mc: no centers");

  // Welford keeps the variance stable for 1e6+ draws.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    const Observation2D x = sample(rng);
    double best = pointwise_cost(x, centers[0]);
    for (std::size_t j = 1; j < centers.size(); ++j) best = std::min(best, pointwise_cost(x, centers[j]));
    const double delta = best - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (best - mean);
  }
  const double var = m2 / static_cast<double>(n_mc - 1);

  double bending = 0.0;
  for (const auto& c : centers) bending += c.bending_energy();

  McEstimate est;
  est.data_mean = mean;
  est.standard_error = std::sqrt(var / static_cast<double>(n_mc));
  est.value = mean + lambda * bending;
  est.samples = n_mc;
  return est;
}

}  // namespace fkm
