#pragma once

// Smoothing-data association experiments: noisy samples of k polynomial
// trajectories, clustered with smoothing-spline centers.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fkm/core.hpp"
#include "fkm/lloyd.hpp"
#include "fkm/polynomial.hpp"
#include "fkm/rng.hpp"
#include "fkm/spline.hpp"
#include "fkm/statistics.hpp"

namespace fkm {

struct NoiseModel {
  double variance = 5.0;
  // Samples are conditioned on |eps| <= bound; infinity means untruncated.
  double bound = 100.0;
};

struct GenModel {
  std::vector<Polynomial> trajectories;
  std::vector<double> weights;  // empty -> uniform 1/k
  double horizon = 10.0;
  NoiseModel noise;

  std::size_t k() const noexcept { return trajectories.size(); }
  double weight(std::size_t j) const;
  void validate() const;

  // k=3, T=10, N(0,5) truncated at +-100; x1 = -15-2t+0.2t^2, x2 = 5+t, x3 = 40.
  static GenModel figure1();
  // k=2 on [0,11], untruncated N(0,5); x1 = -20+t^2, x2 = 20+4t.
  static GenModel crossing();
};

struct LabeledData {
  std::vector<Observation2D> observations;
  std::vector<std::size_t> labels;
};

// Rejection sampler for N(0, variance) conditioned on |x| <= bound.
double sample_truncated_normal(double variance, double bound, CounterRng& rng);

double sample_noise(const NoiseModel& noise, CounterRng& rng);

// Labels drawn with the model weights, times uniform on [0, T].
LabeledData sample_dataset(const GenModel& model, std::size_t n, CounterRng& rng);

// Exactly per_cluster[j] samples from trajectory j.
LabeledData sample_dataset_balanced(const GenModel& model, std::span<const std::size_t> per_cluster,
                                    CounterRng& rng);

// One observation from the model's population law.
ObservationSampler model_sampler(const GenModel& model);

// Smallest total of cost[i][perm[i]] over permutations; returns the permutation.
std::vector<std::size_t> best_assignment(const std::vector<std::vector<double>>& cost);

// Percentage of observations whose estimated label matches the truth under
// the best relabeling of the estimate.
double association_accuracy(const Partition& estimate, std::span<const std::size_t> truth);

// (1/k) sqrt(sum_j ||mu_pi(j) - x^j||^2_L2 on [0,T]) minimized over relabelings pi.
template <Trajectory C>
double eta_metric(std::span<const C> centers, const GenModel& model,
                  std::size_t n_grid = kDefaultL2Grid) {
  const std::size_t k = model.k();
  if (centers.size() != k) throw std::invalid_argument("eta_metric: number of centers != model k");
  std::vector<std::vector<double>> cost(k, std::vector<double>(k));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t c = 0; c < k; ++c) {
      const double d = l2_distance(centers[c], model.trajectories[j], 0.0, model.horizon, n_grid);
      cost[j][c] = d * d;
    }
  const auto perm = best_assignment(cost);
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) sum += cost[j][perm[j]];
  return std::sqrt(sum) / static_cast<double>(k);
}

// The association problem as seen by the Lloyd engine.
class AssociationProblem {
public:
  using observation_type = Observation2D;
  using center_type = SplineCenter;

  explicit AssociationProblem(double lambda);

  double cost(const Observation2D& x, const SplineCenter& c) const { return pointwise_cost(x, c); }
  SplineCenter fit(std::span<const Observation2D> cluster, const FitContext<SplineCenter>& ctx) const;
  double penalty(const SplineCenter& c) const { return lambda_ * c.bending_energy(); }
  double lambda() const noexcept { return lambda_; }

private:
  double lambda_;
};

// k-means energy of the generating trajectories themselves.
double truth_energy(const GenModel& model, std::span<const Observation2D> data, double lambda);

struct AssocSettings {
  double lambda = 1.0;
  std::size_t n_starts = 10;
  std::size_t max_iter = 100;
  std::size_t n_grid = kDefaultL2Grid;
};

struct TrialStats {
  double eta = 0.0;
  double energy = 0.0;        // fitted minimum
  double truth_energy = 0.0;  // energy of the generating trajectories
  double accuracy = 0.0;      // percent
  std::size_t iterations = 0;
  bool converged = false;
};

TrialStats association_trial(const GenModel& model, std::size_t n, const AssocSettings& settings,
                             CounterRng rng);

struct AssocCell {
  std::size_t n = 0;
  std::vector<TrialStats> trials;
};

// trials independent runs per n, seeded from (seed, cell, trial).
std::vector<AssocCell> monte_carlo_suite(const GenModel& model, std::span<const std::size_t> n_grid,
                                         std::size_t trials, const AssocSettings& settings,
                                         std::uint64_t seed, std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Crossing tracks

// First time in (0, horizon] where trajectories a and b meet; 0 if they coincide.
double crossing_time(const Polynomial& a, const Polynomial& b, double horizon);

struct CrossingSettings {
  double lambda = 1.0;
  std::size_t n_total = 220;  // over [0, horizon], split evenly across both tracks
  std::size_t n_starts = 1;  // random-start runs used to decide which hypothesis is found
  std::size_t max_iter = 100;
};

struct CrossingOutcome {
  double delta_e = 0.0;  // E_c - E_nc
  double e_crossing = 0.0;
  double e_noncrossing = 0.0;
  bool found_crossing = false;
  std::size_t n_fit = 0;
};

// Crossing versus non-crossing hypothesis energies for data restricted to [0, t_fit].
CrossingOutcome crossing_trial(const GenModel& model, double t_fit, const LabeledData& full,
                               const CrossingSettings& settings, std::uint64_t seed);
CrossingOutcome crossing_trial(const GenModel& model, double t_fit, const CrossingSettings& settings,
                               CounterRng rng);

struct CrossingCell {
  double t_fit = 0.0;
  std::vector<CrossingOutcome> trials;
};

std::vector<CrossingCell> crossing_suite(const GenModel& model, std::span<const double> t_grid,
                                         std::size_t trials, const CrossingSettings& settings,
                                         std::uint64_t seed, std::size_t threads = 1);

// Pre-run trials until both outcomes have been seen at least min_each times,
// then return 10 * (N_c + N_nc). Stops early at max_trials.
std::size_t adaptive_crossing_trials(const GenModel& model, double t_fit,
                                     const CrossingSettings& settings, std::uint64_t seed,
                                     std::size_t min_each = 100, std::size_t max_trials = 100000);

}  // namespace fkm
