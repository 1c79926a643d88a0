#include "fkm/assoc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fkm/parallel.hpp"

namespace fkm {

// ---------------------------------------------------------------------------
// Model

double GenModel::weight(std::size_t j) const {
  return weights.empty() ? 1.0 / static_cast<double>(k()) : weights[j];
}

void GenModel::validate() const {
  if (trajectories.empty()) throw std::invalid_argument("GenModel: need at least one trajectory");
  if (!weights.empty()) {
    if (weights.size() != trajectories.size())
      throw std::invalid_argument("GenModel: weights/trajectories size mismatch");
    double s = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw std::invalid_argument("GenModel: weights must be > 0");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("GenModel: weights must sum to 1");
  }
  if (!(horizon > 0.0)) throw std::invalid_argument("GenModel: horizon must be > 0");
  if (!(noise.variance >= 0.0)) throw std::invalid_argument("GenModel: noise variance must be >= 0");
  if (!(noise.bound > 0.0)) throw std::invalid_argument("GenModel: noise bound must be > 0");
}

GenModel GenModel::figure1() {
  GenModel m;
  m.trajectories = {Polynomial({-15.0, -2.0, 0.2}), Polynomial({5.0, 1.0}), Polynomial({40.0})};
  m.horizon = 10.0;
  m.noise = {5.0, 100.0};
  return m;
}

GenModel GenModel::crossing() {
  GenModel m;
  m.trajectories = {Polynomial({-20.0, 0.0, 1.0}), Polynomial({20.0, 4.0})};
  m.horizon = 11.0;
  m.noise = {5.0, std::numeric_limits<double>::infinity()};
  return m;
}

// ---------------------------------------------------------------------------
// Sampling

double sample_truncated_normal(double variance, double bound, CounterRng& rng) {
  if (!(variance > 0.0)) throw std::invalid_argument("sample_truncated_normal: variance must be > 0");
  if (!(bound > 0.0)) throw std::invalid_argument("sample_truncated_normal: bound must be > 0");
  std::normal_distribution<double> normal(0.0, std::sqrt(variance));
  for (;;) {
    const double x = normal(rng);
    if (std::abs(x) <= bound) return x;
  }
}

double sample_noise(const NoiseModel& noise, CounterRng& rng) {
  if (noise.variance == 0.0) return 0.0;
  return sample_truncated_normal(noise.variance, noise.bound, rng);
}

namespace {

std::size_t draw_label(const GenModel& model, CounterRng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < model.k(); ++j) {
    acc += model.weight(j);
    if (u < acc) return j;
  }
  return model.k() - 1;
}

Observation2D draw_from(const GenModel& model, std::size_t j, CounterRng& rng) {
  Observation2D x;
  x.t = model.horizon * rng.uniform();
  x.z = model.trajectories[j](x.t) + sample_noise(model.noise, rng);
  return x;
}

}  // namespace

LabeledData sample_dataset(const GenModel& model, std::size_t n, CounterRng& rng) {
  model.validate();
  if (n == 0) throw std::invalid_argument("sample_dataset: n must be >= 1");
  LabeledData d;
  d.observations.reserve(n);
  d.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = draw_label(model, rng);
    d.labels.push_back(j);
    d.observations.push_back(draw_from(model, j, rng));
  }
  return d;
}

LabeledData sample_dataset_balanced(const GenModel& model, std::span<const std::size_t> per_cluster,
                                    CounterRng& rng) {
  model.validate();
  if (per_cluster.size() != model.k())
    throw std::invalid_argument("sample_dataset_balanced: one count per trajectory required");
  LabeledData d;
  for (std::size_t j = 0; j < model.k(); ++j) {
    for (std::size_t i = 0; i < per_cluster[j]; ++i) {
      d.labels.push_back(j);
      d.observations.push_back(draw_from(model, j, rng));
    }
  }
  return d;
}

ObservationSampler model_sampler(const GenModel& model) {
  model.validate();
  return [model](CounterRng& rng) {
    const std::size_t j = draw_label(model, rng);
    return draw_from(model, j, rng);
  };
}

// ---------------------------------------------------------------------------
// Metrics

std::vector<std::size_t> best_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t k = cost.size();
  if (k > 9) throw std::invalid_argument("best_assignment: exhaustive matching limited to k <= 9");
  std::vector<std::size_t> perm(k), best(k);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_total = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += cost[j][perm[j]];
    if (total < best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double association_accuracy(const Partition& estimate, std::span<const std::size_t> truth) {
  if (estimate.size() != truth.size())
    throw std::invalid_argument("association_accuracy: length mismatch");
  if (truth.empty()) return 100.0;
  std::size_t k = estimate.k;
  for (auto t : truth) k = std::max(k, t + 1);
  // cost[truth][estimate] = -(number of agreements)
  std::vector<std::vector<double>> cost(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < truth.size(); ++i) cost[truth[i]][estimate[i]] -= 1.0;
  const auto perm = best_assignment(cost);
  double agree = 0.0;
  for (std::size_t j = 0; j < k; ++j) agree -= cost[j][perm[j]];
  return 100.0 * agree / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Association problem

AssociationProblem::AssociationProblem(double lambda) : lambda_(lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("AssociationProblem: lambda must be >= 0");
}

SplineCenter AssociationProblem::fit(std::span<const Observation2D> cluster,
                                     const FitContext<SplineCenter>& ctx) const {
  return fit_smoothing_spline(cluster, lambda_, ctx.n_total);
}

double truth_energy(const GenModel& model, std::span<const Observation2D> data, double lambda) {
  std::vector<PolynomialTrajectory> truth;
  for (const auto& p : model.trajectories) truth.push_back({p, model.horizon});
  return kmeans_energy(data, std::span<const PolynomialTrajectory>(truth), lambda).total;
}

TrialStats association_trial(const GenModel& model, std::size_t n, const AssocSettings& settings,
                             CounterRng rng) {
  CounterRng data_rng = rng.split(0);
  const LabeledData data = sample_dataset(model, n, data_rng);
  const std::span<const Observation2D> obs(data.observations);

  const AssociationProblem problem(settings.lambda);
  LloydConfig cfg;
  cfg.k = model.k();
  cfg.max_iter = settings.max_iter;
  cfg.seed = rng.split(1).key();
  const auto fit = multistart(problem, obs, cfg, settings.n_starts);

  TrialStats s;
  s.eta = eta_metric(std::span<const SplineCenter>(fit.centers), model, settings.n_grid);
  s.energy = fit.energy.total;
  s.truth_energy = truth_energy(model, obs, settings.lambda);
  s.accuracy = association_accuracy(fit.partition, data.labels);
  s.iterations = fit.iterations;
  s.converged = fit.converged;
  return s;
}

std::vector<AssocCell> monte_carlo_suite(const GenModel& model, std::span<const std::size_t> n_grid,
                                         std::size_t trials, const AssocSettings& settings,
                                         std::uint64_t seed, std::size_t threads) {
  if (trials == 0) throw std::invalid_argument("monte_carlo_suite: trials must be >= 1");
  model.validate();
  std::vector<AssocCell> cells(n_grid.size());
  const CounterRng master(seed);
  for (std::size_t c = 0; c < n_grid.size(); ++c) {
    cells[c].n = n_grid[c];
    cells[c].trials.resize(trials);
  }
  parallel_for(n_grid.size() * trials, threads, [&](std::size_t idx) {
    const std::size_t c = idx / trials, t = idx % trials;
    cells[c].trials[t] = association_trial(model, n_grid[c], settings, master.split({c, t}));
  });
  return cells;
}

// ---------------------------------------------------------------------------
// Crossing tracks

double crossing_time(const Polynomial& a, const Polynomial& b, double horizon) {
  Polynomial d = a - b;
  while (d.coeffs.size() > 1 && d.coeffs.back() == 0.0) d.coeffs.pop_back();
  // Coincident trajectories meet everywhere.
  if (d.coeffs.empty() || (d.coeffs.size() == 1 && d.coeffs[0] == 0.0)) return 0.0;
  std::vector<double> roots;
  const auto& c = d.coeffs;
  if (c.size() == 2) {
    roots.push_back(-c[0] / c[1]);
  } else if (c.size() == 3) {
    const double disc = c[1] * c[1] - 4.0 * c[2] * c[0];
    if (disc >= 0.0) {
      // Numerically stable pair of roots.
      const double q = -0.5 * (c[1] + std::copysign(std::sqrt(disc), c[1]));
      if (q != 0.0) roots.push_back(c[0] / q);
      roots.push_back(q / c[2]);
    }
  } else if (c.size() > 3) {
    // Higher degree: bracket sign changes on a fine grid and bisect.
    const std::size_t grid = 100000;
    double prev_t = 0.0, prev_v = d(0.0);
    for (std::size_t i = 1; i <= grid; ++i) {
      const double t = horizon * static_cast<double>(i) / grid;
      const double v = d(t);
      if ((prev_v <= 0.0) != (v <= 0.0)) {
        double lo = prev_t, hi = t;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          if ((d(lo) <= 0.0) == (d(mid) <= 0.0)) lo = mid;
          else hi = mid;
        }
        roots.push_back(0.5 * (lo + hi));
        break;
      }
      prev_t = t;
      prev_v = v;
    }
  }
  double first = std::numeric_limits<double>::infinity();
  for (double r : roots)
    if (r > 0.0 && r <= horizon) first = std::min(first, r);
  if (!std::isfinite(first)) throw std::invalid_argument("crossing_time: trajectories do not cross");
  return first;
}

CrossingOutcome crossing_trial(const GenModel& model, double t_fit, const LabeledData& full,
                               const CrossingSettings& settings, std::uint64_t seed) {
  if (model.k() != 2) throw std::invalid_argument("crossing_trial: model must have k=2");
  const double t_cross = crossing_time(model.trajectories[0], model.trajectories[1], model.horizon);
  if (!(t_cross < t_fit)) throw std::invalid_argument("crossing_trial: t_fit must lie after the crossing");

  std::vector<Observation2D> obs;
  std::vector<std::size_t> crossing_labels, noncrossing_labels;
  for (std::size_t i = 0; i < full.observations.size(); ++i) {
    const auto& x = full.observations[i];
    if (x.t > t_fit) continue;
    obs.push_back(x);
    crossing_labels.push_back(full.labels[i]);
    noncrossing_labels.push_back(x.t > t_cross ? 1 - full.labels[i] : full.labels[i]);
  }
  if (obs.size() < 2) throw std::invalid_argument("crossing_trial: too few observations before t_fit");

  const AssociationProblem problem(settings.lambda);
  const std::span<const Observation2D> data(obs);
  LloydConfig cfg;
  cfg.k = 2;
  cfg.max_iter = settings.max_iter;
  cfg.seed = seed;

  const auto crossing = lloyd_run(problem, data, cfg, Partition(crossing_labels, 2));
  const auto noncrossing = lloyd_run(problem, data, cfg, Partition(noncrossing_labels, 2));
  const auto best = multistart(problem, data, cfg, settings.n_starts);

  CrossingOutcome out;
  out.n_fit = obs.size();
  out.e_crossing = crossing.energy.total / t_fit;
  out.e_noncrossing = noncrossing.energy.total / t_fit;
  out.delta_e = out.e_crossing - out.e_noncrossing;
  out.found_crossing = association_accuracy(best.partition, crossing_labels) >
                       association_accuracy(best.partition, noncrossing_labels);
  return out;
}

CrossingOutcome crossing_trial(const GenModel& model, double t_fit, const CrossingSettings& settings,
                               CounterRng rng) {
  CounterRng data_rng = rng.split(0);
  const std::size_t half = settings.n_total / 2;
  const std::vector<std::size_t> counts{half, settings.n_total - half};
  const LabeledData full = sample_dataset_balanced(model, counts, data_rng);
  return crossing_trial(model, t_fit, full, settings, rng.split(1).key());
}

std::vector<CrossingCell> crossing_suite(const GenModel& model, std::span<const double> t_grid,
                                         std::size_t trials, const CrossingSettings& settings,
                                         std::uint64_t seed, std::size_t threads) {
  if (trials == 0) throw std::invalid_argument("crossing_suite: trials must be >= 1");
  std::vector<CrossingCell> cells(t_grid.size());
  for (std::size_t c = 0; c < t_grid.size(); ++c) {
    cells[c].t_fit = t_grid[c];
    cells[c].trials.resize(trials);
  }
  const CounterRng master(seed);
  parallel_for(t_grid.size() * trials, threads, [&](std::size_t idx) {
    const std::size_t c = idx / trials, t = idx % trials;
    cells[c].trials[t] = crossing_trial(model, t_grid[c], settings, master.split({c, t}));
  });
  return cells;
}

std::size_t adaptive_crossing_trials(const GenModel& model, double t_fit,
                                     const CrossingSettings& settings, std::uint64_t seed,
                                     std::size_t min_each, std::size_t max_trials) {
  // Separate stream from crossing_suite so the pre-run does not reuse its trials.
  const CounterRng master = CounterRng(seed).split(0xadad);
  std::size_t crossed = 0, not_crossed = 0;
  for (std::size_t t = 0; t < max_trials && std::min(crossed, not_crossed) < min_each; ++t) {
    if (crossing_trial(model, t_fit, settings, master.split(t)).found_crossing) ++crossed;
    else ++not_crossed;
  }
  return 10 * (crossed + not_crossed);
}

}  // namespace fkm
