#include "fkm/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>

#include "fkm/assoc.hpp"
#include "fkm/parallel.hpp"
#include "fkm/spline.hpp"

namespace fkm {

// ---------------------------------------------------------------------------
// Model

void SensorNet::validate() const {
  if (sensors.empty()) throw std::invalid_argument("SensorNet: need at least one sensor");
  if (!(c > 0.0) || !(tau > 0.0) || !(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("SensorNet: c, tau, alpha and beta must be > 0");
  if (!(sigma > 0.0) || !(nu > 0.0)) throw std::invalid_argument("SensorNet: sigma and nu must be > 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("SensorNet: horizon must be > 0");
}

SensorNet SensorNet::reference(double horizon) {
  SensorNet net;
  net.sensors = {Vec2(-10.0, -10.0), Vec2(10.0, -10.0), Vec2(0.0, 10.0)};
  net.horizon = horizon;
  return net;
}

double TrackParams::wrapped_offset(double tau) const {
  const double w = std::fmod(o, tau);
  return w < 0.0 ? w + tau : w;
}

std::vector<TrackParams> reference_tracks() {
  const double s = std::sqrt(2.0) / 400.0;
  TrackParams a{Vec2(0.0, 5.0), Vec2(s, s), 0.3};
  TrackParams b{Vec2(6.0, 7.0), Vec2(-1.0 / 125.0, 0.0), 0.6};
  return {a, b};
}

std::size_t emission_index(double t, double tau) {
  if (!(t >= 0.0) || !(tau > 0.0)) throw std::invalid_argument("emission_index: need t >= 0, tau > 0");
  auto m = static_cast<std::size_t>(std::floor(t / tau));
  // floor(t / tau) can be off by one when t / tau rounds across an integer.
  while (static_cast<double>(m + 1) * tau <= t) ++m;
  while (m > 0 && static_cast<double>(m) * tau > t) --m;
  return m;
}

PulsePrediction predict_pulse(const TrackParams& track, const SensorNet& net, std::size_t sensor,
                              std::size_t frame) {
  const double frame_time = static_cast<double>(frame) * net.tau;
  const Vec2 pos = track.x0 + frame_time * track.v;
  const double d2 = (pos - net.sensors[sensor]).squaredNorm();
  return {std::sqrt(d2) / net.c + track.o + frame_time, std::log(net.alpha / (d2 + net.beta))};
}

double pulse_cost(const PulseObservation& obs, const TrackParams& track, const SensorNet& net) {
  const auto psi = predict_pulse(track, net, obs.sensor, emission_index(obs.t, net.tau));
  const double dt = (obs.t - psi.time) / net.sigma;
  const double da = (obs.a - psi.log_amplitude) / net.nu;
  return dt * dt + da * da;
}

PulseData generate_pulses(std::span<const TrackParams> tracks, const SensorNet& net, CounterRng& rng,
                          const PulseGenOptions& options) {
  net.validate();
  PulseData data;
  std::normal_distribution<double> time_noise(0.0, net.sigma), amp_noise(0.0, net.nu);
  for (std::size_t m = 0;; ++m) {
    const double frame_time = static_cast<double>(m) * net.tau;
    bool any = false;
    for (std::size_t j = 0; j < tracks.size(); ++j) {
      const double emit = frame_time + tracks[j].o;
      if (emit > net.horizon) continue;
      any = true;
      const Vec2 pos = tracks[j].position(options.where == EmitterPosition::frame_start ? frame_time : emit);
      for (std::size_t p = 0; p < net.sensors.size(); ++p) {
        const double d2 = (pos - net.sensors[p]).squaredNorm();
        PulseObservation obs;
        obs.sensor = p;
        obs.t = emit + std::sqrt(d2) / net.c;
        obs.a = std::log(net.alpha / (d2 + net.beta));
        if (options.noisy) {
          obs.t += time_noise(rng);
          obs.a += amp_noise(rng);
        }
        if (obs.t < 0.0 || obs.t > net.horizon) continue;
        data.observations.push_back(obs);
        data.labels.push_back(j);
      }
    }
    if (!any && frame_time > net.horizon) break;
  }
  return data;
}

// ---------------------------------------------------------------------------
// Track fitting

double track_objective(std::span<const PulseObservation> cluster, const TrackParams& track,
                       const SensorNet& net) {
  double s = 0.0;
  for (const auto& obs : cluster) s += pulse_cost(obs, track, net);
  return s;
}

namespace {

Eigen::VectorXd pack(const TrackParams& p) {
  Eigen::VectorXd x(5);
  x << p.x0.x(), p.x0.y(), p.v.x(), p.v.y(), p.o;
  return x;
}

TrackParams unpack(const Eigen::VectorXd& x) {
  return {Vec2(x[0], x[1]), Vec2(x[2], x[3]), x[4]};
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Position from ranges to every sensor, linearized against the first sensor.
std::optional<Vec2> trilaterate(const SensorNet& net, const std::vector<double>& range2) {
  const std::size_t s = net.sensors.size();
  if (s < 3) return std::nullopt;
  Eigen::MatrixXd a(s - 1, 2);
  Eigen::VectorXd b(s - 1);
  const Vec2& z0 = net.sensors[0];
  for (std::size_t q = 1; q < s; ++q) {
    const Vec2& zq = net.sensors[q];
    a.row(static_cast<Eigen::Index>(q - 1)) = 2.0 * (zq - z0).transpose();
    b[static_cast<Eigen::Index>(q - 1)] = range2[0] - range2[q] + zq.squaredNorm() - z0.squaredNorm();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 2) return std::nullopt;
  return Vec2(qr.solve(b));
}

}  // namespace

TrackParams initial_track_guess(std::span<const PulseObservation> cluster, const SensorNet& net) {
  if (cluster.empty()) throw std::invalid_argument("initial_track_guess: empty cluster");
  const std::size_t s = net.sensors.size();

  // frame -> per-sensor (sum of squared ranges, count)
  std::map<std::size_t, std::vector<std::pair<double, std::size_t>>> frames;
  for (const auto& obs : cluster) {
    auto& slot = frames[emission_index(obs.t, net.tau)];
    if (slot.empty()) slot.assign(s, {0.0, 0});
    const double r2 = std::max(net.alpha / std::exp(obs.a) - net.beta, 0.0);
    slot[obs.sensor].first += r2;
    ++slot[obs.sensor].second;
  }

  std::vector<double> times;
  std::vector<Vec2> positions;
  for (const auto& [m, slot] : frames) {
    std::vector<double> r2(s);
    bool complete = true;
    for (std::size_t p = 0; p < s; ++p) {
      if (slot[p].second == 0) {
        complete = false;
        break;
      }
      r2[p] = slot[p].first / static_cast<double>(slot[p].second);
    }
    if (!complete) continue;
    if (auto pos = trilaterate(net, r2)) {
      times.push_back(static_cast<double>(m) * net.tau);
      positions.push_back(*pos);
    }
  }

  TrackParams guess;
  if (positions.empty()) {
    for (const auto& z : net.sensors) guess.x0 += z;
    guess.x0 /= static_cast<double>(s);
  } else if (positions.size() == 1 || times.front() == times.back()) {
    for (const auto& p : positions) guess.x0 += p;
    guess.x0 /= static_cast<double>(positions.size());
  } else {
    Eigen::MatrixXd design(static_cast<Eigen::Index>(times.size()), 2);
    Eigen::MatrixXd rhs(static_cast<Eigen::Index>(times.size()), 2);
    for (std::size_t i = 0; i < times.size(); ++i) {
      design(static_cast<Eigen::Index>(i), 0) = 1.0;
      design(static_cast<Eigen::Index>(i), 1) = times[i];
      rhs.row(static_cast<Eigen::Index>(i)) = positions[i].transpose();
    }
    const Eigen::MatrixXd coef = design.colPivHouseholderQr().solve(rhs);
    guess.x0 = coef.row(0).transpose();
    guess.v = coef.row(1).transpose();
  }

  std::vector<double> phases;
  phases.reserve(cluster.size());
  for (const auto& obs : cluster) {
    const std::size_t m = emission_index(obs.t, net.tau);
    const double frame_time = static_cast<double>(m) * net.tau;
    const double d = (guess.position(frame_time) - net.sensors[obs.sensor]).norm();
    phases.push_back(obs.t - frame_time - d / net.c);
  }
  guess.o = median_of(std::move(phases));
  return guess;
}

TrackFit fit_track(std::span<const PulseObservation> cluster, const SensorNet& net,
                   const TrackFitOptions& options, CounterRng rng, const TrackParams* warm_start) {
  if (cluster.empty()) throw std::invalid_argument("fit_track: empty cluster");
  if (options.n_starts == 0) throw std::invalid_argument("fit_track: n_starts must be >= 1");

  std::vector<std::size_t> frame(cluster.size());
  for (std::size_t i = 0; i < cluster.size(); ++i) frame[i] = emission_index(cluster[i].t, net.tau);

  auto residuals = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r) {
    const TrackParams p = unpack(x);
    r.resize(static_cast<Eigen::Index>(2 * cluster.size()));
    for (std::size_t i = 0; i < cluster.size(); ++i) {
      const auto psi = predict_pulse(p, net, cluster[i].sensor, frame[i]);
      r[static_cast<Eigen::Index>(2 * i)] = (cluster[i].t - psi.time) / net.sigma;
      r[static_cast<Eigen::Index>(2 * i + 1)] = (cluster[i].a - psi.log_amplitude) / net.nu;
    }
  };

  const TrackParams guess = initial_track_guess(cluster, net);
  std::vector<TrackParams> starts;
  if (warm_start) starts.push_back(*warm_start);
  starts.push_back(guess);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 1; s < options.n_starts; ++s) {
    TrackParams p = guess;
    p.x0 += 3.0 * Vec2(normal(rng), normal(rng));
    p.v += 0.01 * Vec2(normal(rng), normal(rng));
    p.o = net.tau * rng.uniform();
    starts.push_back(p);
  }

  TrackFit best;
  bool have_best = false;
  for (const auto& start : starts) {
    const LmResult lm = levenberg_marquardt(residuals, pack(start), options.lm);
    if (!have_best || lm.objective < best.objective) {
      best.params = unpack(lm.x);
      best.objective = lm.objective;
      best.converged = lm.converged;
      have_best = true;
    }
  }
  return best;
}

double tracking_eta(std::span<const TrackParams> fitted, std::span<const TrackParams> truth,
                    double horizon, std::size_t n_grid) {
  const std::size_t k = truth.size();
  if (fitted.size() != k) throw std::invalid_argument("tracking_eta: number of tracks differs");
  std::vector<std::vector<double>> cost(k, std::vector<double>(k));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t c = 0; c < k; ++c)
      cost[j][c] = simpson(
          [&](double t) { return (fitted[c].position(t) - truth[j].position(t)).squaredNorm(); }, 0.0,
          horizon, n_grid);
  const auto perm = best_assignment(cost);
  double sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) sum += cost[j][perm[j]];
  return std::sqrt(std::max(sum, 0.0)) / static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// Lloyd instantiation and subsampling experiment

TrackingProblem::TrackingProblem(SensorNet net, TrackFitOptions options)
    : net_(std::move(net)), options_(options) {
  net_.validate();
}

TrackParams TrackingProblem::fit(std::span<const PulseObservation> cluster,
                                 const FitContext<TrackParams>& ctx) const {
  return fit_track(cluster, net_, options_, ctx.rng, ctx.previous).params;
}

namespace {

__extension__ typedef unsigned __int128 uint128;

std::size_t uniform_index(CounterRng& rng, std::size_t bound) {
  return static_cast<std::size_t>((static_cast<uint128>(rng()) * bound) >> 64);
}

}  // namespace

std::vector<SubsampleRow> subsample_experiment(const PulseData& full, std::span<const TrackParams> truth,
                                               std::span<const double> fractions, std::size_t trials,
                                               const SensorNet& net, const SubsampleSettings& settings,
                                               std::uint64_t seed, std::size_t threads) {
  for (double f : fractions)
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument("subsample_experiment: fractions must lie in (0, 1]");
  if (trials == 0) throw std::invalid_argument("subsample_experiment: trials must be >= 1");
  const std::size_t n = full.observations.size();
  const std::size_t k = truth.size();
  if (n < k) throw std::invalid_argument("subsample_experiment: fewer observations than tracks");

  const TrackingProblem problem(net, settings.fit);
  const CounterRng master(seed);
  std::vector<SubsampleRow> rows(fractions.size() * trials);

  parallel_for(rows.size(), threads, [&](std::size_t idx) {
    const std::size_t cell = idx / trials, trial = idx % trials;
    CounterRng rng = master.split({cell, trial});
    const double f = fractions[cell];
    const std::size_t n_s =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(f * static_cast<double>(n))), k, n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < n_s; ++i) std::swap(order[i], order[i + uniform_index(rng, n - i)]);
    order.resize(n_s);
    std::sort(order.begin(), order.end());

    std::vector<PulseObservation> sample;
    std::vector<std::size_t> labels;
    sample.reserve(n_s);
    labels.reserve(n_s);
    for (auto i : order) {
      sample.push_back(full.observations[i]);
      labels.push_back(full.labels[i]);
    }

    LloydConfig cfg;
    cfg.k = k;
    cfg.max_iter = settings.max_iter;
    cfg.seed = rng.split(0).key();
    const auto fit = multistart(problem, std::span<const PulseObservation>(sample), cfg, settings.n_starts);

    SubsampleRow& row = rows[idx];
    row.fraction = f;
    row.trial = trial;
    row.n_s = n_s;
    row.eta = tracking_eta(fit.centers, truth, net.horizon, settings.n_grid);
    row.accuracy = association_accuracy(fit.partition, labels);
    row.iterations = fit.iterations;
    row.energy = fit.energy.total;
    row.converged = fit.converged;
  });
  return rows;
}

}  // namespace fkm
