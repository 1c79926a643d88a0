#pragma once

// Passive tracking of periodic emitters from time-of-arrival and amplitude
// measurements at fixed sensors. Cluster centers are straight-line tracks
// (initial position, velocity, emission offset) and the cost between a pulse
// and a track is the noise-weighted squared residual against the track's
// predicted pulse.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fkm/levenberg_marquardt.hpp"
#include "fkm/lloyd.hpp"
#include "fkm/rng.hpp"
#include "fkm/statistics.hpp"

namespace fkm {

using Vec2 = Eigen::Vector2d;

struct SensorNet {
  std::vector<Vec2> sensors;
  double c = 100.0;      // signal speed
  double tau = 1.0;      // frame period
  double alpha = 1e8;
  double beta = 5.0;
  double sigma = 0.03;   // time-of-arrival noise std
  double nu = 0.05;      // log-amplitude noise std
  double horizon = 200.0;

  void validate() const;

  // Three sensors at (-10,-10), (10,-10), (0,10); c=100, tau=1, alpha=1e8,
  // beta=5, sigma=0.03, nu=0.05.
  static SensorNet reference(double horizon = 200.0);
};

struct TrackParams {
  Vec2 x0 = Vec2::Zero();
  Vec2 v = Vec2::Zero();
  double o = 0.0;  // emission offset within a frame

  Vec2 position(double t) const { return x0 + t * v; }
  // Offset reduced to [0, tau) for reporting.
  double wrapped_offset(double tau) const;
};

// The two reference emitters: x1(t) = (sqrt(2) t / 400)(1,1) + (0,5), o1 = 0.3;
// x2(t) = (6,7) - (t/125)(1,0), o2 = 0.6.
std::vector<TrackParams> reference_tracks();

struct PulseObservation {
  double t = 0.0;  // time of arrival
  double a = 0.0;  // log-amplitude
  std::size_t sensor = 0;
};

// max{m in N : m tau <= t}
std::size_t emission_index(double t, double tau);

struct PulsePrediction {
  double time = 0.0;
  double log_amplitude = 0.0;
};

// psi(track, p, m): arrival time and log-amplitude of the frame-m pulse, with
// the emitter at x0 + m tau v.
PulsePrediction predict_pulse(const TrackParams& track, const SensorNet& net, std::size_t sensor,
                              std::size_t frame);

// (t - psi_t)^2 / sigma^2 + (a - psi_a)^2 / nu^2 with m taken from the arrival time.
double pulse_cost(const PulseObservation& obs, const TrackParams& track, const SensorNet& net);

// Where the emitter is taken to be when frame m's pulse is sent.
enum class EmitterPosition {
  frame_start,    // x(m tau), the position the prediction map uses
  emission_time,  // x(m tau + o)
};

struct PulseData {
  std::vector<PulseObservation> observations;
  std::vector<std::size_t> labels;
};

struct PulseGenOptions {
  EmitterPosition where = EmitterPosition::frame_start;
  bool noisy = true;  // false drops both noise terms
};

// One pulse per (frame, target, sensor) for every emission time m tau + o <= T.
// Pulses whose arrival falls outside [0, T] are not recorded.
PulseData generate_pulses(std::span<const TrackParams> tracks, const SensorNet& net, CounterRng& rng,
                          const PulseGenOptions& options = {});

struct TrackFitOptions {
  std::size_t n_starts = 5;
  LmOptions lm;
};

struct TrackFit {
  TrackParams params;
  double objective = 0.0;  // sum of pulse costs over the cluster
  bool converged = false;
};

// Data-driven starting point: per-frame trilateration from amplitude-implied
// ranges, a straight-line fit through those positions, and the median
// arrival-phase residual as the offset.
TrackParams initial_track_guess(std::span<const PulseObservation> cluster, const SensorNet& net);

// Least-squares track for one cluster by Levenberg-Marquardt from several
// starts: the warm start (if any), the data-driven guess, and random
// perturbations of it. Returns the best local minimum.
TrackFit fit_track(std::span<const PulseObservation> cluster, const SensorNet& net,
                   const TrackFitOptions& options, CounterRng rng,
                   const TrackParams* warm_start = nullptr);

// Sum of pulse costs of a cluster against one track.
double track_objective(std::span<const PulseObservation> cluster, const TrackParams& track,
                       const SensorNet& net);

// (1/k) sqrt(sum_j ||xhat_j - x_j||^2_L2 on [0, T]) under the best relabeling.
// Offsets are ignored.
double tracking_eta(std::span<const TrackParams> fitted, std::span<const TrackParams> truth,
                    double horizon, std::size_t n_grid = 2001);

class TrackingProblem {
public:
  using observation_type = PulseObservation;
  using center_type = TrackParams;

  TrackingProblem(SensorNet net, TrackFitOptions options);

  double cost(const PulseObservation& x, const TrackParams& c) const { return pulse_cost(x, c, net_); }
  TrackParams fit(std::span<const PulseObservation> cluster, const FitContext<TrackParams>& ctx) const;
  double penalty(const TrackParams&) const { return 0.0; }

  const SensorNet& net() const noexcept { return net_; }

private:
  SensorNet net_;
  TrackFitOptions options_;
};

struct SubsampleSettings {
  std::size_t n_starts = 5;  // Lloyd multistarts
  std::size_t max_iter = 100;
  TrackFitOptions fit;
  std::size_t n_grid = 2001;
};

struct SubsampleRow {
  double fraction = 0.0;
  std::size_t trial = 0;
  std::size_t n_s = 0;
  double eta = 0.0;
  double accuracy = 0.0;
  std::size_t iterations = 0;
  double energy = 0.0;
  bool converged = false;
};

// Per fraction and trial: draw round(fraction * n) pulses without replacement
// and cluster them with multistart Lloyd.
std::vector<SubsampleRow> subsample_experiment(const PulseData& full, std::span<const TrackParams> truth,
                                               std::span<const double> fractions, std::size_t trials,
                                               const SensorNet& net, const SubsampleSettings& settings,
                                               std::uint64_t seed, std::size_t threads = 1);

}  // namespace fkm
