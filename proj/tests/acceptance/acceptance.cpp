// Acceptance checks, one numbered criterion each. With no arguments every
// criterion runs; otherwise only the listed ones. Prints one PASS/FAIL line
// per criterion and exits non-zero if any failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fkm/assoc.hpp"
#include "fkm/cli.hpp"
#include "fkm/fourier.hpp"
#include "fkm/lloyd.hpp"
#include "fkm/spline.hpp"
#include "fkm/statistics.hpp"
#include "fkm/tracking.hpp"
#include "oracles.hpp"

using namespace fkm;

namespace {

constexpr std::uint64_t kSeed = 20240611;

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [violated]");
  }
};

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

std::size_t threads() {
  if (const char* env = std::getenv("FKM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return 1;
}

double median_of(std::vector<double> v) { return summarize(v).median; }

// Random spline instance: m in [3, max_m], abscissae in [0, 10] at least 1e-3 apart.
std::vector<WeightedPoint> random_instance(CounterRng rng, std::size_t max_m) {
  const std::size_t m = 3 + static_cast<std::size_t>(rng() % (max_m - 2));
  std::vector<double> t(m);
  for (;;) {
    for (auto& x : t) x = 10.0 * rng.uniform();
    std::sort(t.begin(), t.end());
    bool ok = true;
    for (std::size_t i = 1; i < m; ++i) ok = ok && t[i] - t[i - 1] > 1e-3;
    if (ok) break;
  }
  std::vector<WeightedPoint> pts;
  for (double x : t) pts.push_back({x, 20.0 * rng.uniform() - 10.0, 0.5 + rng.uniform()});
  return pts;
}

// Objective of the natural cubic interpolant through knot values g.
double dense_objective(const std::vector<WeightedPoint>& pts, const Eigen::VectorXd& g, double lambda,
                       std::size_t n_total) {
  std::vector<double> t;
  for (const auto& p : pts) t.push_back(p.t);
  Eigen::MatrixXd q, r;
  oracle::dense_penalty(t, q, r);
  const Eigen::VectorXd qg = q.transpose() * g;
  double data = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double e = pts[i].z - g[static_cast<Eigen::Index>(i)];
    data += pts[i].w * e * e;
  }
  return data / static_cast<double>(n_total) + lambda * qg.dot(r.ldlt().solve(qg));
}

Outcome spline_oracle() {
  Outcome out;
  const double lambdas[] = {1e-3, 1.0, 1e3};
  double worst_rel = 0.0, worst_gain = -1.0;
  std::size_t instances = 0;
  for (std::size_t li = 0; li < 3; ++li) {
    for (std::size_t inst = 0; inst < 25; ++inst) {
      CounterRng rng = CounterRng(kSeed).split({1, li, inst});
      const auto pts = random_instance(rng.split(0), 12);
      const std::size_t m = pts.size();
      const double lambda = lambdas[li];
      const auto s = fit_smoothing_spline(pts, lambda, m);

      std::vector<double> t, z, w;
      for (const auto& p : pts) {
        t.push_back(p.t);
        z.push_back(p.z);
        w.push_back(p.w);
      }
      Eigen::VectorXd gamma;
      const Eigen::VectorXd ref = oracle::dense_reinsch_values(t, z, w, lambda * static_cast<double>(m), gamma);
      Eigen::VectorXd g(static_cast<Eigen::Index>(m));
      for (std::size_t i = 0; i < m; ++i) g[static_cast<Eigen::Index>(i)] = s(t[i]);
      worst_rel = std::max(worst_rel, (g - ref).norm() / ref.norm());

      const double f0 = dense_objective(pts, g, lambda, m);
      CounterRng prng = rng.split(1);
      for (int k = 0; k < 100; ++k) {
        Eigen::VectorXd d(static_cast<Eigen::Index>(m));
        for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = 2.0 * prng.uniform() - 1.0;
        const double scale = std::pow(10.0, -1.0 - 5.0 * prng.uniform());
        const double f = dense_objective(pts, g + scale * d.normalized(), lambda, m);
        worst_gain = std::max(worst_gain, (f0 - f) / std::abs(f0));
      }
      ++instances;
    }
  }
  out.check(worst_rel <= 1e-8, std::to_string(instances) + " instances, max relative error " + fmt(worst_rel));
  out.check(worst_gain <= 1e-12, "largest relative objective decrease under perturbation " + fmt(worst_gain));
  return out;
}

Outcome penalty_exactness() {
  Outcome out;
  double worst = 0.0;
  for (std::size_t inst = 0; inst < 25; ++inst) {
    CounterRng rng = CounterRng(kSeed).split({2, inst});
    const auto pts = random_instance(rng.split(0), 12);
    const double lambda = std::pow(10.0, -3.0 + 6.0 * rng.split(1).uniform());
    const auto s = fit_smoothing_spline(pts, lambda, pts.size());
    const double quad = oracle::piecewise_simpson(
        [&](double x) { return s.second_derivative(x) * s.second_derivative(x); }, s.knots(), 3);
    const double rel = std::abs(s.bending_energy() - quad) / quad;
    worst = std::max(worst, rel);
  }
  out.check(worst <= 1e-10, "25 fits, max relative error " + fmt(worst));
  return out;
}

Outcome fourier_mc() {
  Outcome out;
  const std::size_t ns[] = {101, 1001};
  const double lambdas[] = {1.0};
  const double ps[] = {-1.0, -0.8, 0.0, 0.5};
  const auto rows = fourier_scan(ns, lambdas, ps, 1.0, 500, kSeed, 0.0, threads());
  double worst = 0.0;
  for (const auto& r : rows) {
    const double z = std::abs(r.s_mc_mean - r.s_closed) / r.s_mc_se;
    worst = std::max(worst, z);
    out.check(z <= 3.0, "n=" + std::to_string(r.n) + " p=" + fmt(r.p) + " |diff|/SE=" + fmt(z, 3));
  }
  out.detail = std::to_string(rows.size()) + " cells, worst |S_mc - S_closed|/SE = " + fmt(worst, 3) +
               (out.pass ? "" : " (" + out.detail + ")");
  return out;
}

Outcome scaling_regimes() {
  Outcome out;
  auto S = [](std::size_t n, double p) { return closed_form_S(n, 1.0, p, 1.0); };
  // Odd sample counts only: 10n is replaced by 10n - 9.
  for (std::size_t n : {101u, 1001u, 10001u}) {
    const double ratio = S(10 * n - 9, -1.0) / S(n, -1.0);
    out.check(ratio > 1.5, "p=-1 S(" + std::to_string(10 * n - 9) + ")/S(" + std::to_string(n) + ")=" + fmt(ratio));
  }
  for (double p : {-0.8, 0.0}) {
    double worst = 0.0;
    for (std::size_t n : {1001u, 3001u, 10001u, 30001u, 99999u}) worst = std::max(worst, S(n, p) / S(1001, p));
    out.check(worst <= 2.0, "p=" + fmt(p) + " max S(n)/S(1001)=" + fmt(worst));
  }
  const double r = S(100001, 0.5) / S(1001, 0.5);
  out.check(r < 0.5, "p=0.5 S(100001)/S(1001)=" + fmt(r));
  return out;
}

Outcome lower_bound() {
  Outcome out;
  PeriodicProblem prob;
  prob.n = 101;
  prob.lambda = 1.0;
  prob.p = 0.0;
  prob.sigma2 = 1.0;
  prob.mu_dagger_hat = cosine_signal_hat(101, 2.0);
  const auto est = empirical_penalty_mc(prob, 500, CounterRng(kSeed).split(5));
  const double pi4 = std::pow(M_PI, 4);
  const double bound = 32.0 * pi4 / ((1.0 + 16.0 * pi4) * (1.0 + 16.0 * pi4));
  out.check(est.mean >= bound - 3.0 * est.standard_error,
            "MC mean " + fmt(est.mean, 6) + " (SE " + fmt(est.standard_error, 3) + ") vs bound " + fmt(bound, 6));
  return out;
}

// Random small association instance: k tracks, n points.
std::vector<Observation2D> random_tracks(CounterRng rng, std::size_t n, std::size_t k) {
  std::vector<double> a(k), b(k);
  for (std::size_t j = 0; j < k; ++j) {
    a[j] = 20.0 * rng.uniform() - 10.0;
    b[j] = 2.0 * rng.uniform() - 1.0;
  }
  std::vector<Observation2D> d(n);
  for (auto& x : d) {
    const std::size_t j = static_cast<std::size_t>(rng() % k);
    x.t = 10.0 * rng.uniform();
    x.z = a[j] + b[j] * x.t + 2.0 * (rng.uniform() - 0.5);
  }
  return d;
}

// Energy of a partition with every cluster fitted by the dense oracle.
double oracle_partition_energy(std::span<const Observation2D> data, const std::vector<std::size_t>& labels,
                               std::size_t k, double lambda) {
  const std::size_t n = data.size();
  double data_term = 0.0, bend = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<Observation2D> members;
    for (std::size_t i = 0; i < n; ++i)
      if (labels[i] == j) members.push_back(data[i]);
    if (members.size() <= 2) continue;  // interpolated exactly by a line
    std::sort(members.begin(), members.end(), [](auto& x, auto& y) { return x.t < y.t; });
    std::vector<double> t, z, w;
    for (const auto& m : members) {
      t.push_back(m.t);
      z.push_back(m.z);
      w.push_back(1.0);
    }
    Eigen::VectorXd gamma;
    const Eigen::VectorXd g = oracle::dense_reinsch_values(t, z, w, lambda * static_cast<double>(n), gamma);
    Eigen::MatrixXd q, r;
    oracle::dense_penalty(t, q, r);
    for (std::size_t i = 0; i < t.size(); ++i) data_term += (z[i] - g[static_cast<Eigen::Index>(i)]) * (z[i] - g[static_cast<Eigen::Index>(i)]);
    bend += gamma.dot(r * gamma);
  }
  return data_term / static_cast<double>(n) + lambda * bend;
}

Outcome lloyd_properties() {
  Outcome out;
  std::size_t monotone_bad = 0, fixed_bad = 0, converged = 0;
  for (std::size_t inst = 0; inst < 200; ++inst) {
    CounterRng rng = CounterRng(kSeed).split({6, inst});
    const std::size_t k = 2 + static_cast<std::size_t>(rng() % 2);
    const std::size_t n = 6 + static_cast<std::size_t>(rng() % 25);
    const double lambda = std::pow(10.0, -2.0 + 3.0 * rng.uniform());
    const auto data = random_tracks(rng.split(0), n, k);
    const AssociationProblem problem(lambda);
    LloydConfig cfg;
    cfg.k = k;
    cfg.seed = rng();
    CounterRng init = rng.split(1);
    const auto run = lloyd_run(problem, std::span<const Observation2D>(data), cfg, random_partition(n, k, init));
    for (std::size_t i = 1; i < run.energy_trace.size(); ++i)
      if (run.energy_trace[i] > run.energy_trace[i - 1] * (1.0 + 1e-12) + 1e-14) ++monotone_bad;
    if (run.converged) {
      ++converged;
      const Partition nearest = assign_nearest(std::span<const Observation2D>(data),
                                               std::span<const SplineCenter>(run.centers),
                                               [&](const Observation2D& x, const SplineCenter& c) { return problem.cost(x, c); });
      Partition again = run.partition;
      const auto refit = detail::refit(problem, std::span<const Observation2D>(data), again, cfg, run.iterations, &run.centers);
      const auto e0 = partition_energy(problem, std::span<const Observation2D>(data),
                                       std::span<const SplineCenter>(run.centers), run.partition);
      const auto e1 = partition_energy(problem, std::span<const Observation2D>(data),
                                       std::span<const SplineCenter>(refit), again);
      if (!(nearest == run.partition) || !(again == run.partition) ||
          std::abs(e0.total - e1.total) > 1e-9 * (1.0 + std::abs(e0.total)))
        ++fixed_bad;
    }
  }
  out.check(monotone_bad == 0, "200 instances, " + std::to_string(monotone_bad) + " energy increases");
  out.check(fixed_bad == 0, std::to_string(converged) + " converged runs, " + std::to_string(fixed_bad) +
                                " not fixed points");

  // n = 8, k = 2: Lloyd from every initial partition versus exhaustive search.
  std::size_t oracle_bad = 0;
  double worst = 0.0;
  const std::size_t n_oracle = 40;
  for (std::size_t inst = 0; inst < n_oracle; ++inst) {
    CounterRng rng = CounterRng(kSeed).split({66, inst});
    const double lambda = std::pow(10.0, -2.0 + 3.0 * rng.uniform());
    const auto data = random_tracks(rng.split(0), 8, 2);
    const AssociationProblem problem(lambda);
    double exhaustive = std::numeric_limits<double>::infinity();
    double lloyd_best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < 256; ++mask) {
      std::vector<std::size_t> labels(8);
      for (std::size_t i = 0; i < 8; ++i) labels[i] = (mask >> i) & 1u;
      if (mask == 0 || mask == 255) continue;
      exhaustive = std::min(exhaustive, oracle_partition_energy(data, labels, 2, lambda));
      LloydConfig cfg;
      cfg.k = 2;
      cfg.seed = mask;
      const auto run = lloyd_run(problem, std::span<const Observation2D>(data), cfg, Partition(labels, 2));
      lloyd_best = std::min(lloyd_best, run.energy.total);
    }
    const double rel = std::abs(lloyd_best - exhaustive) / exhaustive;
    worst = std::max(worst, rel);
    if (rel > 1e-8) ++oracle_bad;
  }
  out.check(oracle_bad == 0, std::to_string(n_oracle) + " exhaustive 2^8 instances, max relative gap " + fmt(worst));
  return out;
}

Outcome association_trend() {
  Outcome out;
  const GenModel model = GenModel::figure1();
  const std::size_t ns[] = {300, 600, 1200};
  AssocSettings s;
  s.lambda = 1.0;
  s.n_starts = 10;
  s.max_iter = 100;
  const auto cells = monte_carlo_suite(model, ns, 50, s, kSeed, threads());
  std::vector<double> med_eta, med_energy;
  std::size_t below = 0, total = 0;
  double med_acc_1200 = 0.0;
  for (const auto& c : cells) {
    std::vector<double> eta, energy, acc;
    for (const auto& t : c.trials) {
      eta.push_back(t.eta);
      energy.push_back(t.energy);
      acc.push_back(t.accuracy);
      below += t.energy <= t.truth_energy ? 1 : 0;
      ++total;
    }
    med_eta.push_back(median_of(eta));
    med_energy.push_back(median_of(energy));
    if (c.n == 1200) med_acc_1200 = median_of(acc);
  }
  out.check(med_eta[0] > med_eta[1] && med_eta[1] > med_eta[2],
            "median eta " + fmt(med_eta[0]) + " > " + fmt(med_eta[1]) + " > " + fmt(med_eta[2]));
  out.check(med_acc_1200 >= 90.0, "median accuracy at n=1200 " + fmt(med_acc_1200) + "%");
  const double rel = std::abs(med_energy[1] - med_energy[2]) / med_energy[2];
  out.check(rel < 0.15, "median energy n=600 " + fmt(med_energy[1]) + " vs n=1200 " + fmt(med_energy[2]) +
                            " (rel diff " + fmt(rel, 3) + ")");
  const double frac = 100.0 * static_cast<double>(below) / static_cast<double>(total);
  out.check(frac >= 90.0, "fitted minimum <= generating energy in " + fmt(frac) + "% of trials");
  return out;
}

Outcome crossing_trend() {
  Outcome out;
  const GenModel model = GenModel::crossing();
  std::vector<double> grid;
  for (int i = 0; i <= 14; ++i) grid.push_back(std::round((9.6 + 0.1 * i) * 10.0) / 10.0);
  CrossingSettings s;  // n_total 220, lambda 1, one random start
  const auto cells = crossing_suite(model, grid, 200, s, kSeed, threads());
  std::vector<double> mean_de;
  std::string series;
  for (const auto& c : cells) {
    std::vector<double> de;
    for (const auto& o : c.trials) de.push_back(o.delta_e);
    mean_de.push_back(mean(de));
    series += (series.empty() ? "" : " ") + fmt(mean_de.back(), 3);
  }
  const double slope = ols_slope(grid, mean_de);
  std::size_t found = 0;
  for (const auto& o : cells.back().trials) found += o.found_crossing ? 1 : 0;
  const double rate = 100.0 * static_cast<double>(found) / static_cast<double>(cells.back().trials.size());
  out.check(slope > 0.0, "least-squares slope of mean dE = E_c - E_nc over T is " + fmt(slope) +
                             " (means: " + series + ")");
  out.check(rate >= 45.0 && rate <= 85.0, "crossing detected at T=11 in " + fmt(rate) + "% of trials");
  return out;
}

Outcome tracking_experiment() {
  Outcome out;
  const SensorNet net = SensorNet::reference(200.0);
  const auto truth = reference_tracks();
  CounterRng data_rng = CounterRng(kSeed).split(9);
  const PulseData data = generate_pulses(truth, net, data_rng);
  const double fractions[] = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  SubsampleSettings s;
  s.n_starts = 5;
  const auto rows = subsample_experiment(data, truth, fractions, 20, net, s, CounterRng(kSeed).split(10).key(),
                                         threads());
  std::size_t perfect = 0;
  std::vector<double> eta03, eta10;
  for (const auto& r : rows) {
    perfect += r.accuracy == 100.0 ? 1 : 0;
    if (std::abs(r.fraction - 0.3) < 1e-12) eta03.push_back(r.eta);
    if (std::abs(r.fraction - 1.0) < 1e-12) eta10.push_back(r.eta);
  }
  const double pct = 100.0 * static_cast<double>(perfect) / static_cast<double>(rows.size());
  out.check(pct >= 95.0, std::to_string(data.observations.size()) + " pulses; accuracy 100% in " + fmt(pct) +
                             "% of " + std::to_string(rows.size()) + " trials");
  const double m03 = median_of(eta03), m10 = median_of(eta10);
  out.check(m10 <= m03, "median eta at fraction 1.0 " + fmt(m10) + " vs 0.3 " + fmt(m03));
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_determinism() {
  Outcome out;
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fkm_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::vector<std::vector<std::string>> commands{
      {"assoc", "--n", "300", "--trials", "2", "--seed", "7"},
      {"crossing", "--seed", "3"},
      {"fourier", "--trials", "100", "--seed", "1"},
      {"tracking", "--horizon", "60", "--trials", "2", "--seed", "5"},
      {"spline-check", "--seed", "2"},
  };
  for (const auto& base : commands) {
    std::string first;
    bool same = true, ok = true;
    for (int rep = 0; rep < 2; ++rep) {
      auto args = base;
      const std::string path = (dir / (base[0] + std::to_string(rep) + ".csv")).string();
      args.insert(args.end(), {"--out", path, "--threads", rep == 0 ? "1" : "2"});
      std::ostringstream sink, err;
      if (fkm::cli::run_cli(args, sink, err) != 0) {
        ok = false;
        break;
      }
      const std::string csv = slurp(path);
      if (rep == 0) first = csv;
      else same = csv == first && !csv.empty();
    }
    out.check(ok && same, base[0] + (ok ? (same ? " identical" : " differs") : " failed to run"));
  }
  fs::remove_all(dir);
  return out;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "spline oracle equivalence", 5, spline_oracle},
      {2, "penalty exactness", 5, penalty_exactness},
      {3, "Fourier closed form vs Monte Carlo", 60, fourier_mc},
      {4, "scaling regimes", 5, scaling_regimes},
      {5, "penalty lower bound", 30, lower_bound},
      {6, "Lloyd properties", 60, lloyd_properties},
      {7, "association experiment trend", 900, association_trend},
      {8, "crossing experiment trend", 900, crossing_trend},
      {9, "tracking experiment", 900, tracking_experiment},
      {10, "CLI determinism", 1e9, cli_determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_s) o.check(false, "runtime " + fmt(secs, 3) + " s over budget " + fmt(c.budget_s) + " s");
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << " [" << fmt(secs, 3) << " s]" << std::endl;
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
