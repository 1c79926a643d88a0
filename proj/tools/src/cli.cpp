#include "fkm/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "fkm/assoc.hpp"
#include "fkm/fourier.hpp"
#include "fkm/spline.hpp"
#include "fkm/statistics.hpp"
#include "fkm/tracking.hpp"

#ifndef FKM_VERSION
#define FKM_VERSION "0.0.0"
#endif

namespace fkm::cli {

std::string version_string() { return std::string("fkmeans ") + FKM_VERSION; }

std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

std::string reference_tracks_string() {
  std::string out;
  for (const auto& t : reference_tracks()) {
    if (!out.empty()) out += ';';
    out += format_double(t.x0.x()) + ',' + format_double(t.x0.y()) + ',' + format_double(t.v.x()) + ',' +
           format_double(t.v.y()) + ',' + format_double(t.o);
  }
  return out;
}

const std::vector<ParamSpec>& assoc_params() {
  static const std::vector<ParamSpec> p{
      {"n", "300,600,1200", "data set sizes"},
      {"trials", "50", "Monte Carlo trials per n"},
      {"lambda", "1", "smoothing weight"},
      {"starts", "10", "multistart initializations"},
      {"max_iter", "100", "Lloyd iteration cap"},
      {"horizon", "10", "time horizon T"},
      {"trajectories", "-15,-2,0.2;5,1;40", "polynomial coefficients, ';' between tracks"},
      {"weights", "", "mixture weights (empty: uniform)"},
      {"noise_variance", "5", "noise variance"},
      {"noise_bound", "100", "noise truncation bound (inf: none)"},
      {"n_grid", "2001", "Simpson nodes for eta"},
  };
  return p;
}

const std::vector<ParamSpec>& crossing_params() {
  static const std::vector<ParamSpec> p{
      {"t_min", "9.6", "first fit horizon"},
      {"t_max", "11", "last fit horizon"},
      {"t_step", "0.1", "fit horizon step"},
      {"trials", "200", "trials per fit horizon (ignored when adaptive)"},
      {"adaptive", "false", "choose trials per horizon with the pre-run rule"},
      {"adaptive_min", "100", "outcomes of each kind required by the pre-run"},
      {"n_total", "220", "observations over [0, horizon], split evenly"},
      {"lambda", "1", "smoothing weight"},
      {"starts", "1", "random-start runs deciding the found hypothesis"},
      {"max_iter", "100", "Lloyd iteration cap"},
      {"horizon", "11", "data horizon"},
      {"trajectories", "-20,0,1;20,4", "polynomial coefficients of the two tracks"},
      {"weights", "", "mixture weights (empty: uniform)"},
      {"noise_variance", "5", "noise variance"},
      {"noise_bound", "inf", "noise truncation bound (inf: none)"},
  };
  return p;
}

const std::vector<ParamSpec>& fourier_params() {
  static const std::vector<ParamSpec> p{
      {"n", "101,1001", "odd sample counts"},
      {"lambda", "1", "regularization constants"},
      {"p", "-1,-0.8,0,0.5", "regularization exponents"},
      {"sigma2", "1", "noise variance"},
      {"trials", "500", "Monte Carlo trials per cell"},
      {"signal_amplitude", "0", "A in mu(t) = A cos(2 pi t)"},
      {"dft", "direct", "direct | fast"},
  };
  return p;
}

const std::vector<ParamSpec>& tracking_params() {
  static const std::vector<ParamSpec> p{
      {"horizon", "200", "time horizon T"},
      {"fractions", "0.3,0.4,0.5,0.6,0.7,0.8,0.9,1", "subsample fractions"},
      {"trials", "20", "trials per fraction"},
      {"starts", "5", "Lloyd multistarts"},
      {"fit_starts", "5", "track-fit starts per cluster"},
      {"max_iter", "100", "Lloyd iteration cap"},
      {"lm_max_iter", "200", "Levenberg-Marquardt iteration cap"},
      {"sensors", "-10,-10;10,-10;0,10", "sensor positions"},
      {"tracks", reference_tracks_string(), "x0x,x0y,vx,vy,o per target"},
      {"c", "100", "signal speed"},
      {"tau", "1", "frame period"},
      {"alpha", "1e8", "amplitude constant"},
      {"beta", "5", "amplitude constant"},
      {"sigma", "0.03", "time-of-arrival noise std"},
      {"nu", "0.05", "log-amplitude noise std"},
      {"emitter_position", "frame_start", "frame_start | emission_time"},
      {"n_grid", "2001", "Simpson nodes for eta"},
  };
  return p;
}

const std::vector<ParamSpec>& spline_check_params() {
  static const std::vector<ParamSpec> p{
      {"instances", "25", "random instances per lambda"},
      {"max_points", "12", "largest instance size"},
      {"lambdas", "0.001,1,1000", "smoothing weights"},
      {"perturbations", "100", "random directions per instance"},
      {"step", "0.001", "perturbation size"},
  };
  return p;
}

bool is_known(const std::string& command, const std::string& key) {
  for (const auto& s : common_params())
    if (s.key == key) return true;
  for (const auto& s : command_params(command))
    if (s.key == key) return true;
  return false;
}

double parse_double_value(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = t.data();
  if (!t.empty() && t[0] == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || std::isnan(v))
    throw ConfigError("invalid number for '" + key + "': '" + text + "'");
  return v;
}

std::uint64_t parse_u64_value(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ConfigError("invalid non-negative integer for '" + key + "': '" + text + "'");
  return v;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

std::vector<std::vector<double>> get_nested(const Config& c, const std::string& key) {
  std::vector<std::vector<double>> out;
  for (const auto& group : split(c.get_string(key), ';')) {
    std::vector<double> row;
    for (const auto& item : split(group, ',')) row.push_back(parse_double_value(key, item));
    out.push_back(std::move(row));
  }
  return out;
}

// Output sinks opened before any computation.
struct Outputs {
  std::ofstream csv;
  std::ofstream manifest;
  std::string csv_path;
  std::string manifest_path;
};

struct OutputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Outputs open_outputs(const Config& c) {
  Outputs o;
  o.csv_path = c.get_string("out");
  o.manifest_path = o.csv_path + ".manifest";
  o.csv.open(o.csv_path, std::ios::binary | std::ios::trunc);
  if (!o.csv) throw OutputError("cannot open output file '" + o.csv_path + "' for writing");
  o.manifest.open(o.manifest_path, std::ios::binary | std::ios::trunc);
  if (!o.manifest) throw OutputError("cannot open manifest file '" + o.manifest_path + "' for writing");
  return o;
}

void write_manifest(std::ostream& out, const Config& c) {
  out << "# " << version_string() << '\n';
  out << "command=" << c.command() << '\n';
  out << "version=" << FKM_VERSION << '\n';
  for (const auto& [k, v] : c.values()) out << k << '=' << v << '\n';
}

class CsvWriter {
public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  CsvWriter& header(std::initializer_list<const char*> cols) {
    bool first = true;
    for (const char* col : cols) {
      if (!first) out_ << ',';
      out_ << col;
      first = false;
    }
    out_ << '\n';
    return *this;
  }
  CsvWriter& cell(double x) { return raw(format_double(x)); }
  CsvWriter& cell(std::size_t x) { return raw(std::to_string(x)); }
  CsvWriter& cell(const std::string& s) { return raw(s); }
  void end() {
    out_ << '\n';
    first_ = true;
  }

private:
  CsvWriter& raw(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }
  std::ostream& out_;
  bool first_ = true;
};

std::vector<double> snapped_grid(double lo, double hi, double step) {
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (std::size_t i = 0; i < count; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", lo + static_cast<double>(i) * step);
    grid.push_back(std::strtod(buf, nullptr));
  }
  return grid;
}

GenModel model_from(const Config& c) {
  GenModel m;
  for (auto& coeffs : get_nested(c, "trajectories")) {
    require(!coeffs.empty(), "'trajectories' has an empty track");
    m.trajectories.emplace_back(std::move(coeffs));
  }
  if (!trim(c.get_string("weights")).empty()) m.weights = c.get_doubles("weights");
  m.horizon = c.get_double("horizon");
  m.noise.variance = c.get_double("noise_variance");
  m.noise.bound = c.get_double("noise_bound");
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Commands. Each returns a callable that does the work once outputs are open,
// so that every parameter is validated first.

using Job = std::function<void(std::ostream&)>;

Job prepare_assoc(const Config& c) {
  const GenModel model = model_from(c);
  const auto ns = c.get_sizes("n");
  const std::size_t trials = c.get_size("trials");
  AssocSettings s;
  s.lambda = c.get_double("lambda");
  s.n_starts = c.get_size("starts");
  s.max_iter = c.get_size("max_iter");
  s.n_grid = c.get_size("n_grid");
  require(model.k() <= 9, "at most 9 trajectories are supported");
  require(!ns.empty(), "'n' must list at least one size");
  for (auto n : ns) require(n >= model.k(), "every 'n' must be at least the number of trajectories");
  require(trials >= 1, "'trials' must be >= 1");
  require(s.lambda >= 0.0 && std::isfinite(s.lambda), "'lambda' must be finite and >= 0");
  require(s.n_starts >= 1, "'starts' must be >= 1");
  require(s.max_iter >= 1, "'max_iter' must be >= 1");
  require(s.n_grid >= 3 && s.n_grid % 2 == 1, "'n_grid' must be odd and >= 3");
  const std::uint64_t seed = c.get_u64("seed");
  const std::size_t threads = c.get_size("threads");

  return [=](std::ostream& out) {
    const auto cells = monte_carlo_suite(model, ns, trials, s, seed, threads);
    CsvWriter w(out);
    w.header({"n", "statistic", "q05", "q25", "median", "q75", "q95", "mean", "trials"});
    using Getter = double (*)(const TrialStats&);
    const std::pair<const char*, Getter> stats[] = {
        {"eta", [](const TrialStats& t) { return t.eta; }},
        {"energy", [](const TrialStats& t) { return t.energy; }},
        {"truth_energy", [](const TrialStats& t) { return t.truth_energy; }},
        {"accuracy_pct", [](const TrialStats& t) { return t.accuracy; }},
        {"iterations", [](const TrialStats& t) { return static_cast<double>(t.iterations); }},
    };
    for (const auto& cell : cells) {
      for (const auto& [name, get] : stats) {
        std::vector<double> v;
        for (const auto& t : cell.trials) v.push_back(get(t));
        const Summary sm = summarize(v);
        w.cell(cell.n).cell(std::string(name)).cell(sm.q05).cell(sm.q25).cell(sm.median).cell(sm.q75);
        w.cell(sm.q95).cell(sm.mean).cell(sm.count).end();
      }
    }
  };
}

Job prepare_crossing(const Config& c) {
  const GenModel model = model_from(c);
  require(model.k() == 2, "the crossing experiment needs exactly two trajectories");
  const double t_min = c.get_double("t_min"), t_max = c.get_double("t_max"), t_step = c.get_double("t_step");
  require(t_step > 0.0 && std::isfinite(t_step), "'t_step' must be > 0");
  require(t_min <= t_max, "'t_min' must not exceed 't_max'");
  require(t_max <= model.horizon, "'t_max' must not exceed 'horizon'");
  double t_cross = 0.0;
  try {
    t_cross = crossing_time(model.trajectories[0], model.trajectories[1], model.horizon);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  require(t_min > t_cross, "'t_min' must lie after the crossing time " + format_double(t_cross));
  CrossingSettings s;
  s.lambda = c.get_double("lambda");
  s.n_total = c.get_size("n_total");
  s.n_starts = c.get_size("starts");
  s.max_iter = c.get_size("max_iter");
  require(s.lambda >= 0.0 && std::isfinite(s.lambda), "'lambda' must be finite and >= 0");
  require(s.n_total >= 4, "'n_total' must be >= 4");
  require(s.n_starts >= 1, "'starts' must be >= 1");
  require(s.max_iter >= 1, "'max_iter' must be >= 1");
  const bool adaptive = c.get_bool("adaptive");
  const std::size_t adaptive_min = c.get_size("adaptive_min");
  const std::size_t trials = c.get_size("trials");
  require(trials >= 1, "'trials' must be >= 1");
  require(adaptive_min >= 1, "'adaptive_min' must be >= 1");
  const auto grid = snapped_grid(t_min, t_max, t_step);
  const std::uint64_t seed = c.get_u64("seed");
  const std::size_t threads = c.get_size("threads");

  return [=](std::ostream& out) {
    CsvWriter w(out);
    w.header({"T", "trials", "mean_delta_e", "sd_delta_e", "mean_e_crossing", "mean_e_noncrossing",
              "crossing_rate_pct"});
    const CounterRng master(seed);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const std::size_t n_trials =
          adaptive ? adaptive_crossing_trials(model, grid[i], s, master.split({1, i}).key(), adaptive_min) : trials;
      const double t_fit[] = {grid[i]};
      const auto cell = crossing_suite(model, t_fit, n_trials, s, master.split({0, i}).key(), threads).front();
      std::vector<double> de, ec, enc;
      std::size_t found = 0;
      for (const auto& o : cell.trials) {
        de.push_back(o.delta_e);
        ec.push_back(o.e_crossing);
        enc.push_back(o.e_noncrossing);
        found += o.found_crossing ? 1 : 0;
      }
      w.cell(grid[i]).cell(n_trials).cell(mean(de)).cell(n_trials > 1 ? stddev(de) : 0.0);
      w.cell(mean(ec)).cell(mean(enc)).cell(100.0 * static_cast<double>(found) / static_cast<double>(n_trials)).end();
    }
  };
}

Job prepare_fourier(const Config& c) {
  const auto ns = c.get_sizes("n");
  const auto lambdas = c.get_doubles("lambda");
  const auto ps = c.get_doubles("p");
  const double sigma2 = c.get_double("sigma2");
  const std::size_t trials = c.get_size("trials");
  const double amplitude = c.get_double("signal_amplitude");
  const std::string dft_name = trim(c.get_string("dft"));
  require(dft_name == "direct" || dft_name == "fast", "'dft' must be 'direct' or 'fast'");
  require(!ns.empty() && !lambdas.empty() && !ps.empty(), "'n', 'lambda' and 'p' must be non-empty");
  for (auto n : ns) require(n % 2 == 1 && (amplitude == 0.0 || n >= 3), "every 'n' must be odd (and >= 3 with a signal)");
  for (double l : lambdas) require(l > 0.0 && std::isfinite(l), "every 'lambda' must be finite and > 0");
  for (double p : ps) require(std::isfinite(p), "every 'p' must be finite");
  require(sigma2 >= 0.0 && std::isfinite(sigma2), "'sigma2' must be finite and >= 0");
  require(std::isfinite(amplitude), "'signal_amplitude' must be finite");
  require(trials >= 2, "'trials' must be >= 2");
  const DftMethod method = dft_name == "fast" ? DftMethod::fast : DftMethod::direct;
  const std::uint64_t seed = c.get_u64("seed");
  const std::size_t threads = c.get_size("threads");

  return [=](std::ostream& out) {
    const auto rows = fourier_scan(ns, lambdas, ps, sigma2, trials, seed, amplitude, threads, method);
    CsvWriter w(out);
    w.header({"n", "lambda", "p", "S_closed", "S_mc_mean", "S_mc_se", "trials"});
    for (const auto& r : rows)
      w.cell(r.n).cell(r.lambda).cell(r.p).cell(r.s_closed).cell(r.s_mc_mean).cell(r.s_mc_se).cell(r.trials).end();
  };
}

Job prepare_tracking(const Config& c) {
  SensorNet net;
  for (const auto& s : get_nested(c, "sensors")) {
    require(s.size() == 2, "each entry of 'sensors' needs two coordinates");
    net.sensors.emplace_back(s[0], s[1]);
  }
  net.c = c.get_double("c");
  net.tau = c.get_double("tau");
  net.alpha = c.get_double("alpha");
  net.beta = c.get_double("beta");
  net.sigma = c.get_double("sigma");
  net.nu = c.get_double("nu");
  net.horizon = c.get_double("horizon");
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  std::vector<TrackParams> tracks;
  for (const auto& t : get_nested(c, "tracks")) {
    require(t.size() == 5, "each entry of 'tracks' needs x0x,x0y,vx,vy,o");
    for (double v : t) require(std::isfinite(v), "'tracks' values must be finite");
    tracks.push_back({Vec2(t[0], t[1]), Vec2(t[2], t[3]), t[4]});
  }
  require(!tracks.empty() && tracks.size() <= 9, "'tracks' must list between 1 and 9 targets");
  const auto fractions = c.get_doubles("fractions");
  require(!fractions.empty(), "'fractions' must be non-empty");
  for (double f : fractions) require(f > 0.0 && f <= 1.0, "every fraction must lie in (0, 1]");
  const std::size_t trials = c.get_size("trials");
  require(trials >= 1, "'trials' must be >= 1");
  SubsampleSettings s;
  s.n_starts = c.get_size("starts");
  s.max_iter = c.get_size("max_iter");
  s.fit.n_starts = c.get_size("fit_starts");
  s.fit.lm.max_iter = c.get_size("lm_max_iter");
  s.n_grid = c.get_size("n_grid");
  require(s.n_starts >= 1 && s.fit.n_starts >= 1, "'starts' and 'fit_starts' must be >= 1");
  require(s.max_iter >= 1 && s.fit.lm.max_iter >= 1, "'max_iter' and 'lm_max_iter' must be >= 1");
  require(s.n_grid >= 3 && s.n_grid % 2 == 1, "'n_grid' must be odd and >= 3");
  const std::string where = trim(c.get_string("emitter_position"));
  require(where == "frame_start" || where == "emission_time", "'emitter_position' must be frame_start or emission_time");
  PulseGenOptions gen;
  gen.where = where == "frame_start" ? EmitterPosition::frame_start : EmitterPosition::emission_time;
  const std::uint64_t seed = c.get_u64("seed");
  const std::size_t threads = c.get_size("threads");

  return [=](std::ostream& out) {
    const CounterRng master(seed);
    CounterRng data_rng = master.split(0);
    const PulseData data = generate_pulses(tracks, net, data_rng, gen);
    if (data.observations.size() < tracks.size()) throw std::runtime_error("too few pulses were generated");
    const auto rows = subsample_experiment(data, tracks, fractions, trials, net, s, master.split(1).key(), threads);
    CsvWriter w(out);
    w.header({"fraction", "trial", "eta", "accuracy_pct", "iterations", "energy", "converged"});
    for (const auto& r : rows)
      w.cell(r.fraction).cell(r.trial).cell(r.eta).cell(r.accuracy).cell(r.iterations).cell(r.energy)
          .cell(std::size_t{r.converged ? 1u : 0u})
          .end();
  };
}

// Dense reference solve of the Reinsch system for one instance.
Eigen::VectorXd dense_values(const std::vector<WeightedPoint>& pts, double alpha) {
  std::vector<double> knots;
  for (const auto& p : pts) knots.push_back(p.t);
  const auto pm = build_penalty(knots);
  const Eigen::MatrixXd q = pm.dense_q(), r = pm.dense_r();
  const auto m = static_cast<Eigen::Index>(pts.size());
  Eigen::VectorXd z(m), winv(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    z[i] = pts[i].z;
    winv[i] = 1.0 / pts[i].w;
  }
  const Eigen::MatrixXd a = r + alpha * q.transpose() * winv.asDiagonal() * q;
  const Eigen::VectorXd gamma = a.fullPivLu().solve(q.transpose() * z);
  return z - alpha * (winv.asDiagonal() * (q * gamma));
}

double objective_of_values(const std::vector<WeightedPoint>& pts, const Eigen::VectorXd& g, double lambda,
                           std::size_t n_total) {
  std::vector<double> knots;
  for (const auto& p : pts) knots.push_back(p.t);
  const auto pm = build_penalty(knots);
  const Eigen::VectorXd qg = pm.dense_q().transpose() * g;
  double data = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double r = pts[i].z - g[static_cast<Eigen::Index>(i)];
    data += pts[i].w * r * r;
  }
  return data / static_cast<double>(n_total) + lambda * qg.dot(pm.dense_r().ldlt().solve(qg));
}

Job prepare_spline_check(const Config& c) {
  const std::size_t instances = c.get_size("instances");
  const std::size_t max_points = c.get_size("max_points");
  const auto lambdas = c.get_doubles("lambdas");
  const std::size_t perturbations = c.get_size("perturbations");
  const double step = c.get_double("step");
  require(instances >= 1, "'instances' must be >= 1");
  require(max_points >= 3 && max_points <= 500, "'max_points' must lie in [3, 500]");
  require(!lambdas.empty(), "'lambdas' must be non-empty");
  for (double l : lambdas) require(l >= 0.0 && std::isfinite(l), "every lambda must be finite and >= 0");
  require(perturbations >= 1, "'perturbations' must be >= 1");
  require(step > 0.0 && std::isfinite(step), "'step' must be > 0");
  const std::uint64_t seed = c.get_u64("seed");

  return [=](std::ostream& out) {
    CsvWriter w(out);
    w.header({"instance", "m", "lambda", "dense_rel_error", "penalty_rel_error", "objective",
              "max_perturbation_gain"});
    const CounterRng master(seed);
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      for (std::size_t inst = 0; inst < instances; ++inst) {
        CounterRng rng = master.split({li, inst});
        const std::size_t m = 3 + static_cast<std::size_t>(rng() % (max_points - 2));
        std::vector<double> t(m);
        for (;;) {
          for (auto& x : t) x = 10.0 * rng.uniform();
          std::sort(t.begin(), t.end());
          bool ok = true;
          for (std::size_t i = 1; i < m; ++i) ok = ok && t[i] - t[i - 1] > 1e-3;
          if (ok) break;
        }
        std::vector<WeightedPoint> pts;
        for (double x : t) pts.push_back({x, 20.0 * rng.uniform() - 10.0, 1.0});
        const double lambda = lambdas[li];
        const auto s = fit_smoothing_spline(pts, lambda, m);

        Eigen::VectorXd g(static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < m; ++i) g[static_cast<Eigen::Index>(i)] = s.values()[i];
        const Eigen::VectorXd ref = dense_values(pts, lambda * static_cast<double>(m));
        const double dense_err = (g - ref).norm() / std::max(ref.norm(), 1e-300);

        double quad = 0.0;
        for (std::size_t i = 0; i + 1 < m; ++i)
          quad += simpson([&](double x) { return s.second_derivative(x) * s.second_derivative(x); }, s.knots()[i],
                          s.knots()[i + 1], 3);
        const double bend = s.bending_energy();
        const double pen_err = quad > 0.0 ? std::abs(bend - quad) / quad : std::abs(bend);

        const double f0 = objective_of_values(pts, g, lambda, m);
        double gain = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < perturbations; ++k) {
          Eigen::VectorXd d(static_cast<Eigen::Index>(m));
          for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = 2.0 * rng.uniform() - 1.0;
          d.normalize();
          gain = std::max(gain, f0 - objective_of_values(pts, g + step * d, lambda, m));
        }
        w.cell(inst).cell(m).cell(lambda).cell(dense_err).cell(pen_err).cell(f0).cell(gain).end();
      }
    }
  };
}

Job prepare(const Config& c) {
  const std::string& cmd = c.command();
  if (cmd == "assoc") return prepare_assoc(c);
  if (cmd == "crossing") return prepare_crossing(c);
  if (cmd == "fourier") return prepare_fourier(c);
  if (cmd == "tracking") return prepare_tracking(c);
  if (cmd == "spline-check") return prepare_spline_check(c);
  throw ConfigError("unknown command '" + cmd + "'");
}

std::string default_threads() {
  if (const char* env = std::getenv("FKM_THREADS")) {
    const std::string v = trim(env);
    std::uint64_t n = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), n);
    if (!v.empty() && res.ec == std::errc() && res.ptr == v.data() + v.size() && n >= 1) return v;
  }
  return "1";
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<ParamSpec>& common_params() {
  static const std::vector<ParamSpec> p{
      {"seed", "1", "master seed"},
      {"out", "", "CSV output path (default: <command>.csv)"},
      {"threads", "", "worker threads (default: FKM_THREADS or 1)"},
  };
  return p;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"assoc", "crossing", "fourier", "tracking", "spline-check"};
  return names;
}

const std::vector<ParamSpec>& command_params(const std::string& command) {
  if (command == "assoc") return assoc_params();
  if (command == "crossing") return crossing_params();
  if (command == "fourier") return fourier_params();
  if (command == "tracking") return tracking_params();
  if (command == "spline-check") return spline_check_params();
  throw ConfigError("unknown command '" + command + "'");
}

Config::Config(std::string command, std::map<std::string, std::string> values)
    : command_(std::move(command)), values_(std::move(values)) {}

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const auto v = get_doubles(key);
  if (v.size() != 1) throw ConfigError("'" + key + "' expects a single number");
  return v[0];
}

std::size_t Config::get_size(const std::string& key) const {
  const auto v = get_u64(key);
  return static_cast<std::size_t>(v);
}

std::uint64_t Config::get_u64(const std::string& key) const { return parse_u64_value(key, get_string(key)); }

bool Config::get_bool(const std::string& key) const {
  const std::string v = trim(get_string(key));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("invalid boolean for '" + key + "': '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  const std::string v = trim(get_string(key));
  if (v.empty()) return out;
  for (const auto& item : split(v, ',')) out.push_back(parse_double_value(key, item));
  return out;
}

std::vector<std::size_t> Config::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  const std::string v = trim(get_string(key));
  if (v.empty()) return out;
  for (const auto& item : split(v, ',')) out.push_back(static_cast<std::size_t>(parse_u64_value(key, item)));
  return out;
}

std::map<std::string, std::string> read_config_file(const std::string& path, std::string& command) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::vector<std::pair<std::size_t, std::pair<std::string, std::string>>> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    if (key == "version") continue;
    if (key == "command") {
      if (!command.empty() && command != value)
        throw ConfigError(path + ":" + std::to_string(lineno) + ": config is for command '" + value +
                          "', not '" + command + "'");
      command = value;
      continue;
    }
    entries.push_back({lineno, {key, value}});
  }
  if (command.empty()) throw ConfigError(path + ": no command given on the command line or in the file");
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end())
    throw ConfigError(path + ": unknown command '" + command + "'");

  std::map<std::string, std::string> values;
  for (const auto& [n, kv] : entries) {
    if (!is_known(command, kv.first))
      throw ConfigError(path + ":" + std::to_string(n) + ": unknown key '" + kv.first + "' for command '" +
                        command + "'");
    values[kv.first] = kv.second;
  }
  return values;
}

Config resolve_config(const std::string& command, const std::map<std::string, std::string>& file_values,
                      const std::map<std::string, std::string>& flag_values) {
  std::map<std::string, std::string> v;
  for (const auto& s : common_params()) v[s.key] = s.default_value;
  for (const auto& s : command_params(command)) v[s.key] = s.default_value;
  for (const auto* layer : {&file_values, &flag_values})
    for (const auto& [k, val] : *layer) {
      if (!is_known(command, k)) throw ConfigError("unknown key '" + k + "' for command '" + command + "'");
      v[k] = val;
    }
  if (trim(v["out"]).empty()) v["out"] = command + ".csv";
  if (trim(v["threads"]).empty()) v["threads"] = default_threads();
  Config c(command, std::move(v));
  c.get_u64("seed");
  if (c.get_size("threads") < 1) throw ConfigError("'threads' must be >= 1");
  return c;
}

int run_command(const Config& config, std::ostream& err) {
  Job job;
  try {
    job = prepare(config);
  } catch (const ConfigError& e) {
    err << "fkm " << config.command() << ": invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  }
  Outputs outputs;
  try {
    outputs = open_outputs(config);
  } catch (const OutputError& e) {
    err << "fkm " << config.command() << ": " << e.what() << '\n';
    return kExitOutput;
  }
  std::ostringstream table;
  try {
    job(table);
  } catch (const std::exception& e) {
    err << "fkm " << config.command() << ": " << e.what() << '\n';
    return kExitFailure;
  }
  outputs.csv << table.str();
  write_manifest(outputs.manifest, config);
  outputs.csv.flush();
  outputs.manifest.flush();
  if (!outputs.csv || !outputs.manifest) {
    err << "fkm " << config.command() << ": failed while writing outputs\n";
    return kExitOutput;
  }
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Functional k-means experiments: association, crossing tracks, Fourier scaling, tracking", "fkm"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(0, 1);

  std::map<std::string, std::string> top_flags;
  std::string top_config;
  app.add_option("--config", top_config, "key=value configuration file");
  for (const auto& s : common_params())
    app.add_option("--" + s.key, top_flags[s.key], s.help);

  std::map<std::string, std::map<std::string, std::string>> sub_flags;
  std::map<std::string, std::string> sub_config;
  for (const auto& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", sub_config[name], "key=value configuration file");
    for (const auto& s : common_params()) sub->add_option("--" + s.key, sub_flags[name][s.key], s.help);
    for (const auto& s : command_params(name)) {
      std::string help = s.help;
      if (!s.default_value.empty()) help += " [" + s.default_value + "]";
      sub->add_option("--" + s.key, sub_flags[name][s.key], help);
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version_string() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "fkm: " << e.what() << '\n';
    return kExitConfig;
  }

  std::string command;
  const auto chosen = app.get_subcommands();
  if (!chosen.empty()) command = chosen.front()->get_name();

  try {
    // Flags after the command override flags before it.
    std::map<std::string, std::string> flags;
    for (const auto& s : common_params())
      if (app.count("--" + s.key) > 0) flags[s.key] = top_flags[s.key];
    std::string config_path = top_config;
    if (!command.empty()) {
      CLI::App* sub = app.get_subcommand(command);
      if (sub->count("--config") > 0) config_path = sub_config[command];
      for (auto& [k, v] : sub_flags[command])
        if (sub->count("--" + k) > 0) flags[k] = v;
    }
    std::map<std::string, std::string> file_values;
    if (!config_path.empty()) {
      file_values = read_config_file(config_path, command);
    } else if (command.empty()) {
      out << app.help();
      return kExitConfig;
    }
    const Config config = resolve_config(command, file_values, flags);
    const int rc = run_command(config, err);
    if (rc == kExitOk) out << "wrote " << config.get_string("out") << " and " << config.get_string("out") << ".manifest\n";
    return rc;
  } catch (const ConfigError& e) {
    err << "fkm: invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace fkm::cli
