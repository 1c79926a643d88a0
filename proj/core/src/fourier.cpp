#include "fkm/fourier.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>

#include <fftw3.h>

#include "fkm/parallel.hpp"

namespace fkm {

namespace {

constexpr double kPi = std::numbers::pi;
const double k16Pi4 = 16.0 * kPi * kPi * kPi * kPi;

std::vector<Complex> direct_transform(std::span<const Complex> x, int sign) {
  const std::size_t n = x.size();
  std::vector<Complex> twiddle(n);
  for (std::size_t q = 0; q < n; ++q) {
    const double angle = sign * 2.0 * kPi * static_cast<double>(q) / static_cast<double>(n);
    twiddle[q] = {std::cos(angle), std::sin(angle)};
  }
  std::vector<Complex> out(n);
  for (std::size_t l = 0; l < n; ++l) {
    Complex acc{0.0, 0.0};
    std::size_t idx = 0;  // (l * j) mod n, updated incrementally
    for (std::size_t j = 0; j < n; ++j) {
      acc += x[j] * twiddle[idx];
      idx += l;
      if (idx >= n) idx -= n;
    }
    out[l] = acc;
  }
  return out;
}

// FFTW planning is not thread safe; execution on a private plan is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<Complex> fftw_transform(std::span<const Complex> x, int sign) {
  const int n = static_cast<int>(x.size());
  std::vector<Complex> in(x.begin(), x.end()), out(x.size());
  auto* in_ptr = reinterpret_cast<fftw_complex*>(in.data());
  auto* out_ptr = reinterpret_cast<fftw_complex*>(out.data());
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_1d(n, in_ptr, out_ptr, sign < 0 ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  return out;
}

std::vector<Complex> transform(std::span<const Complex> x, int sign, DftMethod method) {
  if (x.empty()) throw std::invalid_argument("dft: empty sequence");
  return method == DftMethod::fast ? fftw_transform(x, sign) : direct_transform(x, sign);
}

void require_odd(std::size_t n) {
  if (n == 0 || n % 2 == 0) throw std::invalid_argument("periodic problem requires odd n");
}

}  // namespace

std::vector<Complex> dft(std::span<const double> values, DftMethod method) {
  std::vector<Complex> x(values.begin(), values.end());
  return transform(x, -1, method);
}

std::vector<Complex> dft(std::span<const Complex> values, DftMethod method) {
  return transform(values, -1, method);
}

std::vector<Complex> inverse_dft(std::span<const Complex> coeffs, DftMethod method) {
  auto out = transform(coeffs, +1, method);
  const double scale = 1.0 / static_cast<double>(coeffs.size());
  for (auto& c : out) c *= scale;
  return out;
}

long signed_frequency(std::size_t q, std::size_t n) {
  require_odd(n);
  if (q >= n) throw std::out_of_range("signed_frequency: index out of range");
  return q <= n / 2 ? static_cast<long>(q) : static_cast<long>(q) - static_cast<long>(n);
}

std::size_t frequency_index(long l, std::size_t n) {
  require_odd(n);
  const long half = static_cast<long>(n / 2);
  if (l < -half || l > half) throw std::out_of_range("frequency_index: frequency out of range");
  return l >= 0 ? static_cast<std::size_t>(l) : static_cast<std::size_t>(l + static_cast<long>(n));
}

double PeriodicProblem::a_n() const { return 1.0 / static_cast<double>(n); }
double PeriodicProblem::b_n() const { return lambda * std::pow(static_cast<double>(n), p); }
double PeriodicProblem::gamma_n() const { return k16Pi4 * b_n() / a_n(); }

void PeriodicProblem::validate() const {
  require_odd(n);
  if (!(lambda > 0.0)) throw std::invalid_argument("PeriodicProblem: lambda must be > 0");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("PeriodicProblem: sigma2 must be >= 0");
  if (!mu_dagger_hat.empty() && mu_dagger_hat.size() != n)
    throw std::invalid_argument("PeriodicProblem: mu_dagger_hat must have length n");
}

std::vector<Complex> periodic_minimizer(std::span<const Complex> z_hat, double gamma_n, std::size_t n) {
  require_odd(n);
  if (z_hat.size() != n) throw std::invalid_argument("periodic_minimizer: expected n coefficients");
  std::vector<Complex> mu(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t q = 0; q < n; ++q) {
    const double l = static_cast<double>(signed_frequency(q, n));
    mu[q] = z_hat[q] / (1.0 + gamma_n * l * l * l * l * inv_n);
  }
  return mu;
}

double second_deriv_norm_fourier(std::span<const Complex> mu_hat, std::size_t n) {
  require_odd(n);
  if (mu_hat.size() != n) throw std::invalid_argument("second_deriv_norm_fourier: expected n coefficients");
  double s = 0.0;
  for (std::size_t q = 0; q < n; ++q) {
    const double l = static_cast<double>(signed_frequency(q, n));
    s += l * l * l * l * std::norm(mu_hat[q]);
  }
  const double nn = static_cast<double>(n);
  return k16Pi4 * s / (nn * nn);
}

double fourier_series_value(std::span<const Complex> mu_hat, std::size_t n, double t) {
  Complex acc{0.0, 0.0};
  for (std::size_t q = 0; q < n; ++q) {
    const double l = static_cast<double>(signed_frequency(q, n));
    acc += mu_hat[q] * std::polar(1.0, 2.0 * kPi * l * t);
  }
  return acc.real() / static_cast<double>(n);
}

double fourier_series_second_derivative(std::span<const Complex> mu_hat, std::size_t n, double t) {
  Complex acc{0.0, 0.0};
  for (std::size_t q = 0; q < n; ++q) {
    const double l = static_cast<double>(signed_frequency(q, n));
    acc -= 4.0 * kPi * kPi * l * l * mu_hat[q] * std::polar(1.0, 2.0 * kPi * l * t);
  }
  return acc.real() / static_cast<double>(n);
}

double closed_form_S(std::size_t n, double lambda, double p, double sigma2) {
  require_odd(n);
  if (!(lambda > 0.0)) throw std::invalid_argument("closed_form_S: lambda must be > 0");
  const double nn = static_cast<double>(n);
  const double c = k16Pi4 * lambda * std::pow(nn, p);
  const long half = static_cast<long>(n / 2);
  // Symmetric in l; l = 0 contributes nothing.
  double s = 0.0;
  for (long l = 1; l <= half; ++l) {
    const double l4 = std::pow(static_cast<double>(l), 4);
    const double d = 1.0 + c * l4;
    s += l4 / (d * d);
  }
  return k16Pi4 * sigma2 / nn * 2.0 * s;
}

double expected_penalty(const PeriodicProblem& problem) {
  problem.validate();
  double total = closed_form_S(problem.n, problem.lambda, problem.p, problem.sigma2);
  if (!problem.mu_dagger_hat.empty()) {
    const auto shrunk = periodic_minimizer(problem.mu_dagger_hat, problem.gamma_n(), problem.n);
    total += second_deriv_norm_fourier(shrunk, problem.n);
  }
  return total;
}

std::vector<Complex> cosine_signal_hat(std::size_t n, double amplitude) {
  require_odd(n);
  if (n < 3) throw std::invalid_argument("cosine_signal_hat: need n >= 3");
  std::vector<Complex> hat(n, Complex{0.0, 0.0});
  const double v = static_cast<double>(n) * amplitude / 2.0;
  hat[frequency_index(1, n)] = v;
  hat[frequency_index(-1, n)] = v;
  return hat;
}

PenaltyEstimate empirical_penalty_mc(const PeriodicProblem& problem, std::size_t trials,
                                     CounterRng rng, DftMethod method) {
  problem.validate();
  if (trials < 2) throw std::invalid_argument("empirical_penalty_mc: need at least 2 trials");
  const std::size_t n = problem.n;
  const double gamma = problem.gamma_n();
  const double sd = std::sqrt(problem.sigma2);

  std::vector<double> penalties(trials);
  std::vector<double> z(n);
  for (std::size_t t = 0; t < trials; ++t) {
    CounterRng trial_rng = rng.split(t);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& zj : z) zj = sd > 0.0 ? sd * normal(trial_rng) : 0.0;
    auto z_hat = dft(std::span<const double>(z), method);
    if (!problem.mu_dagger_hat.empty())
      for (std::size_t q = 0; q < n; ++q) z_hat[q] += problem.mu_dagger_hat[q];
    penalties[t] = second_deriv_norm_fourier(periodic_minimizer(z_hat, gamma, n), n);
  }

  double m = 0.0;
  for (double v : penalties) m += v;
  m /= static_cast<double>(trials);
  double var = 0.0;
  for (double v : penalties) var += (v - m) * (v - m);
  var /= static_cast<double>(trials - 1);

  return {m, std::sqrt(var / static_cast<double>(trials)), trials};
}

std::vector<FourierRow> fourier_scan(std::span<const std::size_t> ns, std::span<const double> lambdas,
                                     std::span<const double> ps, double sigma2, std::size_t trials,
                                     std::uint64_t seed, double signal_amplitude, std::size_t threads,
                                     DftMethod method) {
  std::vector<FourierRow> rows;
  for (auto n : ns)
    for (double lambda : lambdas)
      for (double p : ps) rows.push_back({n, lambda, p, 0.0, 0.0, 0.0, trials});

  const CounterRng master(seed);
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    auto& row = rows[i];
    PeriodicProblem problem;
    problem.n = row.n;
    problem.lambda = row.lambda;
    problem.p = row.p;
    problem.sigma2 = sigma2;
    if (signal_amplitude != 0.0) problem.mu_dagger_hat = cosine_signal_hat(row.n, signal_amplitude);
    row.s_closed = expected_penalty(problem);
    const auto est = empirical_penalty_mc(problem, trials, master.split(i), method);
    row.s_mc_mean = est.mean;
    row.s_mc_se = est.standard_error;
  });
  return rows;
}

}  // namespace fkm
