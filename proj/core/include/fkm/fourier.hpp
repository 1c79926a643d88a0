#pragma once

// Periodic smoothing toy problem solved in the Fourier domain.
//
// Data z_j = mu(j/n) + eps_j on n equally spaced points of [0, 1), fitted by
// minimizing (1/n) sum_j |mu(t_j) - z_j|^2 + lambda n^p int (mu'')^2 over
// 1-periodic H^2 functions. With the unnormalized DFT
//     zhat_l = sum_j z_j exp(-2 pi i l j / n)
// and mu(t) = (1/n) sum_l muhat_l exp(2 pi i l t), the minimizer shrinks each
// frequency independently. Only odd n is supported so that the frequencies
// are exactly l = -(n-1)/2 .. (n-1)/2.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fkm/rng.hpp"

namespace fkm {

using Complex = std::complex<double>;

enum class DftMethod { direct, fast };

// Coefficients in natural order: index q holds frequency q (== q - n for q > n/2).
std::vector<Complex> dft(std::span<const double> values, DftMethod method = DftMethod::direct);
std::vector<Complex> dft(std::span<const Complex> values, DftMethod method = DftMethod::direct);
// Applies the 1/n factor, so inverse_dft(dft(x)) == x.
std::vector<Complex> inverse_dft(std::span<const Complex> coeffs,
                                 DftMethod method = DftMethod::direct);

// Signed frequency of natural-order index q for odd n: q or q - n.
long signed_frequency(std::size_t q, std::size_t n);
// Natural-order index of signed frequency l.
std::size_t frequency_index(long l, std::size_t n);

struct PeriodicProblem {
  std::size_t n = 101;
  double lambda = 1.0;
  double p = 0.0;
  double sigma2 = 1.0;
  // Natural-order DFT of the true signal; empty means mu_dagger = 0.
  std::vector<Complex> mu_dagger_hat;

  double a_n() const;
  double b_n() const;
  double gamma_n() const;  // 16 pi^4 b_n / a_n
  void validate() const;
};

// muhat_l = zhat_l / (1 + gamma_n l^4 / n)
std::vector<Complex> periodic_minimizer(std::span<const Complex> z_hat, double gamma_n, std::size_t n);

// int_0^1 |mu''|^2 = (16 pi^4 / n^2) sum_l l^4 |muhat_l|^2
double second_deriv_norm_fourier(std::span<const Complex> mu_hat, std::size_t n);

// mu(t) and mu''(t) of the trigonometric polynomial with coefficients mu_hat.
double fourier_series_value(std::span<const Complex> mu_hat, std::size_t n, double t);
double fourier_series_second_derivative(std::span<const Complex> mu_hat, std::size_t n, double t);

// Expected bending energy of the minimizer for pure noise:
//   S(n) = (16 pi^4 sigma^2 / n) sum_l l^4 / (1 + 16 pi^4 lambda n^p l^4)^2
double closed_form_S(std::size_t n, double lambda, double p, double sigma2);

// Expected bending energy including the deterministic contribution of mu_dagger.
double expected_penalty(const PeriodicProblem& problem);

// DFT of A cos(2 pi t) sampled at t_j = j/n: n A / 2 at l = +-1.
std::vector<Complex> cosine_signal_hat(std::size_t n, double amplitude);

struct PenaltyEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t trials = 0;
};

// Monte Carlo mean of the minimizer's bending energy over noise draws
// eps_j ~ N(0, sigma^2) (untruncated).
PenaltyEstimate empirical_penalty_mc(const PeriodicProblem& problem, std::size_t trials,
                                     CounterRng rng, DftMethod method = DftMethod::direct);

struct FourierRow {
  std::size_t n = 0;
  double lambda = 0.0;
  double p = 0.0;
  double s_closed = 0.0;
  double s_mc_mean = 0.0;
  double s_mc_se = 0.0;
  std::size_t trials = 0;
};

// Grid over (n, lambda, p); each cell gets its own stream split from seed.
// signal_amplitude != 0 sets mu_dagger(t) = A cos(2 pi t).
std::vector<FourierRow> fourier_scan(std::span<const std::size_t> ns, std::span<const double> lambdas,
                                     std::span<const double> ps, double sigma2, std::size_t trials,
                                     std::uint64_t seed, double signal_amplitude = 0.0,
                                     std::size_t threads = 1,
                                     DftMethod method = DftMethod::direct);

}  // namespace fkm
