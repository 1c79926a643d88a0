#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fkm/fourier.hpp"
#include "fkm/spline.hpp"

using namespace fkm;

namespace {
const double kPi4 = std::pow(std::numbers::pi, 4);
}

TEST(Dft, ConstantSequence) {
  const std::vector<double> x(11, 2.5);
  const auto h = dft(x);
  EXPECT_NEAR(h[0].real(), 27.5, 1e-12);
  for (std::size_t l = 1; l < h.size(); ++l) EXPECT_LT(std::abs(h[l]), 1e-12);
}

TEST(Dft, RoundTrip) {
  CounterRng rng(1);
  std::vector<double> x(101);
  for (auto& v : x) v = 2.0 * rng.uniform() - 1.0;
  for (auto method : {DftMethod::direct, DftMethod::fast}) {
    const auto back = inverse_dft(dft(x, method), method);
    for (std::size_t j = 0; j < x.size(); ++j) {
      EXPECT_LT(std::abs(back[j].real() - x[j]), 1e-12);
      EXPECT_LT(std::abs(back[j].imag()), 1e-12);
    }
  }
}

TEST(Dft, Cosine) {
  const std::size_t n = 31;
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) x[j] = std::cos(2.0 * std::numbers::pi * j / n);
  const auto h = dft(x);
  for (std::size_t q = 0; q < n; ++q) {
    const long l = signed_frequency(q, n);
    const double expected = (l == 1 || l == -1) ? n / 2.0 : 0.0;
    EXPECT_NEAR(h[q].real(), expected, 1e-11);
    EXPECT_NEAR(h[q].imag(), 0.0, 1e-11);
  }
}

TEST(Dft, FastMatchesDirect) {
  CounterRng rng(2);
  std::vector<Complex> x(255);
  for (auto& v : x) v = {rng.uniform(), rng.uniform()};
  const auto a = dft(x, DftMethod::direct);
  const auto b = dft(x, DftMethod::fast);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LT(std::abs(a[i] - b[i]), 1e-10);
}

TEST(Frequencies, SignedIndexing) {
  EXPECT_EQ(signed_frequency(0, 5), 0);
  EXPECT_EQ(signed_frequency(2, 5), 2);
  EXPECT_EQ(signed_frequency(3, 5), -2);
  EXPECT_EQ(frequency_index(-1, 5), 4u);
  EXPECT_THROW(signed_frequency(0, 4), std::invalid_argument);
  EXPECT_THROW(frequency_index(3, 5), std::out_of_range);
}

TEST(PeriodicMinimizer, Examples) {
  const std::size_t n = 3;
  const std::vector<Complex> z{1.0, 1.0, 1.0};  // natural order: l = 0, 1, -1
  const auto same = periodic_minimizer(z, 0.0, n);
  for (std::size_t q = 0; q < n; ++q) EXPECT_EQ(same[q], z[q]);
  const auto mu = periodic_minimizer(z, 3.0, n);
  EXPECT_EQ(mu[frequency_index(0, n)], Complex(1.0));
  EXPECT_DOUBLE_EQ(mu[frequency_index(1, n)].real(), 0.5);
  EXPECT_DOUBLE_EQ(mu[frequency_index(-1, n)].real(), 0.5);
  EXPECT_THROW(periodic_minimizer(z, 1.0, 4), std::invalid_argument);
}

TEST(PeriodicMinimizer, ZeroFrequencyPassesThrough) {
  const std::size_t n = 7;
  std::vector<Complex> z(n, Complex(2.0, -1.0));
  for (double g : {0.1, 10.0, 1e6}) EXPECT_EQ(periodic_minimizer(z, g, n)[0], z[0]);
}

TEST(SecondDerivNorm, Examples) {
  const std::size_t n = 11;
  std::vector<Complex> c(n, 0.0);
  c[0] = 5.0;
  EXPECT_EQ(second_deriv_norm_fourier(c, n), 0.0);
  const auto hat = cosine_signal_hat(n, 2.0);
  EXPECT_NEAR(second_deriv_norm_fourier(hat, n), 32.0 * kPi4, 1e-9);
}

TEST(SecondDerivNorm, MatchesQuadratureOfReconstruction) {
  const std::size_t n = 11;
  CounterRng rng(4);
  std::vector<Complex> hat(n);
  // Hermitian-symmetric coefficients give a real signal.
  hat[0] = rng.uniform();
  for (long l = 1; l <= 5; ++l) {
    const Complex c(rng.uniform() - 0.5, rng.uniform() - 0.5);
    hat[frequency_index(l, n)] = c;
    hat[frequency_index(-l, n)] = std::conj(c);
  }
  const double quad = simpson(
      [&](double t) {
        const double d2 = fourier_series_second_derivative(hat, n, t);
        return d2 * d2;
      },
      0.0, 1.0, 10001);
  const double fourier = second_deriv_norm_fourier(hat, n);
  EXPECT_NEAR(quad / fourier, 1.0, 1e-8);
}

TEST(ClosedFormS, Examples) {
  EXPECT_EQ(closed_form_S(101, 1.0, 0.0, 0.0), 0.0);
  const double c = 16.0 * kPi4;
  EXPECT_NEAR(closed_form_S(3, 1.0, 0.0, 1.0), (c / 3.0) * 2.0 / ((1.0 + c) * (1.0 + c)), 1e-18);
  EXPECT_LE(closed_form_S(10001, 1.0, 0.0, 1.0), 1.05 * closed_form_S(1001, 1.0, 0.0, 1.0));
  EXPECT_THROW(closed_form_S(100, 1.0, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(closed_form_S(101, 0.0, 0.0, 1.0), std::invalid_argument);
}

TEST(ClosedFormS, BlowupRegime) {
  for (std::size_t n : {101u, 1001u, 10001u})
    EXPECT_GT(closed_form_S(10 * n - 9, 1.0, -1.0, 1.0), 1.5 * closed_form_S(n, 1.0, -1.0, 1.0));
}

TEST(ClosedFormS, BoundedRegime) {
  for (double p : {-0.8, 0.0}) {
    const double ref = closed_form_S(1001, 1.0, p, 1.0);
    for (std::size_t n : {1001u, 3001u, 10001u, 30001u, 99999u}) EXPECT_LE(closed_form_S(n, 1.0, p, 1.0), 2.0 * ref);
  }
}

TEST(ClosedFormS, NonIncreasingInP) {
  for (std::size_t n : {11u, 101u, 1001u}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double p = -2.0; p <= 1.0; p += 0.1) {
      const double s = closed_form_S(n, 1.0, p, 1.0);
      EXPECT_LE(s, prev);
      prev = s;
    }
  }
}

TEST(EmpiricalPenalty, ZeroNoiseIsZero) {
  PeriodicProblem pr;
  pr.sigma2 = 0.0;
  const auto est = empirical_penalty_mc(pr, 10, CounterRng(1));
  EXPECT_EQ(est.mean, 0.0);
  EXPECT_EQ(est.standard_error, 0.0);
}

TEST(EmpiricalPenalty, AgreesWithClosedForm) {
  PeriodicProblem pr;
  pr.n = 101;
  const auto est = empirical_penalty_mc(pr, 500, CounterRng(2));
  EXPECT_LE(std::abs(est.mean - closed_form_S(101, 1.0, 0.0, 1.0)), 3.0 * est.standard_error);
}

TEST(EmpiricalPenalty, WithSignalAgreesWithExpectedPenalty) {
  PeriodicProblem pr;
  pr.n = 51;
  pr.lambda = 1e-3;
  pr.mu_dagger_hat = cosine_signal_hat(51, 2.0);
  const auto est = empirical_penalty_mc(pr, 500, CounterRng(3));
  EXPECT_LE(std::abs(est.mean - expected_penalty(pr)), 3.0 * est.standard_error);
}

TEST(EmpiricalPenalty, DecreasingForPositiveP) {
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n : {101u, 1001u, 10001u}) {
    PeriodicProblem pr;
    pr.n = n;
    pr.p = 0.5;
    const auto est = empirical_penalty_mc(pr, 50, CounterRng(n), DftMethod::fast);
    EXPECT_LT(est.mean, prev);
    prev = est.mean;
  }
}

TEST(EmpiricalPenalty, RejectsBadInput) {
  PeriodicProblem pr;
  EXPECT_THROW(empirical_penalty_mc(pr, 1, CounterRng(0)), std::invalid_argument);
  pr.n = 100;
  EXPECT_THROW(empirical_penalty_mc(pr, 10, CounterRng(0)), std::invalid_argument);
}

TEST(FourierScan, DeterministicAcrossThreads) {
  const std::vector<std::size_t> ns{51, 101};
  const std::vector<double> lambdas{1.0}, ps{-1.0, 0.0};
  const auto a = fourier_scan(ns, lambdas, ps, 1.0, 20, 9, 0.0, 1);
  const auto b = fourier_scan(ns, lambdas, ps, 1.0, 20, 9, 0.0, 2);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].s_mc_mean, b[i].s_mc_mean);
    EXPECT_EQ(a[i].s_closed, closed_form_S(a[i].n, a[i].lambda, a[i].p, 1.0));
  }
}
