#pragma once

// Natural cubic smoothing splines.
//
// The fitted spline minimizes
//
//     (1/n_total) * sum_i w_i (z_i - g(t_i))^2 + lambda * int (g'')^2
//
// over H^2. The minimizer is a natural cubic spline with knots at the distinct
// abscissae; it is found with the Reinsch formulation, where the penalty is
// written gamma^T R gamma under the constraint Q^T g = R gamma and the normal
// equations reduce to a pentadiagonal system in the interior second
// derivatives gamma.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fkm/core.hpp"

namespace fkm {

struct WeightedPoint {
  double t = 0.0;
  double z = 0.0;
  double w = 1.0;
};

// Second-difference operator Q (m x (m-2)) and the Gram matrix R ((m-2) x (m-2))
// of the hat functions for g''. Both are stored by band.
struct PenaltyMatrices {
  // Column c of Q has nonzeros at rows c, c+1, c+2.
  std::vector<double> q_lower;   // Q(c, c)
  std::vector<double> q_center;  // Q(c+1, c)
  std::vector<double> q_upper;   // Q(c+2, c)
  std::vector<double> r_diag;    // R(c, c)
  std::vector<double> r_off;     // R(c, c+1) == R(c+1, c)

  std::size_t interior() const noexcept { return r_diag.size(); }

  Eigen::MatrixXd dense_q() const;
  Eigen::MatrixXd dense_r() const;

  // gamma^T R gamma
  double quadratic_form(std::span<const double> gamma) const;
};

PenaltyMatrices build_penalty(std::span<const double> knots);

// A natural cubic spline stored by its knot values and interior second
// derivatives. Linear beyond the knot range, with the end slopes.
class SplineCenter {
public:
  SplineCenter() = default;
  SplineCenter(std::vector<double> knots, std::vector<double> values,
               std::vector<double> interior_second_derivs, double lambda_eff = 0.0);

  // Constant spline with a single knot at t.
  static SplineCenter constant(double t, double value);

  double operator()(double t) const noexcept { return value(t); }
  double value(double t) const noexcept;
  double derivative(double t) const noexcept;
  double second_derivative(double t) const noexcept;

  // int (g'')^2 over the knot range, evaluated as gamma^T R gamma.
  double bending_energy() const;

  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<double>& second_derivs() const noexcept { return gamma_; }
  // gamma at knot i, including the natural zeros at both ends.
  double gamma_at(std::size_t i) const noexcept;
  double lambda_eff() const noexcept { return lambda_eff_; }
  std::size_t size() const noexcept { return knots_.size(); }

private:
  std::size_t segment(double t) const noexcept;

  std::vector<double> knots_;
  std::vector<double> values_;
  std::vector<double> gamma_;
  double lambda_eff_ = 0.0;
};

// Sort by abscissa and merge exact duplicates into one point carrying the
// summed weight and the weighted-mean ordinate.
std::vector<WeightedPoint> merge_duplicate_abscissae(std::span<const WeightedPoint> points);

// Minimizer of (1/n_total) sum w (z - g(t))^2 + lambda int g''^2, by the banded
// Reinsch solve. If abscissae sit so close together that the factorization
// loses precision, runs of them closer than a tolerance (starting at 1e-10 of
// the data range, growing tenfold up to 1e-3) are merged into their weighted
// centroid before refitting.
SplineCenter fit_smoothing_spline(std::span<const WeightedPoint> points, double lambda,
                                  std::size_t n_total);
SplineCenter fit_smoothing_spline(std::span<const Observation2D> points, double lambda,
                                  std::size_t n_total);

// The objective minimized by fit_smoothing_spline, evaluated for any spline.
double smoothing_objective(std::span<const WeightedPoint> points, const SplineCenter& g,
                           double lambda, std::size_t n_total);

// Composite Simpson rule on n_grid equally spaced nodes (n_grid odd, >= 3).
template <class F>
double simpson(F&& f, double a, double b, std::size_t n_grid) {
  if (n_grid < 3 || n_grid % 2 == 0)
    throw std::invalid_argument("simpson: n_grid must be odd and >= 3");
  const std::size_t intervals = n_grid - 1;
  const double h = (b - a) / static_cast<double>(intervals);
  double sum = f(a) + f(b);
  for (std::size_t i = 1; i < intervals; ++i) {
    const double x = a + h * static_cast<double>(i);
    sum += (i % 2 == 1 ? 4.0 : 2.0) * f(x);
  }
  return sum * h / 3.0;
}

inline constexpr std::size_t kDefaultL2Grid = 2001;

// sqrt(int_lo^hi (a(t) - b(t))^2 dt) by composite Simpson.
template <Trajectory A, Trajectory B>
double l2_distance(const A& a, const B& b, double lo, double hi,
                   std::size_t n_grid = kDefaultL2Grid) {
  const double sq = simpson(
      [&](double t) {
        const double d = static_cast<double>(a(t)) - static_cast<double>(b(t));
        return d * d;
      },
      lo, hi, n_grid);
  return std::sqrt(std::max(sq, 0.0));
}

}  // namespace fkm
