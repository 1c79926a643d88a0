#pragma once

#include <vector>

namespace fkm {

// p(t) = c[0] + c[1] t + c[2] t^2 + ...
struct Polynomial {
  std::vector<double> coeffs;

  Polynomial() = default;
  explicit Polynomial(std::vector<double> c) : coeffs(std::move(c)) {}

  double operator()(double t) const noexcept;
  Polynomial derivative() const;
  std::size_t degree() const noexcept { return coeffs.empty() ? 0 : coeffs.size() - 1; }

  // Exact integral of p(t)^2 over [a, b].
  double integral_of_square(double a, double b) const;
};

Polynomial operator-(const Polynomial& a, const Polynomial& b);

// A polynomial restricted to [0, horizon]; its bending energy is measured there.
struct PolynomialTrajectory {
  Polynomial poly;
  double horizon = 1.0;

  double operator()(double t) const noexcept { return poly(t); }
  double bending_energy() const { return poly.derivative().derivative().integral_of_square(0.0, horizon); }
};

}  // namespace fkm
