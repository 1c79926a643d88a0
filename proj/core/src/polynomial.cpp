#include "fkm/polynomial.hpp"

#include <algorithm>
#include <cmath>

namespace fkm {

double Polynomial::operator()(double t) const noexcept {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * t + *it;
  return acc;
}

Polynomial Polynomial::derivative() const {
  if (coeffs.size() <= 1) return Polynomial({0.0});
  std::vector<double> d(coeffs.size() - 1);
  for (std::size_t i = 1; i < coeffs.size(); ++i) d[i - 1] = static_cast<double>(i) * coeffs[i];
  return Polynomial(std::move(d));
}

double Polynomial::integral_of_square(double a, double b) const {
  if (coeffs.empty()) return 0.0;
  // Square the polynomial, then integrate term by term.
  std::vector<double> sq(2 * coeffs.size() - 1, 0.0);
  for (std::size_t i = 0; i < coeffs.size(); ++i)
    for (std::size_t j = 0; j < coeffs.size(); ++j) sq[i + j] += coeffs[i] * coeffs[j];
  double result = 0.0;
  for (std::size_t i = 0; i < sq.size(); ++i) {
    const double e = static_cast<double>(i + 1);
    result += sq[i] * (std::pow(b, e) - std::pow(a, e)) / e;
  }
  return result;
}

Polynomial operator-(const Polynomial& a, const Polynomial& b) {
  std::vector<double> c(std::max(a.coeffs.size(), b.coeffs.size()), 0.0);
  for (std::size_t i = 0; i < a.coeffs.size(); ++i) c[i] += a.coeffs[i];
  for (std::size_t i = 0; i < b.coeffs.size(); ++i) c[i] -= b.coeffs[i];
  return Polynomial(std::move(c));
}

}  // namespace fkm
