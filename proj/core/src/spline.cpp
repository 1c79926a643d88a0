#include "fkm/spline.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

namespace fkm {

namespace {

void require_increasing(std::span<const double> knots) {
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1]))
      throw std::invalid_argument("knots must be strictly increasing (index " + std::to_string(i) + ")");
  }
}

// Symmetric positive definite pentadiagonal system A x = b, solved in place by
// a banded LDL^T factorization. diag[i] = A(i,i), sub1[i] = A(i+1,i),
// sub2[i] = A(i+2,i). Returns nullopt when a pivot loses more than
// kPivotLoss of its diagonal entry to cancellation.
constexpr double kPivotLoss = 1e-9;

std::optional<std::vector<double>> solve_pentadiagonal(std::vector<double> diag, std::vector<double> sub1,
                                        std::vector<double> sub2, std::vector<double> b) {
  const std::size_t n = diag.size();
  std::vector<double> d(n), l1(n, 0.0), l2(n, 0.0);  // l1[i] = L(i,i-1), l2[i] = L(i,i-2)
  for (std::size_t i = 0; i < n; ++i) {
    double di = diag[i];
    if (i >= 1) di -= l1[i] * l1[i] * d[i - 1];
    if (i >= 2) di -= l2[i] * l2[i] * d[i - 2];
    if (!(di > kPivotLoss * diag[i])) return std::nullopt;
    d[i] = di;
    if (i + 2 < n) l2[i + 2] = sub2[i] / di;
    if (i + 1 < n) {
      double a = sub1[i];
      if (i >= 1) a -= l2[i + 1] * l1[i] * d[i - 1];
      l1[i + 1] = a / di;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (i >= 1) b[i] -= l1[i] * b[i - 1];
    if (i >= 2) b[i] -= l2[i] * b[i - 2];
  }
  for (std::size_t i = 0; i < n; ++i) b[i] /= d[i];
  for (std::size_t ii = n; ii-- > 0;) {
    if (ii + 1 < n) b[ii] -= l1[ii + 1] * b[ii + 1];
    if (ii + 2 < n) b[ii] -= l2[ii + 2] * b[ii + 2];
  }
  return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// PenaltyMatrices

PenaltyMatrices build_penalty(std::span<const double> knots) {
  if (knots.size() < 3) throw std::invalid_argument("build_penalty: need at least 3 knots");
  require_increasing(knots);

  const std::size_t m = knots.size();
  PenaltyMatrices p;
  p.q_lower.resize(m - 2);
  p.q_center.resize(m - 2);
  p.q_upper.resize(m - 2);
  p.r_diag.resize(m - 2);
  p.r_off.resize(m - 3);
  for (std::size_t c = 0; c + 2 < m; ++c) {
    const double h_prev = knots[c + 1] - knots[c];
    const double h_next = knots[c + 2] - knots[c + 1];
    p.q_lower[c] = 1.0 / h_prev;
    p.q_center[c] = -(1.0 / h_prev + 1.0 / h_next);
    p.q_upper[c] = 1.0 / h_next;
    p.r_diag[c] = (h_prev + h_next) / 3.0;
    if (c + 3 < m) p.r_off[c] = h_next / 6.0;
  }
  return p;
}

Eigen::MatrixXd PenaltyMatrices::dense_q() const {
  const auto n = static_cast<Eigen::Index>(interior());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n + 2, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    q(c, c) = q_lower[c];
    q(c + 1, c) = q_center[c];
    q(c + 2, c) = q_upper[c];
  }
  return q;
}

Eigen::MatrixXd PenaltyMatrices::dense_r() const {
  const auto n = static_cast<Eigen::Index>(interior());
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    r(c, c) = r_diag[c];
    if (c + 1 < n) r(c, c + 1) = r(c + 1, c) = r_off[c];
  }
  return r;
}

double PenaltyMatrices::quadratic_form(std::span<const double> gamma) const {
  double s = 0.0;
  for (std::size_t c = 0; c < r_diag.size(); ++c) {
    s += r_diag[c] * gamma[c] * gamma[c];
    if (c + 1 < r_diag.size()) s += 2.0 * r_off[c] * gamma[c] * gamma[c + 1];
  }
  return s;
}

// ---------------------------------------------------------------------------
// SplineCenter

SplineCenter::SplineCenter(std::vector<double> knots, std::vector<double> values,
                           std::vector<double> interior_second_derivs, double lambda_eff)
    : knots_(std::move(knots)),
      values_(std::move(values)),
      gamma_(std::move(interior_second_derivs)),
      lambda_eff_(lambda_eff) {
  if (knots_.empty()) throw std::invalid_argument("SplineCenter: no knots");
  if (values_.size() != knots_.size())
    throw std::invalid_argument("SplineCenter: values/knots size mismatch");
  const std::size_t expected = knots_.size() >= 2 ? knots_.size() - 2 : 0;
  if (gamma_.size() != expected)
    throw std::invalid_argument("SplineCenter: expected " + std::to_string(expected) +
                                " interior second derivatives");
  require_increasing(knots_);
}

SplineCenter SplineCenter::constant(double t, double value) {
  return SplineCenter({t}, {value}, {}, 0.0);
}

double SplineCenter::gamma_at(std::size_t i) const noexcept {
  if (i == 0 || i + 1 >= knots_.size()) return 0.0;
  return gamma_[i - 1];
}

std::size_t SplineCenter::segment(double t) const noexcept {
  // Largest i with knots_[i] <= t, clamped to [0, m-2].
  const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  std::size_t i = it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  return std::min(i, knots_.size() - 2);
}

double SplineCenter::value(double t) const noexcept {
  const std::size_t m = knots_.size();
  if (m == 1) return values_[0];
  if (t < knots_.front()) return values_.front() + derivative(knots_.front()) * (t - knots_.front());
  if (t > knots_.back()) return values_.back() + derivative(knots_.back()) * (t - knots_.back());

  const std::size_t i = segment(t);
  const double h = knots_[i + 1] - knots_[i];
  const double a = t - knots_[i];
  const double b = knots_[i + 1] - t;
  if (a == 0.0) return values_[i];
  if (b == 0.0) return values_[i + 1];
  const double gi = gamma_at(i);
  const double gj = gamma_at(i + 1);
  return (b * values_[i] + a * values_[i + 1]) / h +
         ((b * b * b - h * h * b) * gi + (a * a * a - h * h * a) * gj) / (6.0 * h);
}

double SplineCenter::derivative(double t) const noexcept {
  const std::size_t m = knots_.size();
  if (m == 1) return 0.0;
  // Beyond the ends the spline is linear with the end slope.
  t = std::clamp(t, knots_.front(), knots_.back());
  const std::size_t i = segment(t);
  const double h = knots_[i + 1] - knots_[i];
  const double a = t - knots_[i];
  const double b = knots_[i + 1] - t;
  return (values_[i + 1] - values_[i]) / h +
         (-(3.0 * b * b - h * h) * gamma_at(i) + (3.0 * a * a - h * h) * gamma_at(i + 1)) / (6.0 * h);
}

double SplineCenter::second_derivative(double t) const noexcept {
  const std::size_t m = knots_.size();
  if (m < 3 || t <= knots_.front() || t >= knots_.back()) return 0.0;
  const std::size_t i = segment(t);
  const double h = knots_[i + 1] - knots_[i];
  return ((knots_[i + 1] - t) * gamma_at(i) + (t - knots_[i]) * gamma_at(i + 1)) / h;
}

double SplineCenter::bending_energy() const {
  if (knots_.size() < 3) return 0.0;
  return build_penalty(knots_).quadratic_form(gamma_);
}

// ---------------------------------------------------------------------------
// Fitting

std::vector<WeightedPoint> merge_duplicate_abscissae(std::span<const WeightedPoint> points) {
  std::vector<WeightedPoint> sorted(points.begin(), points.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const WeightedPoint& a, const WeightedPoint& b) { return a.t < b.t; });
  std::vector<WeightedPoint> merged;
  merged.reserve(sorted.size());
  for (const auto& p : sorted) {
    if (!merged.empty() && merged.back().t == p.t) {
      auto& q = merged.back();
      const double w = q.w + p.w;
      q.z = (q.z * q.w + p.z * p.w) / w;
      q.w = w;
    } else {
      merged.push_back(p);
    }
  }
  return merged;
}

namespace {

std::optional<SplineCenter> reinsch_fit(std::span<const WeightedPoint> merged, double alpha) {
  const std::size_t m = merged.size();

  std::vector<double> t(m), z(m), w(m);
  for (std::size_t i = 0; i < m; ++i) {
    t[i] = merged[i].t;
    z[i] = merged[i].z;
    w[i] = merged[i].w;
  }
  // One or two knots: the penalty's null space holds the exact fit.
  if (m <= 2) return SplineCenter(std::move(t), std::move(z), {}, alpha);

  const PenaltyMatrices pm = build_penalty(t);
  const std::size_t n = m - 2;

  // A = R + alpha Q^T W^{-1} Q, pentadiagonal. Row r of Q touches columns r-2..r.
  std::vector<double> diag(pm.r_diag), sub1(n > 1 ? n - 1 : 0, 0.0), sub2(n > 2 ? n - 2 : 0, 0.0);
  for (std::size_t c = 0; c + 1 < n; ++c) sub1[c] = pm.r_off[c];
  auto q_entry = [&](std::size_t row, std::size_t col) -> double {
    if (row == col) return pm.q_lower[col];
    if (row == col + 1) return pm.q_center[col];
    if (row == col + 2) return pm.q_upper[col];
    return 0.0;
  };
  for (std::size_t r = 0; r < m; ++r) {
    const std::size_t c_lo = r >= 2 ? r - 2 : 0;
    const std::size_t c_hi = std::min(r, n - 1);
    for (std::size_t c1 = c_lo; c1 <= c_hi; ++c1) {
      for (std::size_t c2 = c1; c2 <= c_hi; ++c2) {
        const double v = alpha * q_entry(r, c1) * q_entry(r, c2) / w[r];
        if (c2 == c1) diag[c1] += v;
        else if (c2 == c1 + 1) sub1[c1] += v;
        else sub2[c1] += v;
      }
    }
  }

  std::vector<double> rhs(n);
  for (std::size_t c = 0; c < n; ++c)
    rhs[c] = pm.q_lower[c] * z[c] + pm.q_center[c] * z[c + 1] + pm.q_upper[c] * z[c + 2];

  auto solved = solve_pentadiagonal(std::move(diag), std::move(sub1), std::move(sub2), std::move(rhs));
  if (!solved) return std::nullopt;
  std::vector<double> gamma = std::move(*solved);

  // g = z - alpha W^{-1} Q gamma
  std::vector<double> g(z);
  for (std::size_t c = 0; c < n; ++c) {
    g[c] -= alpha * pm.q_lower[c] * gamma[c] / w[c];
    g[c + 1] -= alpha * pm.q_center[c] * gamma[c] / w[c + 1];
    g[c + 2] -= alpha * pm.q_upper[c] * gamma[c] / w[c + 2];
  }
  return SplineCenter(std::move(t), std::move(g), std::move(gamma), alpha);
}

// Merge runs of abscissae whose spread is at most tol into their weighted
// centroid. Input sorted and duplicate-free.
std::vector<WeightedPoint> merge_close_abscissae(std::span<const WeightedPoint> points, double tol) {
  std::vector<WeightedPoint> out;
  std::size_t i = 0;
  while (i < points.size()) {
    std::size_t j = i + 1;
    while (j < points.size() && points[j].t - points[i].t <= tol) ++j;
    double w = 0.0, tw = 0.0, zw = 0.0;
    for (std::size_t k = i; k < j; ++k) {
      w += points[k].w;
      tw += points[k].w * points[k].t;
      zw += points[k].w * points[k].z;
    }
    out.push_back({std::clamp(tw / w, points[i].t, points[j - 1].t), zw / w, w});
    i = j;
  }
  return out;
}

}  // namespace

SplineCenter fit_smoothing_spline(std::span<const WeightedPoint> points, double lambda,
                                  std::size_t n_total) {
  if (points.empty()) throw std::invalid_argument("fit_smoothing_spline: no points");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("fit_smoothing_spline: lambda must be finite and >= 0");
  if (n_total == 0) throw std::invalid_argument("fit_smoothing_spline: n_total must be >= 1");
  for (const auto& p : points) {
    if (!(p.w > 0.0) || !std::isfinite(p.w) || !std::isfinite(p.t) || !std::isfinite(p.z))
      throw std::invalid_argument("fit_smoothing_spline: weights must be > 0 and values finite");
  }

  const double alpha = static_cast<double>(n_total) * lambda;
  auto merged = merge_duplicate_abscissae(points);
  const double span = merged.back().t - merged.front().t;
  for (double tol = 1e-10 * span;; tol *= 10.0) {
    if (auto fit = reinsch_fit(merged, alpha)) return std::move(*fit);
    if (tol > 1e-3 * span) throw std::runtime_error("smoothing spline system is numerically singular");
    merged = merge_close_abscissae(merged, tol);
  }
}

SplineCenter fit_smoothing_spline(std::span<const Observation2D> points, double lambda,
                                  std::size_t n_total) {
  std::vector<WeightedPoint> wp;
  wp.reserve(points.size());
  for (const auto& p : points) wp.push_back({p.t, p.z, 1.0});
  return fit_smoothing_spline(std::span<const WeightedPoint>(wp), lambda, n_total);
}

double smoothing_objective(std::span<const WeightedPoint> points, const SplineCenter& g,
                           double lambda, std::size_t n_total) {
  double s = 0.0;
  for (const auto& p : points) {
    const double r = p.z - g(p.t);
    s += p.w * r * r;
  }
  return s / static_cast<double>(n_total) + lambda * g.bending_energy();
}

}  // namespace fkm
