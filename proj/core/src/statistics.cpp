#include "fkm/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fkm {

double quantile_nearest_rank(std::span<const double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double mean(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("mean of an empty sample");
  double s = 0.0;
  for (double x : samples) s += x;
  return s / static_cast<double>(samples.size());
}

double stddev(std::span<const double> samples) {
  if (samples.size() < 2) return 0.0;
  const double m = mean(samples);
  double s = 0.0;
  for (double x : samples) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(samples.size() - 1));
}

Summary summarize(std::span<const double> samples) {
  Summary s;
  s.q05 = quantile_nearest_rank(samples, 0.05);
  s.q25 = quantile_nearest_rank(samples, 0.25);
  s.median = quantile_nearest_rank(samples, 0.5);
  s.q75 = quantile_nearest_rank(samples, 0.75);
  s.q95 = quantile_nearest_rank(samples, 0.95);
  s.mean = mean(samples);
  s.stddev = stddev(samples);
  s.count = samples.size();
  return s;
}

double ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("ols_slope: need >= 2 paired samples");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("ols_slope: x has no spread");
  return sxy / sxx;
}

}  // namespace fkm
