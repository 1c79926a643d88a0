#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fkm {

// Nearest-rank quantile: the smallest sample x with at least q*N samples <= x.
double quantile_nearest_rank(std::span<const double> samples, double q);

struct Summary {
  double q05 = 0.0;
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  double q95 = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single sample
  std::size_t count = 0;
};

Summary summarize(std::span<const double> samples);

double mean(std::span<const double> samples);
// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> samples);

// Least-squares slope of y against x.
double ols_slope(std::span<const double> x, std::span<const double> y);

}  // namespace fkm
