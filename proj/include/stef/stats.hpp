#pragma once

#include <span>
#include <vector>

namespace stef::stats {

double normal_cdf(double x);
double normal_quantile(double p);

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> x);

/// Ranks 1..n with ties given their average rank.
std::vector<double> average_ranks(std::span<const double> x);

struct Correlation {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided, large-sample normal approximation
};

/// Spearman rank correlation; z = rho sqrt(n - 1).
Correlation spearman(std::span<const double> x, std::span<const double> y);

double pearson(std::span<const double> x, std::span<const double> y);

struct RunsTest {
  std::size_t runs = 0;
  double z = 0.0;
  double p_value = 1.0;  // two-sided
};

/// Wald-Wolfowitz runs test on the signs of residuals taken in the given
/// order. Zeros are dropped.
RunsTest runs_test(std::span<const double> residuals);

/// Filliben's approximate medians of the standard normal order statistics.
std::vector<double> normal_order_medians(std::size_t n);

/// Correlation between sorted sample and normal plotting positions
/// (Filliben medians). Near 1 for a normal sample.
double probability_plot_correlation(std::span<const double> sample);

/// Linear-interpolated quantile of a sample (type 7).
double quantile(std::vector<double> sample, double q);

}  // namespace stef::stats
