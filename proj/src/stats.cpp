#include "stef/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "stef/errors.hpp"

namespace stef::stats {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double mean(std::span<const double> x) {
  if (x.empty()) throw InsufficientData("mean: empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  if (x.size() < 2) throw InsufficientData("stddev: need at least two values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j + 1);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    i = j;
  }
  return rank;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("pearson: length mismatch");
  if (x.size() < 2) throw InsufficientData("pearson: need at least two pairs");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("spearman: length mismatch");
  if (x.size() < 3) throw InsufficientData("spearman: need at least three pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  Correlation c;
  c.rho = std::clamp(pearson(rx, ry), -1.0, 1.0);
  const double z = c.rho * std::sqrt(static_cast<double>(x.size() - 1));
  c.p_value = 2.0 * normal_cdf(-std::abs(z));
  return c;
}

RunsTest runs_test(std::span<const double> residuals) {
  RunsTest out;
  double n_pos = 0.0, n_neg = 0.0;
  int last = 0;
  for (double r : residuals) {
    if (r == 0.0) continue;
    const int sign = r > 0.0 ? 1 : -1;
    (sign > 0 ? n_pos : n_neg) += 1.0;
    if (sign != last) ++out.runs;
    last = sign;
  }
  const double n = n_pos + n_neg;
  if (n < 2.0) return out;
  if (n_pos == 0.0 || n_neg == 0.0) {
    out.z = -std::numeric_limits<double>::infinity();
    out.p_value = 0.0;
    return out;
  }
  const double mu = 2.0 * n_pos * n_neg / n + 1.0;
  const double var = 2.0 * n_pos * n_neg * (2.0 * n_pos * n_neg - n) / (n * n * (n - 1.0));
  out.z = var > 0.0 ? (static_cast<double>(out.runs) - mu) / std::sqrt(var) : 0.0;
  out.p_value = 2.0 * normal_cdf(-std::abs(out.z));
  return out;
}

std::vector<double> normal_order_medians(std::size_t n) {
  std::vector<double> positions(n);
  const double nn = static_cast<double>(n);
  const double last = std::pow(0.5, 1.0 / nn);
  for (std::size_t i = 0; i < n; ++i) {
    double m = (static_cast<double>(i + 1) - 0.3175) / (nn + 0.365);
    if (i == 0) m = 1.0 - last;
    if (i + 1 == n) m = last;
    positions[i] = normal_quantile(m);
  }
  return positions;
}

double probability_plot_correlation(std::span<const double> sample) {
  const std::size_t n = sample.size();
  if (n < 3) throw InsufficientData("probability_plot_correlation: need at least three values");
  std::vector<double> sorted(sample.begin(), sample.end());
  std::sort(sorted.begin(), sorted.end());
  return pearson(sorted, normal_order_medians(n));
}

double quantile(std::vector<double> sample, double q) {
  if (sample.empty()) throw InsufficientData("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile: q must lie in [0, 1]");
  std::sort(sample.begin(), sample.end());
  const double pos = q * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sample.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || sample[hi] == sample[lo]) return sample[lo];
  return sample[lo] + frac * (sample[hi] - sample[lo]);
}

}  // namespace stef::stats
