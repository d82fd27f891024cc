#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stef/errors.hpp"
#include "stef/estimation.hpp"
#include "stef/rng.hpp"
#include "stef/stats.hpp"

namespace stef {

namespace detail {

// Observations dropped onto a mesh of bin centres origin + j delta. Grid
// point i sits on bin i * per_step. Each bin keeps count, sum u, sum u^2,
// sum y, sum u y with u = d - centre, so local-linear sums are exact in d.
struct BinnedSample {
  double origin = 0.0;
  double delta = 0.0;
  std::size_t per_step = 1;
  std::size_t n_bins = 0;
  std::vector<std::size_t> bin_of;  // per observation
  std::vector<double> u;
  std::vector<double> y;
};

}  // namespace detail

namespace {

constexpr double kKernelSupport = 5.0;  // bandwidths
constexpr double kBinsPerBandwidth = 20.0;

struct BinSums {
  std::vector<double> cnt, su, suu, sy, suy;

  explicit BinSums(std::size_t n) : cnt(n), su(n), suu(n), sy(n), suy(n) {}

  void add(std::size_t j, double u, double y, double weight = 1.0) {
    cnt[j] += weight;
    su[j] += weight * u;
    suu[j] += weight * u * u;
    sy[j] += weight * y;
    suy[j] += weight * u * y;
  }
};

struct LocalSums {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
};

// Value at offset x (relative to the evaluation point) of the weighted
// line through the sums.
double solve_line(const LocalSums& s, double x = 0.0) {
  if (!(s.s0 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  const double det = s.s0 * s.s2 - s.s1 * s.s1;
  if (!(det > 1e-12 * s.s0 * s.s2)) return s.t0 / s.s0;  // degenerate design: local constant
  const double slope = (s.s0 * s.t1 - s.s1 * s.t0) / det;
  const double level = (s.t0 - slope * s.s1) / s.s0;
  return level + slope * x;
}

class Smoother {
 public:
  Smoother(const detail::BinnedSample& bins, double bandwidth) : bins_(&bins) {
    const auto reach = static_cast<std::size_t>(std::floor(kKernelSupport * bandwidth / bins.delta));
    weights_.resize(reach + 1);
    for (std::size_t o = 0; o <= reach; ++o) {
      const double z = static_cast<double>(o) * bins.delta / bandwidth;
      weights_[o] = std::exp(-0.5 * z * z);
    }
  }

  LocalSums sums_at(const BinSums& s, std::size_t centre) const {
    LocalSums out;
    const std::size_t reach = weights_.size() - 1;
    const std::size_t lo = centre > reach ? centre - reach : 0;
    const std::size_t hi = std::min(bins_->n_bins - 1, centre + reach);
    for (std::size_t j = lo; j <= hi; ++j) {
      if (s.cnt[j] == 0.0) continue;
      const std::size_t o = j > centre ? j - centre : centre - j;
      const double w = weights_[o];
      const double c = (static_cast<double>(j) - static_cast<double>(centre)) * bins_->delta;
      out.s0 += w * s.cnt[j];
      out.s1 += w * (s.cnt[j] * c + s.su[j]);
      out.s2 += w * (s.cnt[j] * c * c + 2.0 * c * s.su[j] + s.suu[j]);
      out.t0 += w * s.sy[j];
      out.t1 += w * (c * s.sy[j] + s.suy[j]);
    }
    return out;
  }

  double at_grid(const BinSums& s, std::size_t grid_index) const {
    return solve_line(sums_at(s, grid_index * bins_->per_step));
  }

  double self_weight() const { return weights_[0]; }

 private:
  const detail::BinnedSample* bins_;
  std::vector<double> weights_;
};

detail::BinnedSample bin_sample(std::span<const DistanceOutcome> data, double lo, double step,
                                std::size_t grid_points, double bandwidth) {
  detail::BinnedSample b;
  b.origin = lo;
  b.per_step = step > 0.0
                   ? std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(kBinsPerBandwidth * step / bandwidth)))
                   : 1;
  b.delta = step > 0.0 ? step / static_cast<double>(b.per_step) : bandwidth / kBinsPerBandwidth;
  b.n_bins = (grid_points - 1) * b.per_step + 1;
  b.bin_of.reserve(data.size());
  b.u.reserve(data.size());
  b.y.reserve(data.size());
  for (const auto& obs : data) {
    const double pos = (obs.distance - lo) / b.delta;
    const auto j = std::min(b.n_bins - 1, static_cast<std::size_t>(std::max(0.0, std::round(pos))));
    b.bin_of.push_back(j);
    b.u.push_back(obs.distance - (lo + static_cast<double>(j) * b.delta));
    b.y.push_back(obs.outcome);
  }
  return b;
}

BinSums full_sums(const detail::BinnedSample& b) {
  BinSums s(b.n_bins);
  for (std::size_t i = 0; i < b.bin_of.size(); ++i) s.add(b.bin_of[i], b.u[i], b.y[i]);
  return s;
}

// Mean squared leave-one-out residual, with the kernel weight of every
// observation in a bin taken at the bin centre.
double loo_cv_score(const detail::BinnedSample& b, double bandwidth) {
  const Smoother smoother(b, bandwidth);
  const BinSums s = full_sums(b);
  std::vector<std::vector<std::size_t>> members(b.n_bins);
  for (std::size_t i = 0; i < b.bin_of.size(); ++i) members[b.bin_of[i]].push_back(i);
  const double w0 = smoother.self_weight();
  double sse = 0.0;
  std::size_t used = 0;
  for (std::size_t j = 0; j < b.n_bins; ++j) {
    if (members[j].empty()) continue;
    const LocalSums all = smoother.sums_at(s, j);
    for (std::size_t i : members[j]) {
      const double u = b.u[i];
      const double y = b.y[i];
      const LocalSums left{all.s0 - w0, all.s1 - w0 * u, all.s2 - w0 * u * u, all.t0 - w0 * y,
                           all.t1 - w0 * u * y};
      const double pred = solve_line(left, u);
      if (!std::isfinite(pred)) continue;
      sse += (y - pred) * (y - pred);
      ++used;
    }
  }
  return used > 0 ? sse / static_cast<double>(used) : std::numeric_limits<double>::infinity();
}

std::optional<double> first_crossing(const std::vector<double>& grid, const std::vector<double>& m,
                                     double threshold) {
  if (!(m.front() > threshold)) return std::nullopt;
  for (std::size_t i = 1; i < m.size(); ++i) {
    if (m[i] <= threshold) {
      const double frac = (m[i - 1] - threshold) / (m[i - 1] - m[i]);
      return grid[i - 1] + frac * (grid[i] - grid[i - 1]);
    }
  }
  return std::nullopt;
}

}  // namespace

NonparFit nonparametric_fit(std::span<const DistanceOutcome> data, const NonparOptions& opts) {
  if (data.size() < 50) throw InsufficientData("nonparametric_fit: need at least 50 observations");
  if (opts.bandwidth && !(*opts.bandwidth > 0.0)) throw DomainError("nonparametric_fit: bandwidth must be positive");
  if (opts.grid_points < 200) throw DomainError("nonparametric_fit: grid needs at least 200 points");
  for (const auto& obs : data) {
    if (!(obs.distance >= 0.0) || !std::isfinite(obs.outcome)) {
      throw DomainError("nonparametric_fit: distances must be >= 0 and outcomes finite");
    }
  }

  std::vector<double> d(data.size());
  std::transform(data.begin(), data.end(), d.begin(), [](const DistanceOutcome& o) { return o.distance; });
  const auto [lo_it, hi_it] = std::minmax_element(d.begin(), d.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw NumericalError("nonparametric_fit: all distances are equal");
  const double step = (hi - lo) / static_cast<double>(opts.grid_points - 1);

  NonparFit fit;
  fit.rule_of_thumb = 1.06 * stats::stddev(d) * std::pow(static_cast<double>(d.size()), -0.2);
  fit.bandwidth = opts.bandwidth.value_or(fit.rule_of_thumb);
  if (!opts.bandwidth && opts.cross_validate) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 10; ++i) {
      const double h = fit.rule_of_thumb * std::pow(2.0, -2.0 + 4.0 * i / 9.0);
      const double score = loo_cv_score(bin_sample(data, lo, step, opts.grid_points, h), h);
      if (score < best) {
        best = score;
        fit.bandwidth = h;
      }
    }
  }

  auto bins = std::make_shared<detail::BinnedSample>(bin_sample(data, lo, step, opts.grid_points, fit.bandwidth));
  const Smoother smoother(*bins, fit.bandwidth);
  const BinSums sums = full_sums(*bins);
  fit.grid.resize(opts.grid_points);
  fit.m_hat.resize(opts.grid_points);
  for (std::size_t i = 0; i < opts.grid_points; ++i) {
    fit.grid[i] = i + 1 == opts.grid_points ? hi : lo + static_cast<double>(i) * step;
    fit.m_hat[i] = smoother.at_grid(sums, i);
  }
  fit.sample = std::move(bins);
  return fit;
}

BoundaryDetection detect_boundary(NonparFit& fit, double fraction, int n_boot, double alpha,
                                  std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("detect_boundary: fraction must lie in (0, 1)");
  if (n_boot <= 0) throw DomainError("detect_boundary: n_boot must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("detect_boundary: alpha must lie in (0, 1)");
  if (!fit.sample || fit.grid.empty()) throw DomainError("detect_boundary: fit carries no sample");

  BoundaryDetection out;
  out.n_boot = n_boot;
  if (fit.m_hat.front() > 0.0) out.candidate = first_crossing(fit.grid, fit.m_hat, fraction * fit.m_hat.front());

  const auto& bins = *fit.sample;
  const Smoother smoother(bins, fit.bandwidth);
  const std::size_t n = bins.y.size();
  const std::size_t last = fit.grid.size() - 1;
  Rng rng(seed);
  std::size_t not_declining = 0;
  std::vector<double> crossings;
  for (int b = 0; b < n_boot; ++b) {
    BinSums s(bins.n_bins);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = rng.index(n);
      s.add(bins.bin_of[i], bins.u[i], bins.y[i]);
    }
    const double near = smoother.at_grid(s, 0);
    const double far = smoother.at_grid(s, last);
    if (!(near - far > 0.0)) ++not_declining;
    if (!out.candidate) continue;
    // Crossing of this resample, for the percentile interval.
    double crossing = std::numeric_limits<double>::infinity();
    if (near > 0.0) {
      const double threshold = fraction * near;
      double prev = near;
      for (std::size_t g = 1; g <= last; ++g) {
        const double m = g == last ? far : smoother.at_grid(s, g);
        if (m <= threshold) {
          crossing = fit.grid[g - 1] + (prev - threshold) / (prev - m) * (fit.grid[g] - fit.grid[g - 1]);
          break;
        }
        prev = m;
      }
    }
    crossings.push_back(crossing);
  }
  out.p_value = (1.0 + static_cast<double>(not_declining)) / (static_cast<double>(n_boot) + 1.0);
  out.reject_null = out.p_value < alpha;
  if (out.reject_null && out.candidate) out.boundary = out.candidate;
  if (!crossings.empty()) {
    out.ci = std::make_pair(stats::quantile(crossings, 0.025), stats::quantile(crossings, 0.975));
  }
  fit.boundary = out.boundary;
  fit.reject_null = out.reject_null;
  return out;
}

}  // namespace stef
