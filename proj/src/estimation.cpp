#include "stef/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "lm.hpp"
#include "stef/errors.hpp"
#include "stef/rng.hpp"
#include "stef/stats.hpp"

namespace stef {

namespace {

constexpr double kZ95 = 1.959963984540054;

double one_sided_upper_p(double t) { return 1.0 - stats::normal_cdf(t); }

}  // namespace

ImpliedBoundary boundary_from_fit(double kappa, double se_kappa, double fraction) {
  if (!(kappa > 0.0)) throw DomainError("boundary_from_fit: kappa must be positive");
  if (!(se_kappa >= 0.0)) throw DomainError("boundary_from_fit: standard error must be non-negative");
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("boundary_from_fit: fraction must lie in (0, 1)");
  ImpliedBoundary b;
  const double log_ratio = std::log(1.0 / fraction);
  b.d_star = log_ratio / kappa;
  b.se = log_ratio * se_kappa / (kappa * kappa);
  b.half_width = kZ95 * b.se;
  b.lo = b.d_star - b.half_width;
  b.hi = b.d_star + b.half_width;
  return b;
}

DecayFit fit_loglinear(std::span<const DistanceOutcome> data, const LoglinearOptions& opts) {
  const std::size_t n = data.size();
  if (n < 3) throw InsufficientData("fit_loglinear: need at least 3 observations");
  if (opts.robust_cutoff && !(*opts.robust_cutoff > 0.0)) throw DomainError("fit_loglinear: cutoff must be positive");
  if (!opts.locations.empty() && opts.locations.size() != n) {
    throw DomainError("fit_loglinear: locations must match the observations");
  }
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(data[i].outcome > 0.0)) {
      std::ostringstream msg;
      msg << "fit_loglinear: outcome " << data[i].outcome << " at row " << i << " is not positive";
      throw DomainError(msg.str());
    }
    if (!(data[i].distance >= 0.0)) throw DomainError("fit_loglinear: distances must be non-negative");
    x[i] = data[i].distance;
    y[i] = std::log(data[i].outcome);
  }
  const double xbar = stats::mean(x);
  const double ybar = stats::mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - xbar) * (x[i] - xbar);
    sxy += (x[i] - xbar) * (y[i] - ybar);
    syy += (y[i] - ybar) * (y[i] - ybar);
  }
  if (!(sxx > 0.0)) throw NumericalError("fit_loglinear: rank-deficient design (no variation in distance)");

  DecayFit fit;
  fit.n = n;
  const double slope = sxy / sxx;
  fit.kappa_s = -slope;
  fit.intercept = ybar - slope * xbar;

  std::vector<double> score(n);
  double ssr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - fit.intercept - slope * x[i];
    ssr += e * e;
    score[i] = (x[i] - xbar) * e;
  }
  fit.se_classical = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : (ssr == 0.0 ? 1.0 : 0.0);

  double meat = 0.0;
  for (double s : score) meat += s * s;
  if (opts.robust_cutoff) {
    const double cutoff = *opts.robust_cutoff;
    if (opts.locations.empty()) {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
          const double gap = x[order[b]] - x[order[a]];
          if (gap >= cutoff) break;
          meat += 2.0 * (1.0 - gap / cutoff) * score[order[a]] * score[order[b]];
        }
      }
    } else {
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
          const double gap = haversine_km(opts.locations[a], opts.locations[b]);
          if (gap < cutoff) meat += 2.0 * (1.0 - gap / cutoff) * score[a] * score[b];
        }
      }
    }
  }
  if (!(meat >= 0.0)) throw NumericalError("fit_loglinear: spatial variance estimate is negative");
  fit.se_spatial = std::sqrt(meat) / sxx;

  if (fit.kappa_s > 0.0) {
    const auto b = boundary_from_fit(fit.kappa_s, fit.se_spatial, opts.boundary_fraction);
    fit.d_star = b.d_star;
    fit.d_star_ci = std::make_pair(b.lo, b.hi);
  }
  return fit;
}

std::optional<std::pair<double, double>> bootstrap_d_star_ci(std::span<const DistanceOutcome> data,
                                                             int n_boot, std::uint64_t seed,
                                                             double fraction) {
  if (n_boot <= 1) throw DomainError("bootstrap_d_star_ci: n_boot must exceed 1");
  Rng rng(seed);
  LoglinearOptions opts;
  opts.robust_cutoff.reset();
  opts.boundary_fraction = fraction;
  std::vector<DistanceOutcome> resample(data.size());
  std::vector<double> d_star;
  d_star.reserve(static_cast<std::size_t>(n_boot));
  for (int b = 0; b < n_boot; ++b) {
    for (auto& obs : resample) obs = data[rng.index(data.size())];
    try {
      const auto fit = fit_loglinear(resample, opts);
      d_star.push_back(fit.d_star.value_or(std::numeric_limits<double>::infinity()));
    } catch (const NumericalError&) {
      // degenerate resample (all distances equal)
    }
  }
  if (d_star.size() < 2) return std::nullopt;
  return std::make_pair(stats::quantile(d_star, 0.025), stats::quantile(d_star, 0.975));
}

DecayFit fit_exponential_nls(std::span<const DistanceOutcome> data, double fraction) {
  const std::size_t n = data.size();
  if (n < 3) throw InsufficientData("fit_exponential_nls: need at least 3 observations");

  std::vector<DistanceOutcome> floored(data.begin(), data.end());
  for (auto& obs : floored) obs.outcome = std::max(obs.outcome, 1e-6);
  LoglinearOptions ll;
  ll.robust_cutoff.reset();
  const DecayFit start = fit_loglinear(floored, ll);

  detail::LmProblem prob;
  prob.eval = [&](const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    r.resize(static_cast<Eigen::Index>(n));
    if (jac) jac->resize(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double e = std::exp(-p[1] * data[i].distance);
      r[row] = p[0] * e - data[i].outcome;
      if (jac) {
        (*jac)(row, 0) = e;
        (*jac)(row, 1) = -p[0] * data[i].distance * e;
      }
    }
  };

  // Two starts: the log-linear fit, and the best point of a kappa scan with
  // the amplitude profiled out.
  double d_max = 0.0;
  for (const auto& obs : data) d_max = std::max(d_max, obs.distance);
  if (!(d_max > 0.0)) throw NumericalError("fit_exponential_nls: rank-deficient design (no variation in distance)");
  Eigen::VectorXd scan_start(2);
  double scan_rss = std::numeric_limits<double>::infinity();
  for (int k = -20; k <= 200; ++k) {
    const double kappa = 0.25 * k / d_max;
    double see = 0.0, sye = 0.0, syy = 0.0;
    for (const auto& obs : data) {
      const double e = std::exp(-kappa * obs.distance);
      see += e * e;
      sye += obs.outcome * e;
      syy += obs.outcome * obs.outcome;
    }
    const double rss = syy - sye * sye / see;
    if (rss < scan_rss) {
      scan_rss = rss;
      scan_start << sye / see, kappa;
    }
  }
  Eigen::VectorXd ll_start(2);
  ll_start << std::exp(start.intercept), start.kappa_s;

  detail::LmResult best;
  best.rss = std::numeric_limits<double>::infinity();
  for (const auto& x0 : {ll_start, scan_start}) {
    auto res = detail::levenberg_marquardt(prob, x0, 500);
    if (res.converged && res.rss < best.rss) best = std::move(res);
  }
  if (!std::isfinite(best.rss)) throw FitFailure("fit_exponential_nls: no start converged");

  DecayFit fit;
  fit.n = n;
  const double a = best.x[0];
  fit.kappa_s = best.x[1];
  fit.intercept = a > 0.0 ? std::log(a) : std::numeric_limits<double>::quiet_NaN();
  const double sigma2 = best.rss / static_cast<double>(n - 2);
  const Eigen::MatrixXd cov = sigma2 * best.jtj.inverse();
  fit.se_classical = std::sqrt(std::max(cov(1, 1), 0.0));
  fit.se_spatial = fit.se_classical;
  double ybar = 0.0;
  for (const auto& obs : data) ybar += obs.outcome;
  ybar /= static_cast<double>(n);
  double sst = 0.0;
  for (const auto& obs : data) sst += (obs.outcome - ybar) * (obs.outcome - ybar);
  fit.r_squared = sst > 0.0 ? std::clamp(1.0 - best.rss / sst, 0.0, 1.0) : 1.0;
  if (fit.kappa_s > 0.0 && a > 0.0) {
    const auto b = boundary_from_fit(fit.kappa_s, fit.se_classical, fraction);
    fit.d_star = b.d_star;
    fit.d_star_ci = std::make_pair(b.lo, b.hi);
  }
  return fit;
}

const char* to_string(FrameworkDecision d) {
  switch (d) {
    case FrameworkDecision::framework_applies:
      return "framework_applies";
    case FrameworkDecision::framework_weak:
      return "framework_weak";
    case FrameworkDecision::framework_rejected:
      return "framework_rejected";
  }
  return "unknown";
}

DiagnosticsReport diagnostics(std::span<const DistanceOutcome> data, std::size_t n_bins,
                              const LoglinearOptions& opts) {
  if (n_bins == 0) throw DomainError("diagnostics: n_bins must be positive");
  if (data.size() < 5 * n_bins) throw InsufficientData("diagnostics: need at least 5 observations per bin");

  DiagnosticsReport rep;
  rep.bins_requested = n_bins;
  std::vector<double> d(data.size()), y(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    d[i] = data[i].distance;
    y[i] = data[i].outcome;
  }
  const auto corr = stats::spearman(d, y);
  rep.spearman_rho = corr.rho;
  rep.spearman_p = corr.p_value;

  const auto [lo_it, hi_it] = std::minmax_element(d.begin(), d.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::size_t bins = n_bins;
  for (;; --bins) {
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::vector<double>> members(bins);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto k = width > 0.0 ? std::min(bins - 1, static_cast<std::size_t>((d[i] - lo) / width)) : 0;
      members[k].push_back(y[i]);
    }
    const bool thin = std::any_of(members.begin(), members.end(), [](const auto& m) { return m.size() < 5; });
    if (thin && bins > 1) continue;
    for (std::size_t k = 0; k < bins; ++k) {
      BinSummary b;
      b.lo = lo + static_cast<double>(k) * width;
      b.hi = k + 1 == bins ? hi : lo + static_cast<double>(k + 1) * width;
      b.count = members[k].size();
      b.mean = b.count ? stats::mean(members[k]) : std::numeric_limits<double>::quiet_NaN();
      b.se = b.count > 1 ? stats::stddev(members[k]) / std::sqrt(static_cast<double>(b.count))
                         : std::numeric_limits<double>::quiet_NaN();
      rep.binned_means.push_back(b);
    }
    break;
  }
  if (bins != n_bins) {
    std::ostringstream msg;
    msg << "widened from " << n_bins << " to " << bins << " bins so every bin holds at least 5 observations";
    rep.adjustment = msg.str();
  }
  const double first = rep.binned_means.front().mean;
  for (const auto& b : rep.binned_means) rep.pct_decline_from_first_bin.push_back((first - b.mean) / first);

  std::vector<DistanceOutcome> positive;
  for (const auto& obs : data) {
    if (obs.outcome > 0.0) positive.push_back(obs);
  }
  if (positive.size() >= 3) {
    try {
      rep.fit = fit_loglinear(positive, opts);
      const bool significant =
          rep.fit.kappa_s > 0.0 && one_sided_upper_p(rep.fit.kappa_s / rep.fit.se_spatial) < 0.05;
      if (significant && rep.fit.r_squared > 0.10) {
        rep.decision = FrameworkDecision::framework_applies;
      } else if (significant && rep.fit.r_squared >= 0.05) {
        rep.decision = FrameworkDecision::framework_weak;
      }
    } catch (const NumericalError&) {
      // no distance variation among positive outcomes: rejected
    }
  }
  return rep;
}

RegionalResult regional_heterogeneity(std::span<const DistanceOutcome> data, double split_distance,
                                      const LoglinearOptions& opts) {
  std::vector<DistanceOutcome> near, far;
  for (const auto& obs : data) (obs.distance < split_distance ? near : far).push_back(obs);
  auto require = [&](const std::vector<DistanceOutcome>& side, const char* name) {
    if (side.size() < 30) {
      std::ostringstream msg;
      msg << "regional_heterogeneity: " << name << " side has " << side.size()
          << " observations; need at least 30";
      throw InsufficientData(msg.str());
    }
  };
  require(near, "near (d < split)");
  require(far, "far (d >= split)");
  RegionalResult out;
  out.near = fit_loglinear(near, opts);
  out.far = fit_loglinear(far, opts);
  out.p_near = one_sided_upper_p(out.near.kappa_s / out.near.se_spatial);
  out.p_far = stats::normal_cdf(out.far.kappa_s / out.far.se_spatial);
  out.sign_reversal = out.p_near < 0.05 && out.p_far < 0.05;
  return out;
}

}  // namespace stef
