#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stef/geo.hpp"

namespace stef {

struct DistanceOutcome {
  double distance = 0.0;  // km
  double outcome = 0.0;
};

struct FieldObservation {
  double r = 0.0;
  double t = 0.0;
  double outcome = 0.0;
};

// ---------------------------------------------------------------------------
// Parametric decay

struct DecayFit {
  double kappa_s = 0.0;  // per km, positive means decay
  double intercept = 0.0;
  double se_classical = 0.0;
  double se_spatial = 0.0;  // HAC when a cutoff is set, HC0 otherwise
  double r_squared = 0.0;
  std::size_t n = 0;
  std::optional<double> d_star;
  std::optional<std::pair<double, double>> d_star_ci;
};

struct LoglinearOptions {
  /// Bartlett cutoff in km for the spatial SE; empty gives HC0.
  std::optional<double> robust_cutoff = 50.0;
  /// Pairwise distances for the spatial SE come from these coordinates
  /// when given (haversine); otherwise from |d_i - d_j|.
  std::span<const LatLon> locations = {};
  /// Threshold fraction for d* = ln(1 / p) / kappa.
  double boundary_fraction = 0.1;
};

/// OLS of log(outcome) on distance. d* and its delta-method CI use the
/// spatial SE.
DecayFit fit_loglinear(std::span<const DistanceOutcome> data, const LoglinearOptions& opts = {});

struct ImpliedBoundary {
  double d_star = 0.0;
  double se = 0.0;          // ln(1/p) se_kappa / kappa^2
  double half_width = 0.0;  // 1.96 se
  double lo = 0.0;
  double hi = 0.0;
};

/// d* = ln(1 / p) / kappa with its delta-method 95% interval.
ImpliedBoundary boundary_from_fit(double kappa, double se_kappa, double fraction = 0.1);

/// Percentile bootstrap interval for d* (resample observations, refit).
std::optional<std::pair<double, double>> bootstrap_d_star_ci(std::span<const DistanceOutcome> data,
                                                             int n_boot, std::uint64_t seed,
                                                             double fraction = 0.1);

/// Exponential a exp(-kappa d) by nonlinear least squares on the outcome
/// scale, started from log-linear OLS on max(outcome, 1e-6). Reported in
/// DecayFit form: intercept = ln a, se_spatial = se_classical.
DecayFit fit_exponential_nls(std::span<const DistanceOutcome> data, double fraction = 0.1);

// ---------------------------------------------------------------------------
// Nonparametric boundary

namespace detail {
struct BinnedSample;
}

struct NonparOptions {
  std::optional<double> bandwidth;  // empty: automatic
  bool cross_validate = true;       // refine the rule-of-thumb value by LOO-CV
  std::size_t grid_points = 401;
};

struct NonparFit {
  std::vector<double> grid;
  std::vector<double> m_hat;
  double bandwidth = 0.0;
  double rule_of_thumb = 0.0;
  std::optional<double> boundary;  // set by detect_boundary
  bool reject_null = false;        // set by detect_boundary
  std::shared_ptr<const detail::BinnedSample> sample;
};

/// Local-linear regression with a Gaussian kernel (truncated at 5
/// bandwidths) on an even grid spanning [min d, max d]. Observations are
/// pre-binned on a mesh 20x finer than the bandwidth; the within-bin
/// moments are kept exactly, so affine data are reproduced exactly.
NonparFit nonparametric_fit(std::span<const DistanceOutcome> data, const NonparOptions& opts = {});

struct BoundaryDetection {
  std::optional<double> boundary;
  bool reject_null = false;  // decline significant at alpha, crossing or not
  std::optional<double> candidate;  // crossing before the bootstrap gate
  double p_value = 1.0;
  std::optional<std::pair<double, double>> ci;  // bootstrap percentile
  int n_boot = 0;
};

/// Candidate = first crossing of m_hat <= p m_hat(grid[0]), linearly
/// interpolated inside its grid cell. Declared only if the paired bootstrap
/// rejects H0: m(0) - m(d_max) <= 0 at alpha. Writes boundary and
/// reject_null back into `fit`.
BoundaryDetection detect_boundary(NonparFit& fit, double fraction, int n_boot, double alpha,
                                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// Diagnostics

enum class FrameworkDecision { framework_applies, framework_weak, framework_rejected };

const char* to_string(FrameworkDecision d);

struct BinSummary {
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

struct DiagnosticsReport {
  double spearman_rho = 0.0;
  double spearman_p = 1.0;
  std::vector<BinSummary> binned_means;
  std::vector<double> pct_decline_from_first_bin;
  FrameworkDecision decision = FrameworkDecision::framework_rejected;
  DecayFit fit;  // log-linear on the positive outcomes
  std::size_t bins_requested = 0;
  std::string adjustment;  // non-empty when bins were widened
};

DiagnosticsReport diagnostics(std::span<const DistanceOutcome> data, std::size_t n_bins,
                              const LoglinearOptions& opts = {});

// ---------------------------------------------------------------------------
// Regional heterogeneity

struct RegionalResult {
  DecayFit near;
  DecayFit far;
  double p_near = 1.0;  // one-sided, H1: kappa > 0
  double p_far = 1.0;   // one-sided, H1: kappa < 0
  bool sign_reversal = false;
};

RegionalResult regional_heterogeneity(std::span<const DistanceOutcome> data, double split_distance,
                                      const LoglinearOptions& opts = {});

// ---------------------------------------------------------------------------
// Field fits

struct FieldFit {
  double nu = 0.0;
  double q = 0.0;
  std::array<double, 4> covariance{};  // row-major (nu, q)
  double rss = 0.0;
  int iterations = 0;
  std::string warning;  // identification note when all t are equal
};

/// Gaussian (nu, Q) by damped Gauss-Newton.
FieldFit fit_field_nls(std::span<const FieldObservation> data);

enum class ProfileModel { gaussian, bessel, kummer };
enum class GeometryHint { none, cylindrical };

const char* to_string(ProfileModel m);

struct ProfileSelection {
  ProfileModel model = ProfileModel::gaussian;
  double nu = 0.0;
  double amplitude = 0.0;     // Q (gaussian, kummer) or A (bessel)
  double kummer_coeff = 0.0;  // C of the added Kummer term
  double rss_gaussian = 0.0;
  double rss_alternative = 0.0;
  double lr_stat = 0.0;
  double runs_p = 1.0;
};

/// Gaussian by default; the alternative adds one Kummer term
/// C t^-1 M(1/2, 1, r^2 / (4 nu t)) with shared nu. Upgrade only when
/// n ln(RSS_g / RSS_k) exceeds the 1% chi-square(1) point; the residual runs
/// test p-value is reported alongside. With the
/// cylindrical hint the Bessel field (A / t) K0(r / (2 sqrt(nu t))) is
/// fitted and returned. Up to 5 restarts of at most 500 iterations.
ProfileSelection select_profile_model(std::span<const FieldObservation> data, GeometryHint hint,
                                      std::uint64_t seed = 0);

}  // namespace stef
