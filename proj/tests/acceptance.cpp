// Acceptance run: one PASS/FAIL line per criterion, details indented above it.
// Exit status is the number of failed criteria (capped at 100).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "stef/dynamics.hpp"
#include "stef/errors.hpp"
#include "stef/estimation.hpp"
#include "stef/fields.hpp"
#include "stef/functionals.hpp"
#include "stef/geo.hpp"
#include "stef/ingest.hpp"
#include "stef/montecarlo.hpp"
#include "stef/rng.hpp"
#include "stef/specfun.hpp"

using namespace stef;
using specfun::bessel_i;
using specfun::kummer_m;

namespace {

constexpr double kPi = std::numbers::pi;

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

// Accumulates the sub-checks of one criterion.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    std::printf("    [%s] %s\n", ok ? "ok" : "--", what.c_str());
    ok_ = ok_ && ok;
  }
  void info(const std::string& what) { std::printf("    %s\n", what.c_str()); }
  bool ok() const { return ok_; }

 private:
  bool ok_ = true;
};

std::string f(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

struct Criterion {
  int id;
  const char* title;
  double budget_s;
  std::function<void(Checks&)> body;
};

int run(const Criterion& c) {
  std::printf("criterion %d: %s\n", c.id, c.title);
  std::fflush(stdout);
  Checks ch;
  const auto start = std::chrono::steady_clock::now();
  try {
    c.body(ch);
  } catch (const std::exception& e) {
    ch.expect(false, std::string("threw: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ch.expect(secs < c.budget_s, f("runtime %.3f s < %.0f s", secs, c.budget_s));
  std::printf("%s %2d %s\n", ch.ok() ? "PASS" : "FAIL", c.id, c.title);
  std::fflush(stdout);
  return ch.ok() ? 0 : 1;
}

const FieldParams kUnit{1.0, 1.0, {}, 0.0, 3};

// --- 1, 2 -----------------------------------------------------------------

void gaussian_boundary(Checks& ch) {
  const auto b = boundary_radius(make_gaussian(kUnit), BoundarySpec::decay_by_epsilon(0.1), 4.0);
  ch.expect(b.radius.has_value(), "boundary found");
  ch.expect(!b.non_unique, "unique crossing");
  ch.expect(std::abs(*b.radius - 1.2984) <= 0.005, f("d*(4) = %.10g, want 1.2984 +- 0.005", *b.radius));
}

void boundary_scaling(Checks& ch) {
  const auto field = make_gaussian(kUnit);
  const auto spec = BoundarySpec::decay_by_epsilon(0.1);
  std::vector<double> ratio;
  for (double t : {0.25, 1.0, 4.0, 16.0}) {
    ratio.push_back(*boundary_radius(field, spec, t).radius / std::sqrt(t));
    ch.info(f("t = %5.2f  d*/sqrt(t) = %.15g", t, ratio.back()));
  }
  const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
  const double spread = (*hi - *lo) / *lo;
  ch.expect(spread <= 1e-9, f("relative spread %.3g <= 1e-9", spread));
}

// --- 3, 4, 5 --------------------------------------------------------------

void moments(Checks& ch) {
  const FieldParams p{1.3, 2.0, {}, 0.0, 3};
  const auto field = make_gaussian(p);
  for (double t : {0.5, 1.0, 4.0}) {
    const double m0 = spatial_moment(field, 0, t).value;
    ch.expect(std::abs(m0 - p.q) <= 1e-6, f("t = %g: M0 = %.12g, want Q = %g within 1e-6", t, m0, p.q));
  }
  const double t1 = 1.0, t2 = 3.0;
  const double slope = (spatial_moment(field, 2, t2).value - spatial_moment(field, 2, t1).value) / (t2 - t1);
  ch.expect(rel(slope, 6.0 * p.nu * p.q) <= 0.005, f("dM2/dt = %.10g, want 6 nu Q = %.10g within 0.5%%", slope, 6.0 * p.nu * p.q));
  for (double t : {0.5, 2.0}) {
    const double r4 = spatial_moment(field, 4, t).value / std::pow(p.nu * t, 2);
    ch.expect(rel(r4, 60.0 * p.q) <= 0.01, f("t = %g: M4 / (nu t)^2 = %.10g, want 60 Q = %g within 1%%", t, r4, 60.0 * p.q));
  }
}

void energy_decay(Checks& ch) {
  const FieldParams p{0.7, 1.5, {}, 0.0, 3};
  const auto field = make_gaussian(p);
  double prev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  double worst = 0.0;
  for (double t : {0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0}) {
    const double e = energy(field, t);
    const double exact = p.q * p.q * std::pow(8.0 * kPi * p.nu * t, -1.5);
    worst = std::max(worst, rel(e, exact));
    monotone = monotone && e < prev;
    prev = e;
  }
  ch.expect(monotone, "E(t) strictly decreasing over t = 0.5 .. 8");
  ch.expect(worst <= 1e-6, f("max relative error vs Q^2 (8 pi nu t)^(-3/2): %.3g <= 1e-6", worst));
}

void exposure_law(Checks& ch) {
  // Often quoted as an inverse-square law; the time integral of the 3D
  // heat kernel is Q / (4 pi nu r), an inverse-distance law.
  const FieldParams p{1.0, 1.0, {}, 0.0, 3};
  const auto field = make_gaussian(p);
  std::vector<double> phi;
  for (double r : {0.1, 1.0, 10.0}) {
    const auto e = cumulative_exposure(field, r, 0.0, kInfiniteHorizon);
    const double law = p.q / (4.0 * kPi * p.nu * r);
    ch.expect(rel(e.value, law) <= 0.005, f("r = %4g: Phi = %.10g, Q/(4 pi nu r) = %.10g", r, e.value, law));
    phi.push_back(e.value);
  }
  const double slope = std::log(phi[2] / phi[0]) / std::log(100.0);
  ch.info(f("log-log slope %.6f: exposure falls as 1/r, not 1/r^2", slope));
}

// --- 6 --------------------------------------------------------------------

void special_functions(Checks& ch) {
  double worst = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double z = 0.1 * i;
    worst = std::max(worst, rel(kummer_m(1.0, 1.0, z).value, std::exp(z)));
  }
  ch.expect(worst <= 1e-10, f("M(1,1,z) vs e^z on [0,10]: max rel %.3g <= 1e-10", worst));

  double conn = 0.0;
  double stated_min = 1e300, stated_max = 0.0;
  for (int i = 0; i <= 49; ++i) {
    const double z = 0.1 + 0.1 * i;
    const double m = kummer_m(0.5, 1.0, 2.0 * z).value;
    const double i0 = bessel_i(0.0, z).value;
    conn = std::max(conn, rel(m, std::exp(z) * i0));
    // Stated form without e^z: the ratio should be exactly e^z.
    const double off = m / i0 / std::exp(z);
    stated_min = std::min(stated_min, off);
    stated_max = std::max(stated_max, off);
  }
  ch.expect(conn <= 1e-8, f("M(1/2,1,2z) vs e^z I0(z) on [0.1,5]: max rel %.3g <= 1e-8", conn));
  ch.expect(std::abs(stated_min - 1.0) < 1e-8 && std::abs(stated_max - 1.0) < 1e-8,
            "stated identity M(1/2,1,2z) = I0(z) is off by exactly e^z (flagged)");
  ch.info(f("e.g. z = 1: M(1/2,1,2) = %.10g, I0(1) = %.10g", kummer_m(0.5, 1.0, 2.0).value, bessel_i(0.0, 1.0).value));
}

// --- 7, 8 -----------------------------------------------------------------

constexpr double kXi = 0.64918569194900253;  // 2 sqrt(ln(1 / 0.9))

double trajectory_error(int steps) {
  const auto traj =
      boundary_ode_integrate(make_gaussian(kUnit), BoundarySpec::decay_by_epsilon(0.1), kXi, 1.0, 10.0, steps);
  double worst = 0.0;
  for (std::size_t i = 0; i < traj.times.size(); ++i) worst = std::max(worst, rel(traj.radii[i], kXi * std::sqrt(traj.times[i])));
  return worst;
}

void boundary_ode(Checks& ch) {
  const double e1000 = trajectory_error(1000);
  ch.expect(e1000 < 1e-4, f("1000 steps over [1,10]: max rel error %.3g < 1e-4", e1000));
  const double coarse = trajectory_error(80), fine = trajectory_error(160);
  const double ratio = coarse / fine;
  ch.info(f("80 steps %.3g, 160 steps %.3g", coarse, fine));
  ch.expect(ratio > 12.0 && ratio < 20.0, f("error ratio on doubling %.2f, want ~16 (12..20)", ratio));
}

void perturbation(Checks& ch) {
  const double alpha = 0.05;
  for (double at : {0.05, 0.1, 0.2, 0.3}) {
    const auto b = adiabatic_boundary(1.0, alpha, 0.1, at / alpha);
    const double gap = std::abs(b.exact - b.first_order) / b.exact;
    ch.expect(gap <= 0.15 * at * at, f("alpha t = %.2f: relative gap %.4g <= %.4g", at, gap, 0.15 * at * at));
  }
}

// --- 9 --------------------------------------------------------------------

void monte_carlo(Checks& ch) {
  std::vector<DGPSpec> specs;
  for (auto id : {DgpId::strong_decay, DgpId::weak_decay, DgpId::hump, DgpId::flat}) specs.push_back(DGPSpec::standard(id));
  const std::vector<McMethod> methods{McMethod::nonparametric, McMethod::parametric};
  const auto rows = run_campaign(specs, 500, 5000, methods, 20240601, {});
  auto get = [&](DgpId id, McMethod m) -> const MCSummary& {
    return *std::find_if(rows.begin(), rows.end(), [&](const MCSummary& s) { return s.dgp_id == id && s.method == m; });
  };
  for (const auto& s : rows) {
    ch.info(f("%-12s %-13s bias %9.3f  rmse %9.3f  coverage %5.3f  fp %5.3f  detections %3zu/%zu  failures %zu",
              to_string(s.dgp_id), to_string(s.method), s.bias, s.rmse, s.coverage.value_or(NAN),
              s.false_positive_rate.value_or(NAN), s.detections, s.n_reps, s.failures));
  }
  const auto& d1 = get(DgpId::strong_decay, McMethod::nonparametric);
  ch.expect(std::abs(d1.bias) <= 1.0, f("DGP1 nonparametric |bias| %.3f <= 1 km", d1.bias));
  ch.expect(d1.rmse <= 2.0, f("DGP1 nonparametric RMSE %.3f <= 2 km", d1.rmse));
  const double cov = d1.coverage.value_or(0.0);
  ch.expect(cov >= 0.91 && cov <= 0.98, f("DGP1 coverage %.3f in [0.91, 0.98]", cov));
  const auto& d2 = get(DgpId::weak_decay, McMethod::nonparametric);
  ch.expect(d2.rmse <= 6.0, f("DGP2 nonparametric RMSE %.3f <= 6 km", d2.rmse));
  const auto& d3n = get(DgpId::hump, McMethod::nonparametric);
  const auto& d3p = get(DgpId::hump, McMethod::parametric);
  ch.expect(d3n.rmse <= 8.0, f("DGP3 nonparametric RMSE %.3f <= 8 km (%zu detections)", d3n.rmse, d3n.detections));
  ch.expect(d3p.rmse >= 2.0 * d3n.rmse, f("DGP3 parametric RMSE %.3f >= 2 x nonparametric", d3p.rmse));
  const auto& d4n = get(DgpId::flat, McMethod::nonparametric);
  const auto& d4p = get(DgpId::flat, McMethod::parametric);
  const double cr = d4n.correct_rejection_rate.value_or(0.0);
  const double fp = d4p.false_positive_rate.value_or(0.0);
  ch.expect(cr >= 0.90, f("DGP4 nonparametric correct rejection %.3f >= 0.90", cr));
  ch.expect(fp >= 0.50, f("DGP4 parametric false-positive rate %.3f >= 0.50", fp));
  ch.expect(fp > 1.0 - cr, "DGP4 ordering: parametric false positives exceed nonparametric");
}

// --- 10 -------------------------------------------------------------------

void recovery(Checks& ch) {
  // 5% critical value of the normal PPCC at n = 100 (20000 simulated samples).
  constexpr double kPpccCritical = 0.987;
  const auto exact = parameter_recovery_campaign(100, 500, 0.0, 1.0, 1.0, 11);
  const double worst = std::max({std::abs(exact.nu.mean - 1.0), std::abs(exact.q.mean - 1.0), exact.nu.rmse, exact.q.rmse});
  ch.expect(worst <= 1e-8 && exact.failures == 0, f("noiseless: max |estimate - truth| %.3g <= 1e-8", worst));

  const auto noisy = parameter_recovery_campaign(100, 500, 4e-4, 1.0, 1.0, 12);
  ch.expect(noisy.failures == 0, f("noisy: %zu failed fits", noisy.failures));
  for (const auto* p : {&noisy.nu, &noisy.q}) {
    const char* name = p == &noisy.nu ? "nu" : "Q";
    ch.expect(std::abs(p->bias) <= 2.0 * p->se_mean,
              f("%s: mean %.8f, |bias| %.3g <= 2 SE = %.3g", name, p->mean, std::abs(p->bias), 2.0 * p->se_mean));
    ch.expect(p->ppcc >= kPpccCritical, f("%s: Q-Q correlation %.5f >= %.3f", name, p->ppcc, kPpccCritical));
  }
}

// --- 11 -------------------------------------------------------------------

void table_arithmetic(Checks& ch) {
  const auto b = boundary_from_fit(0.004028, 0.000012, 0.1);
  ch.expect(std::abs(b.d_star - 571.6) <= 0.5, f("d* = %.6f, want 571.6 +- 0.5 (reference 572)", b.d_star));
  ch.expect(std::abs(b.se - 1.7) <= 0.05, f("delta-method SE = %.4f km, ~1.7", b.se));
  // Reference interval [568, 576]: half-width 4. Same order of magnitude only.
  const double ratio = b.half_width / 4.0;
  ch.expect(ratio > 0.1 && ratio < 10.0, f("95%% half-width %.3f km vs reference 4 km: same order", b.half_width));
  ch.info(f("interval [%.2f, %.2f]", b.lo, b.hi));
}

// --- 12 -------------------------------------------------------------------

void regional(Checks& ch) {
  MixtureSpec spec;
  int reversed = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto data = generate_mixture(spec, 5000, 5000 + s);
    const auto r = regional_heterogeneity(data, spec.split);
    if (r.sign_reversal && r.p_near < 0.05 && r.p_far < 0.05 && r.near.kappa_s > 0 && r.far.kappa_s < 0) ++reversed;
  }
  ch.expect(reversed >= 95, f("sign reversal with both one-sided p < 0.05 in %d/100 replications (>= 95)", reversed));
}

// --- 13 -------------------------------------------------------------------

void ingest(Checks& ch) {
  Rng rng(13);
  std::vector<SourceSite> sources;
  for (int j = 0; j < 150; ++j) sources.push_back({"S" + std::to_string(j), rng.uniform(-70, 75), rng.uniform(-180, 180), 500});
  std::vector<LatLon> cells;
  for (int i = 0; i < 10000; ++i) cells.push_back({rng.uniform(-90, 90), rng.uniform(-180, 180)});
  for (auto strategy : {NearestStrategy::automatic, NearestStrategy::exhaustive, NearestStrategy::bucketed}) {
    const auto got = nearest_sources(cells, sources, strategy);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < sources.size(); ++j) {
        const double d = haversine_km(cells[i], {sources[j].lat, sources[j].lon});
        if (d < best_d) best = j, best_d = d;
      }
      if (got[i].source != best || got[i].distance_km != best_d) ++bad;
    }
    const char* name = strategy == NearestStrategy::bucketed ? "bucketed" : strategy == NearestStrategy::exhaustive ? "exhaustive" : "automatic";
    ch.expect(bad == 0, f("%s matching vs brute force on 10^4 cells: %zu mismatches", name, bad));
  }

  std::istringstream src("id,lat,lon,capacity_mw\nat,0,0,100\nabove,0,1,100.001\nbelow,0,2,99.9\nbig,0,3,2000\n");
  const auto kept = parse_sources(src, 100.0);
  std::vector<std::string> ids;
  for (const auto& s : kept) ids.push_back(s.id);
  ch.expect(ids == std::vector<std::string>{"above", "big"}, "capacity > 100 MW is strict: 100 dropped, 100.001 kept");

  std::ostringstream obs_text;
  obs_text << "lat,lon,period,outcome\n";
  auto year = [&](double lat, int y, int valid) {
    for (int m = 1; m <= 12; ++m) obs_text << lat << ",0," << y << '-' << (m < 10 ? "0" : "") << m << ',' << (m <= valid ? "2.0" : "NA") << '\n';
  };
  year(0.5, 2019, 9);
  year(0.5, 2020, 10);
  year(0.7, 2019, 12);
  std::istringstream obs_in(obs_text.str());
  const auto obs = parse_observations(obs_in);
  const std::vector<SourceSite> plant{{"plant", 0.0, 0.0, 500}};
  const auto sample = build_sample(obs, plant);
  auto count = [&](double lat, int y) {
    return std::count_if(sample.begin(), sample.end(), [&](const GridObservation& o) { return o.lat == lat && o.period.year == y; });
  };
  ch.expect(count(0.5, 2019) == 0, "cell-year with 9 valid months dropped");
  ch.expect(count(0.5, 2020) == 10, "cell-year with 10 valid months kept");
  ch.expect(count(0.7, 2019) == 12, "complete cell-year kept");
}

}  // namespace

int main() {
  const std::vector<Criterion> all{
      {1, "Gaussian boundary d*(4)", 1, gaussian_boundary},
      {2, "boundary scales as sqrt(t)", 1, boundary_scaling},
      {3, "spatial moments M0, M2, M4", 5, moments},
      {4, "energy decay", 5, energy_decay},
      {5, "exposure law Q/(4 pi nu r)", 5, exposure_law},
      {6, "special functions and Kummer-Bessel connection", 1, special_functions},
      {7, "boundary ODE vs closed form", 2, boundary_ode},
      {8, "adiabatic perturbation", 1, perturbation},
      {9, "Monte Carlo boundary detection (500 reps, n = 5000)", 900, monte_carlo},
      {10, "parameter recovery", 120, recovery},
      {11, "implied boundary arithmetic", 1, table_arithmetic},
      {12, "regional sign reversal", 60, regional},
      {13, "ingest matching and filters", 30, ingest},
  };
  int failed = 0;
  for (const auto& c : all) failed += run(c);
  std::printf("\n%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
  return std::min(failed, 100);
}
