#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stef/estimation.hpp"
#include "stef/geo.hpp"

namespace stef {

struct SourceSite {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  double capacity_mw = 0.0;
};

struct YearMonth {
  int year = 0;
  int month = 1;
  auto operator<=>(const YearMonth&) const = default;
};

struct GridObservation {
  double lat = 0.0;
  double lon = 0.0;
  YearMonth period;
  double outcome = 0.0;  // NaN when missing
  std::optional<std::string> nearest_source_id;
  std::optional<double> distance_km;
};

/// Columns id, lat, lon, capacity_mw (any order, extra columns ignored).
/// Keeps capacity strictly above min_capacity. An empty file gives an empty
/// list. ParseError carries the 1-based file line.
std::vector<SourceSite> load_sources(const std::filesystem::path& path, double min_capacity = 100.0);
std::vector<SourceSite> parse_sources(std::istream& in, double min_capacity = 100.0);

/// Columns lat, lon, period (YYYY-MM), outcome. Empty, NA or nan outcomes
/// load as missing.
std::vector<GridObservation> load_observations(const std::filesystem::path& path);
std::vector<GridObservation> parse_observations(std::istream& in);

/// Columns distance_km (or distance) and outcome, e.g. a built sample.
std::vector<DistanceOutcome> load_distance_outcomes(const std::filesystem::path& path);
std::vector<DistanceOutcome> parse_distance_outcomes(std::istream& in);

enum class NearestStrategy {
  automatic,   // exhaustive below 1e6 cell-source pairs
  exhaustive,
  bucketed,    // latitude-sorted sweep, pruned by R |dlat|
};

struct NearestMatch {
  std::size_t source = 0;
  double distance_km = 0.0;
};

/// Nearest source by haversine for every point. Ties go to the lowest
/// source index under every strategy.
std::vector<NearestMatch> nearest_sources(std::span<const LatLon> points, std::span<const SourceSite> sources,
                                          NearestStrategy strategy = NearestStrategy::automatic);

struct SampleOptions {
  double max_distance_km = 200.0;
  int min_monthly_obs_per_year = 10;
  NearestStrategy strategy = NearestStrategy::automatic;
};

/// Valid observations (present, >= 0) within max_distance_km of their
/// nearest source, from cell-years with at least min_monthly_obs_per_year
/// distinct valid months. A cell is a distinct (lat, lon). A failing
/// cell-year drops only that year of the cell.
std::vector<GridObservation> build_sample(std::span<const GridObservation> observations,
                                          std::span<const SourceSite> sources, const SampleOptions& opts = {});

/// Header lat,lon,period,outcome,nearest_source_id,distance_km; numbers with
/// 10 significant digits.
void write_sample(std::ostream& out, std::span<const GridObservation> sample);

std::string format_period(const YearMonth& p);

}  // namespace stef
