#include "stef/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>
#include <unordered_set>

#include "stef/errors.hpp"

namespace stef {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// One comma-separated record; double quotes group fields and "" escapes.
std::vector<std::string> split_record(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw ParseError(line_no, "unterminated quoted field");
  for (auto& f : fields) f = std::string(trim(f));
  return fields;
}

class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (skip(line)) continue;
      header_ = split_record(line, line_no_);
      break;
    }
  }

  CsvReader(std::istream& in, const std::vector<std::string>& required) : CsvReader(in) { require(required); }

  void require(const std::vector<std::string>& required) {
    columns_.clear();
    if (header_.empty()) return;  // empty file
    for (const auto& name : required) {
      const auto it = std::find(header_.begin(), header_.end(), name);
      if (it == header_.end()) throw ParseError(line_no_, "missing required column '" + name + "'");
      columns_.push_back(static_cast<std::size_t>(it - header_.begin()));
    }
  }

  bool has_column(const std::string& name) const {
    return std::find(header_.begin(), header_.end(), name) != header_.end();
  }

  // Fields of the required columns, in the order requested.
  bool next(std::vector<std::string>& out) {
    if (header_.empty()) return false;
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (skip(line)) continue;
      const auto fields = split_record(line, line_no_);
      if (fields.size() != header_.size()) {
        throw ParseError(line_no_, "expected " + std::to_string(header_.size()) + " fields, found " +
                                       std::to_string(fields.size()));
      }
      out.clear();
      for (std::size_t c : columns_) out.push_back(fields[c]);
      return true;
    }
    if (in_.bad()) throw IoError("read error after line " + std::to_string(line_no_));
    return false;
  }

  std::size_t line() const { return line_no_; }

 private:
  // Blank lines and '#' comment lines (e.g. echoed run configuration).
  static bool skip(std::string_view line) {
    line = trim(line);
    return line.empty() || line.front() == '#';
  }

  std::istream& in_;
  std::vector<std::string> header_;
  std::vector<std::size_t> columns_;
  std::size_t line_no_ = 0;
};

double parse_number(const std::string& s, const char* what, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ParseError(line, std::string("bad ") + what + " '" + s + "'");
  }
  return v;
}

bool is_missing(const std::string& s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower.empty() || lower == "na" || lower == "nan" || lower == "null";
}

void check_coordinates(double lat, double lon, std::size_t line) {
  if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0)) {
    throw ParseError(line, "coordinates out of range");
  }
}

YearMonth parse_period(const std::string& s, std::size_t line) {
  YearMonth p;
  if (s.size() != 7 || s[4] != '-') throw ParseError(line, "period '" + s + "' is not YYYY-MM");
  const auto y = std::from_chars(s.data(), s.data() + 4, p.year);
  const auto m = std::from_chars(s.data() + 5, s.data() + 7, p.month);
  if (y.ec != std::errc() || y.ptr != s.data() + 4 || m.ec != std::errc() || m.ptr != s.data() + 7 ||
      p.month < 1 || p.month > 12) {
    throw ParseError(line, "period '" + s + "' is not YYYY-MM");
  }
  return p;
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "': file not found or unreadable");
  return in;
}

}  // namespace

std::string format_period(const YearMonth& p) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", p.year, p.month);
  return buf;
}

std::vector<SourceSite> parse_sources(std::istream& in, double min_capacity) {
  CsvReader reader(in, {"id", "lat", "lon", "capacity_mw"});
  std::vector<SourceSite> out;
  std::unordered_set<std::string> seen;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const std::size_t line = reader.line();
    SourceSite s;
    s.id = f[0];
    if (s.id.empty()) throw ParseError(line, "empty source id");
    s.lat = parse_number(f[1], "lat", line);
    s.lon = parse_number(f[2], "lon", line);
    s.capacity_mw = parse_number(f[3], "capacity_mw", line);
    check_coordinates(s.lat, s.lon, line);
    if (s.capacity_mw < 0.0) throw ParseError(line, "negative capacity");
    if (!seen.insert(s.id).second) throw ParseError(line, "duplicate source id '" + s.id + "'");
    if (s.capacity_mw > min_capacity) out.push_back(std::move(s));
  }
  return out;
}

std::vector<SourceSite> load_sources(const std::filesystem::path& path, double min_capacity) {
  auto in = open(path);
  return parse_sources(in, min_capacity);
}

std::vector<GridObservation> parse_observations(std::istream& in) {
  CsvReader reader(in, {"lat", "lon", "period", "outcome"});
  std::vector<GridObservation> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const std::size_t line = reader.line();
    GridObservation o;
    o.lat = parse_number(f[0], "lat", line);
    o.lon = parse_number(f[1], "lon", line);
    check_coordinates(o.lat, o.lon, line);
    o.period = parse_period(f[2], line);
    o.outcome = is_missing(f[3]) ? std::numeric_limits<double>::quiet_NaN() : parse_number(f[3], "outcome", line);
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<GridObservation> load_observations(const std::filesystem::path& path) {
  auto in = open(path);
  return parse_observations(in);
}

std::vector<DistanceOutcome> parse_distance_outcomes(std::istream& in) {
  CsvReader reader(in);
  reader.require({reader.has_column("distance_km") ? "distance_km" : "distance", "outcome"});
  std::vector<DistanceOutcome> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    const std::size_t line = reader.line();
    if (is_missing(f[1])) continue;
    out.push_back({parse_number(f[0], "distance", line), parse_number(f[1], "outcome", line)});
    if (out.back().distance < 0.0) throw ParseError(line, "negative distance");
  }
  return out;
}

std::vector<DistanceOutcome> load_distance_outcomes(const std::filesystem::path& path) {
  auto in = open(path);
  return parse_distance_outcomes(in);
}

std::vector<NearestMatch> nearest_sources(std::span<const LatLon> points, std::span<const SourceSite> sources,
                                          NearestStrategy strategy) {
  if (sources.empty()) throw InsufficientData("nearest_sources: no sources");
  if (strategy == NearestStrategy::automatic) {
    strategy = static_cast<double>(points.size()) * static_cast<double>(sources.size()) < 1e6
                   ? NearestStrategy::exhaustive
                   : NearestStrategy::bucketed;
  }
  std::vector<NearestMatch> out(points.size());
  if (strategy == NearestStrategy::exhaustive) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      NearestMatch best{0, std::numeric_limits<double>::infinity()};
      for (std::size_t j = 0; j < sources.size(); ++j) {
        const double d = haversine_km(points[i], {sources[j].lat, sources[j].lon});
        if (d < best.distance_km) best = {j, d};
      }
      out[i] = best;
    }
    return out;
  }

  // Sources in latitude order; walk outward from each point's latitude and
  // stop once the meridional arc alone exceeds the best distance.
  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sources[a].lat != sources[b].lat ? sources[a].lat < sources[b].lat : a < b;
  });
  std::vector<double> lats(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) lats[k] = sources[order[k]].lat;
  constexpr double km_per_degree = kEarthRadiusKm * std::numbers::pi / 180.0;

  for (std::size_t i = 0; i < points.size(); ++i) {
    const LatLon p = points[i];
    NearestMatch best{0, std::numeric_limits<double>::infinity()};
    auto consider = [&](std::size_t k) {
      const std::size_t j = order[k];
      const double d = haversine_km(p, {sources[j].lat, sources[j].lon});
      if (d < best.distance_km || (d == best.distance_km && j < best.source)) best = {j, d};
    };
    // Rounding slack so that ties at the pruning edge are still examined.
    auto beyond = [&](double lat) {
      return std::abs(lat - p.lat) * km_per_degree > best.distance_km * (1.0 + 1e-12) + 1e-9;
    };
    const auto start = static_cast<std::size_t>(std::lower_bound(lats.begin(), lats.end(), p.lat) - lats.begin());
    std::size_t up = start;
    std::size_t down = start;  // next index below is down - 1
    bool up_open = up < lats.size();
    bool down_open = down > 0;
    while (up_open || down_open) {
      if (up_open) {
        if (beyond(lats[up])) {
          up_open = false;
        } else {
          consider(up);
          up_open = ++up < lats.size();
        }
      }
      if (down_open) {
        if (beyond(lats[down - 1])) {
          down_open = false;
        } else {
          consider(down - 1);
          down_open = --down > 0;
        }
      }
    }
    out[i] = best;
  }
  return out;
}

std::vector<GridObservation> build_sample(std::span<const GridObservation> observations,
                                          std::span<const SourceSite> sources, const SampleOptions& opts) {
  if (observations.empty()) throw InsufficientData("build_sample: no observations");
  if (sources.empty()) throw InsufficientData("build_sample: no sources");
  if (!(opts.max_distance_km >= 0.0)) throw DomainError("build_sample: max_distance_km must be non-negative");
  if (opts.min_monthly_obs_per_year < 0) throw DomainError("build_sample: min_monthly_obs_per_year must be >= 0");

  auto valid = [](const GridObservation& o) { return std::isfinite(o.outcome) && o.outcome >= 0.0; };
  using Cell = std::pair<double, double>;
  using CellYear = std::pair<Cell, int>;

  // Distinct valid months per cell-year.
  std::map<CellYear, std::set<int>> months;
  for (const auto& o : observations) {
    if (valid(o)) months[{{o.lat, o.lon}, o.period.year}].insert(o.period.month);
  }

  // Match each distinct cell once.
  std::map<Cell, std::size_t> cell_index;
  std::vector<LatLon> cells;
  for (const auto& o : observations) {
    if (cell_index.emplace(Cell{o.lat, o.lon}, cells.size()).second) cells.push_back({o.lat, o.lon});
  }
  const auto matches = nearest_sources(cells, sources, opts.strategy);

  std::vector<GridObservation> out;
  for (const auto& o : observations) {
    if (!valid(o)) continue;
    const auto& m = matches[cell_index.at({o.lat, o.lon})];
    if (m.distance_km > opts.max_distance_km) continue;
    const auto it = months.find({{o.lat, o.lon}, o.period.year});
    if (static_cast<int>(it->second.size()) < opts.min_monthly_obs_per_year) continue;
    GridObservation kept = o;
    kept.nearest_source_id = sources[m.source].id;
    kept.distance_km = m.distance_km;
    out.push_back(std::move(kept));
  }
  return out;
}

void write_sample(std::ostream& out, std::span<const GridObservation> sample) {
  out << "lat,lon,period,outcome,nearest_source_id,distance_km\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  for (const auto& o : sample) {
    std::string id = o.nearest_source_id.value_or("");
    if (id.find_first_of(",\"") != std::string::npos) {
      std::string q = "\"";
      for (char c : id) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      id = q + "\"";
    }
    out << num(o.lat) << ',' << num(o.lon) << ',' << format_period(o.period) << ',' << num(o.outcome) << ','
        << id << ',' << (o.distance_km ? num(*o.distance_km) : std::string()) << '\n';
  }
}

}  // namespace stef
