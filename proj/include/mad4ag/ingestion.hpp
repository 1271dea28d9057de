#pragma once

#include <algorithm>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"

namespace mad4ag {

enum class Region { Svealand, Gotaland, Norrland };
enum class UrbanDensity { High, Low };
enum class BuildingKind { Residential, Workplace, School, Other };

inline std::string_view region_name(Region r) noexcept {
  switch (r) {
    case Region::Svealand: return "Svealand";
    case Region::Gotaland: return "Götaland";
    case Region::Norrland: return "Norrland";
  }
  return "?";
}

inline std::optional<Region> parse_region(std::string_view s) noexcept {
  if (s == "Svealand" || s == "svealand") return Region::Svealand;
  if (s == "Götaland" || s == "Gotaland" || s == "götaland" || s == "gotaland") return Region::Gotaland;
  if (s == "Norrland" || s == "norrland") return Region::Norrland;
  return std::nullopt;
}

inline std::string_view density_name(UrbanDensity d) noexcept { return d == UrbanDensity::High ? "high" : "low"; }

inline std::optional<UrbanDensity> parse_density(std::string_view s) noexcept {
  if (s == "high" || s == "High") return UrbanDensity::High;
  if (s == "low" || s == "Low") return UrbanDensity::Low;
  return std::nullopt;
}

inline std::string_view building_kind_name(BuildingKind k) noexcept {
  switch (k) {
    case BuildingKind::Residential: return "residential";
    case BuildingKind::Workplace: return "workplace";
    case BuildingKind::School: return "school";
    case BuildingKind::Other: return "other";
  }
  return "?";
}

inline std::optional<BuildingKind> parse_building_kind(std::string_view s) noexcept {
  if (s == "residential") return BuildingKind::Residential;
  if (s == "workplace") return BuildingKind::Workplace;
  if (s == "school") return BuildingKind::School;
  if (s == "other") return BuildingKind::Other;
  return std::nullopt;
}

inline std::optional<bool> parse_bool(std::string_view s) noexcept {
  if (s == "1" || s == "true" || s == "yes" || s == "True" || s == "Yes") return true;
  if (s == "0" || s == "false" || s == "no" || s == "False" || s == "No") return false;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// GPS fixes
// ---------------------------------------------------------------------------

struct LoadReport {
  std::size_t rows = 0;
  std::size_t malformed = 0;
  std::size_t duplicates = 0;
  std::vector<std::string> messages;  // first few row errors
};

/// Fixes sorted by (device_id, ts) with duplicate (device, ts) records removed.
class FixStream {
 public:
  FixStream() = default;
  explicit FixStream(std::vector<RawFix> fixes, std::size_t* duplicates = nullptr) : fixes_(std::move(fixes)) {
    std::stable_sort(fixes_.begin(), fixes_.end(), [](const RawFix& a, const RawFix& b) {
      if (a.device_id != b.device_id) return a.device_id < b.device_id;
      return a.ts < b.ts;
    });
    const auto before = fixes_.size();
    fixes_.erase(std::unique(fixes_.begin(), fixes_.end(),
                             [](const RawFix& a, const RawFix& b) { return a.device_id == b.device_id && a.ts == b.ts; }),
                 fixes_.end());
    if (duplicates) *duplicates = before - fixes_.size();
    for (std::size_t i = 0; i < fixes_.size();) {
      std::size_t j = i;
      while (j < fixes_.size() && fixes_[j].device_id == fixes_[i].device_id) ++j;
      ranges_.push_back({i, j});
      i = j;
    }
  }

  const std::vector<RawFix>& fixes() const noexcept { return fixes_; }
  std::size_t size() const noexcept { return fixes_.size(); }
  std::size_t device_count() const noexcept { return ranges_.size(); }

  std::span<const RawFix> device(std::size_t i) const noexcept {
    return {fixes_.data() + ranges_[i].first, ranges_[i].second - ranges_[i].first};
  }

 private:
  std::vector<RawFix> fixes_;
  std::vector<std::pair<std::size_t, std::size_t>> ranges_;
};

namespace detail {
inline void abort_if_too_malformed(const LoadReport& rep, const std::string& what) {
  if (rep.rows > 0 && static_cast<double>(rep.malformed) > 0.01 * static_cast<double>(rep.rows)) {
    std::string msg = what + ": " + std::to_string(rep.malformed) + " of " + std::to_string(rep.rows) +
                      " rows malformed (limit 1%)";
    for (const auto& m : rep.messages) msg += "\n  " + m;
    throw data_error(msg);
  }
}

inline void note(LoadReport& rep, const std::string& msg) {
  ++rep.malformed;
  if (rep.messages.size() < 5) rep.messages.push_back(msg);
}
}  // namespace detail

inline FixStream parse_fixes(const csv::Table& t, const std::string& what, LoadReport* report = nullptr) {
  csv::require_columns(t, {"device_id", "lat", "lon", "ts"}, what);
  const int c_dev = t.column("device_id"), c_lat = t.column("lat"), c_lon = t.column("lon"), c_ts = t.column("ts");
  const std::size_t needed = static_cast<std::size_t>(std::max({c_dev, c_lat, c_lon, c_ts})) + 1;
  LoadReport rep;
  std::vector<RawFix> fixes;
  fixes.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    ++rep.rows;
    RawFix f;
    if (row.size() < needed || row[c_dev].empty() || !csv::to_double(row[c_lat], f.lat) ||
        !csv::to_double(row[c_lon], f.lon) || !csv::to_int(row[c_ts], f.ts) || !valid_coordinates(f.lat, f.lon) ||
        f.ts <= 0) {
      detail::note(rep, what + ":" + std::to_string(t.line_numbers[r]) + ": invalid fix");
      continue;
    }
    f.device_id = row[c_dev];
    fixes.push_back(std::move(f));
  }
  detail::abort_if_too_malformed(rep, what);
  FixStream stream(std::move(fixes), &rep.duplicates);
  if (report) *report = rep;
  return stream;
}

inline FixStream load_fixes(const std::filesystem::path& path, LoadReport* report = nullptr) {
  return parse_fixes(csv::read(path), path.string(), report);
}

inline void write_fixes(const std::filesystem::path& path, std::span<const RawFix> fixes) {
  csv::Writer w({"device_id", "lat", "lon", "ts"});
  for (const auto& f : fixes) w.add(f.device_id, f.lat, f.lon, f.ts);
  w.save(path);
}

// ---------------------------------------------------------------------------
// Survey diaries
// ---------------------------------------------------------------------------

struct SurveyActivity {
  ActivityType type = ActivityType::Home;
  std::int64_t start_s = 0;
  std::int64_t end_s = 0;
  /// Reported distance of the trip that arrives at this activity; NaN if unknown.
  double trip_km = std::numeric_limits<double>::quiet_NaN();
};

struct SurveyTrip {
  std::size_t origin = 0;
  std::size_t destination = 0;
  double distance_km = 0.0;
  std::int64_t departure_s = 0;
};

struct SurveyDiary {
  std::string participant_id;
  Region region = Region::Svealand;
  UrbanDensity density = UrbanDensity::High;
  bool employed = false;
  std::vector<SurveyActivity> activities;
  std::vector<SurveyTrip> trips;

  std::string sequence() const {
    std::string s;
    for (std::size_t i = 0; i < activities.size(); ++i) {
      if (i) s.push_back('-');
      s.push_back(activity_code(activities[i].type));
    }
    return s;
  }

  bool has(ActivityType t) const noexcept {
    return std::any_of(activities.begin(), activities.end(), [t](const SurveyActivity& a) { return a.type == t; });
  }

  std::size_t count(ActivityType t) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(activities.begin(), activities.end(), [t](const SurveyActivity& a) { return a.type == t; }));
  }

  /// Mean reported trip distance; 0 for a stay-at-home diary.
  double average_trip_km() const noexcept {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& t : trips) {
      if (std::isnan(t.distance_km)) continue;
      sum += t.distance_km;
      ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
  }

  /// Mean distance of Home<->Work legs, if the diary has any.
  std::optional<double> commute_km() const noexcept {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& t : trips) {
      const auto a = activities[t.origin].type, b = activities[t.destination].type;
      const bool commute = (a == ActivityType::Home && b == ActivityType::Work) ||
                           (a == ActivityType::Work && b == ActivityType::Home);
      if (!commute || std::isnan(t.distance_km)) continue;
      sum += t.distance_km;
      ++n;
    }
    if (!n) return std::nullopt;
    return sum / static_cast<double>(n);
  }
};

struct SurveyLoadReport {
  std::size_t rows = 0;
  std::size_t participants = 0;
  std::size_t dropped_invalid = 0;   // overlap, order, bad times
  std::size_t dropped_incomplete = 0;  // chain does not start and end at home over the full day
  std::size_t dropped_minor = 0;
};

/// Accepts seconds of day ("28800") or clock time ("08:00", "24:00").
inline bool parse_clock(std::string_view s, std::int64_t& out) noexcept {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) return csv::to_int(s, out);
  std::int64_t h = 0, m = 0, sec = 0;
  const auto rest = s.substr(colon + 1);
  const auto colon2 = rest.find(':');
  if (!csv::to_int(s.substr(0, colon), h)) return false;
  if (colon2 == std::string_view::npos) {
    if (!csv::to_int(rest, m)) return false;
  } else if (!csv::to_int(rest.substr(0, colon2), m) || !csv::to_int(rest.substr(colon2 + 1), sec)) {
    return false;
  }
  if (h < 0 || m < 0 || m > 59 || sec < 0 || sec > 59) return false;
  out = h * 3600 + m * 60 + sec;
  return true;
}

/// Builds the trip list and checks the diary invariants. Home at either end is
/// stretched to the day boundary; returns false when the diary stays invalid.
inline bool finalize_diary(SurveyDiary& d, bool& incomplete) {
  incomplete = false;
  auto& acts = d.activities;
  if (acts.empty()) {
    incomplete = true;
    return false;
  }
  for (std::size_t i = 0; i < acts.size(); ++i) {
    if (acts[i].start_s < 0 || acts[i].end_s > kSecondsPerDay || acts[i].start_s >= acts[i].end_s) return false;
    if (i > 0 && acts[i].start_s < acts[i - 1].end_s) return false;
  }
  if (acts.front().type != ActivityType::Home || acts.back().type != ActivityType::Home) {
    incomplete = true;
    return false;
  }
  acts.front().start_s = 0;
  acts.back().end_s = kSecondsPerDay;
  d.trips.clear();
  for (std::size_t i = 1; i < acts.size(); ++i)
    d.trips.push_back({i - 1, i, acts[i].trip_km, acts[i - 1].end_s});
  return true;
}

inline std::vector<SurveyDiary> parse_survey(const csv::Table& t, const std::string& what,
                                             SurveyLoadReport* report = nullptr) {
  csv::require_columns(t, {"participant_id", "region", "urban_density", "employed", "seq", "activity_type", "start", "end"},
                       what);
  const int c_pid = t.column("participant_id"), c_reg = t.column("region"), c_den = t.column("urban_density"),
            c_emp = t.column("employed"), c_seq = t.column("seq"), c_type = t.column("activity_type"),
            c_start = t.column("start"), c_end = t.column("end"), c_age = t.column("age"),
            c_km = t.column("trip_km");
  const std::size_t needed =
      static_cast<std::size_t>(std::max({c_pid, c_reg, c_den, c_emp, c_seq, c_type, c_start, c_end})) + 1;

  struct Pending {
    SurveyDiary diary;
    std::vector<std::pair<std::int64_t, SurveyActivity>> rows;
    bool bad = false;
    bool minor = false;
  };
  std::map<std::string, Pending> by_id;
  SurveyLoadReport rep;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    ++rep.rows;
    if (row.size() < needed || row[c_pid].empty()) throw data_error(what + ":" + std::to_string(t.line_numbers[r]) + ": short row");
    Pending& p = by_id[row[c_pid]];
    p.diary.participant_id = row[c_pid];
    const auto reg = parse_region(row[c_reg]);
    const auto den = parse_density(row[c_den]);
    const auto emp = parse_bool(row[c_emp]);
    std::int64_t seq = 0;
    SurveyActivity a;
    if (!reg || !den || !emp || !csv::to_int(row[c_seq], seq) || !parse_activity(row[c_type], a.type) ||
        !parse_clock(row[c_start], a.start_s) || !parse_clock(row[c_end], a.end_s)) {
      p.bad = true;
      continue;
    }
    p.diary.region = *reg;
    p.diary.density = *den;
    p.diary.employed = *emp;
    if (c_age >= 0 && static_cast<std::size_t>(c_age) < row.size()) {
      std::int64_t age = 0;
      if (csv::to_int(row[c_age], age) && age < 18) p.minor = true;
    }
    if (c_km >= 0 && static_cast<std::size_t>(c_km) < row.size() && !row[c_km].empty()) {
      double km = 0.0;
      if (csv::to_double(row[c_km], km) && km >= 0.0) a.trip_km = km;
    }
    p.rows.emplace_back(seq, a);
  }

  std::vector<SurveyDiary> out;
  for (auto& [id, p] : by_id) {
    ++rep.participants;
    if (p.minor) {
      ++rep.dropped_minor;
      continue;
    }
    if (p.bad) {
      ++rep.dropped_invalid;
      continue;
    }
    std::stable_sort(p.rows.begin(), p.rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [seq, a] : p.rows) p.diary.activities.push_back(a);
    bool incomplete = false;
    if (!finalize_diary(p.diary, incomplete)) {
      ++(incomplete ? rep.dropped_incomplete : rep.dropped_invalid);
      continue;
    }
    out.push_back(std::move(p.diary));
  }
  if (report) *report = rep;
  if (out.empty()) throw data_error(what + ": survey is empty after validation (twin matching impossible)");
  return out;
}

inline std::vector<SurveyDiary> load_survey(const std::filesystem::path& path, SurveyLoadReport* report = nullptr) {
  return parse_survey(csv::read(path), path.string(), report);
}

inline void write_survey(const std::filesystem::path& path, const std::vector<SurveyDiary>& diaries) {
  csv::Writer w({"participant_id", "region", "urban_density", "employed", "seq", "activity_type", "start", "end", "trip_km"});
  for (const auto& d : diaries) {
    for (std::size_t i = 0; i < d.activities.size(); ++i) {
      const auto& a = d.activities[i];
      w.add(d.participant_id, std::string(region_name(d.region)), std::string(density_name(d.density)), d.employed, i,
            std::string(activity_name(a.type)), a.start_s, a.end_s,
            std::isnan(a.trip_km) ? std::string() : csv::fmt(a.trip_km));
    }
  }
  w.save(path);
}

// ---------------------------------------------------------------------------
// Zones
// ---------------------------------------------------------------------------

struct Zone {
  std::string zone_id;
  Region region = Region::Svealand;
  UrbanDensity density = UrbanDensity::High;
  double population = 0.0;
  double employees = 0.0;
  std::vector<GeoPoint> ring;  // closed or open ring (lon/lat taken from WKT order)

  double min_lat = 0, max_lat = 0, min_lon = 0, max_lon = 0;

  void update_bounds() {
    min_lat = min_lon = std::numeric_limits<double>::infinity();
    max_lat = max_lon = -std::numeric_limits<double>::infinity();
    for (const auto& p : ring) {
      min_lat = std::min(min_lat, p.lat);
      max_lat = std::max(max_lat, p.lat);
      min_lon = std::min(min_lon, p.lon);
      max_lon = std::max(max_lon, p.lon);
    }
  }
};

/// Parses `POLYGON((lon lat, lon lat, ...))`; only the outer ring is used.
inline std::vector<GeoPoint> parse_wkt_polygon(std::string_view wkt) {
  const auto open = wkt.find("((");
  const auto close = wkt.find(')', open == std::string_view::npos ? 0 : open);
  if (open == std::string_view::npos || close == std::string_view::npos)
    throw data_error("bad WKT polygon: " + std::string(wkt.substr(0, 60)));
  std::string_view body = wkt.substr(open + 2, close - open - 2);
  std::vector<GeoPoint> ring;
  while (!body.empty()) {
    auto comma = body.find(',');
    std::string_view pair = body.substr(0, comma);
    while (!pair.empty() && pair.front() == ' ') pair.remove_prefix(1);
    while (!pair.empty() && pair.back() == ' ') pair.remove_suffix(1);
    const auto sp = pair.find(' ');
    double lon = 0, lat = 0;
    if (sp == std::string_view::npos || !csv::to_double(pair.substr(0, sp), lon) ||
        !csv::to_double(pair.substr(sp + 1), lat) || !valid_coordinates(lat, lon))
      throw data_error("bad WKT coordinate: '" + std::string(pair) + "'");
    ring.push_back({lat, lon});
    if (comma == std::string_view::npos) break;
    body.remove_prefix(comma + 1);
  }
  if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
  if (ring.size() < 3) throw data_error("WKT polygon needs at least 3 vertices");
  return ring;
}

inline std::string to_wkt_polygon(const std::vector<GeoPoint>& ring) {
  std::string s = "POLYGON((";
  for (std::size_t i = 0; i <= ring.size(); ++i) {
    const auto& p = ring[i % ring.size()];
    if (i) s += ", ";
    s += csv::fmt(p.lon) + " " + csv::fmt(p.lat);
  }
  return s + "))";
}

/// Point in polygon with boundary points counted as inside.
inline bool polygon_contains(const std::vector<GeoPoint>& ring, const GeoPoint& pt) noexcept {
  const std::size_t n = ring.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const double xi = ring[i].lon, yi = ring[i].lat, xj = ring[j].lon, yj = ring[j].lat;
    // on segment?
    const double cross = (pt.lon - xi) * (yj - yi) - (pt.lat - yi) * (xj - xi);
    const double scale = std::max({std::abs(xj - xi), std::abs(yj - yi), 1e-12});
    if (std::abs(cross) <= 1e-12 * scale && pt.lon >= std::min(xi, xj) - 1e-12 && pt.lon <= std::max(xi, xj) + 1e-12 &&
        pt.lat >= std::min(yi, yj) - 1e-12 && pt.lat <= std::max(yi, yj) + 1e-12)
      return true;
    if ((yi > pt.lat) != (yj > pt.lat)) {
      const double x = xi + (pt.lat - yi) * (xj - xi) / (yj - yi);
      if (pt.lon < x) inside = !inside;
    }
  }
  return inside;
}

struct ZoneLoadOptions {
  /// Enforce the census zone size range [700, 2700] adults.
  bool census_bounds = true;
};

inline std::vector<Zone> parse_zones(const csv::Table& t, const std::string& what, ZoneLoadOptions opt = {}) {
  csv::require_columns(t, {"zone_id", "region", "urban_density", "population", "employees", "wkt_polygon"}, what);
  const int c_id = t.column("zone_id"), c_reg = t.column("region"), c_den = t.column("urban_density"),
            c_pop = t.column("population"), c_emp = t.column("employees"), c_wkt = t.column("wkt_polygon");
  const std::size_t needed = static_cast<std::size_t>(std::max({c_id, c_reg, c_den, c_pop, c_emp, c_wkt})) + 1;
  std::vector<Zone> zones;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = what + ":" + std::to_string(t.line_numbers[r]);
    if (row.size() < needed) throw data_error(where + ": short row");
    Zone z;
    z.zone_id = row[c_id];
    const auto reg = parse_region(row[c_reg]);
    const auto den = parse_density(row[c_den]);
    if (z.zone_id.empty() || !reg || !den || !csv::to_double(row[c_pop], z.population) ||
        !csv::to_double(row[c_emp], z.employees))
      throw data_error(where + ": malformed zone row");
    if (!seen.insert(z.zone_id).second) throw data_error(where + ": duplicate zone id " + z.zone_id);
    if (z.population <= 0 || z.employees < 0 || z.employees > z.population)
      throw data_error(where + ": zone needs 0 <= employees <= population, population > 0");
    if (opt.census_bounds && (z.population < 700 || z.population > 2700))
      throw data_error(where + ": zone population outside [700, 2700]");
    z.region = *reg;
    z.density = *den;
    z.ring = parse_wkt_polygon(row[c_wkt]);
    z.update_bounds();
    zones.push_back(std::move(z));
  }
  std::sort(zones.begin(), zones.end(), [](const Zone& a, const Zone& b) { return a.zone_id < b.zone_id; });
  return zones;
}

inline std::vector<Zone> load_zones(const std::filesystem::path& path, ZoneLoadOptions opt = {}) {
  return parse_zones(csv::read(path), path.string(), opt);
}

inline void write_zones(const std::filesystem::path& path, const std::vector<Zone>& zones) {
  csv::Writer w({"zone_id", "region", "urban_density", "population", "employees", "wkt_polygon"});
  for (const auto& z : zones)
    w.add(z.zone_id, std::string(region_name(z.region)), std::string(density_name(z.density)), z.population,
          z.employees, to_wkt_polygon(z.ring));
  w.save(path);
}

/// Containing zone; with shared boundaries the lexicographically smallest id
/// wins. Expects zones sorted by id (as returned by load_zones).
inline const Zone* zone_of(const GeoPoint& pt, std::span<const Zone> zones) noexcept {
  const Zone* best = nullptr;
  for (const auto& z : zones) {
    if (pt.lat < z.min_lat || pt.lat > z.max_lat || pt.lon < z.min_lon || pt.lon > z.max_lon) continue;
    if (!polygon_contains(z.ring, pt)) continue;
    if (!best || z.zone_id < best->zone_id) best = &z;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Buildings
// ---------------------------------------------------------------------------

struct Building {
  std::string building_id;
  GeoPoint location;
  BuildingKind kind = BuildingKind::Other;
};

inline std::vector<Building> parse_buildings(const csv::Table& t, const std::string& what) {
  csv::require_columns(t, {"building_id", "lat", "lon", "kind"}, what);
  const int c_id = t.column("building_id"), c_lat = t.column("lat"), c_lon = t.column("lon"), c_kind = t.column("kind");
  const std::size_t needed = static_cast<std::size_t>(std::max({c_id, c_lat, c_lon, c_kind})) + 1;
  std::vector<Building> out;
  std::set<std::string> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = what + ":" + std::to_string(t.line_numbers[r]);
    Building b;
    if (row.size() < needed || row[c_id].empty() || !csv::to_double(row[c_lat], b.location.lat) ||
        !csv::to_double(row[c_lon], b.location.lon) || !valid_coordinates(b.location.lat, b.location.lon))
      throw data_error(where + ": malformed building row");
    const auto kind = parse_building_kind(row[c_kind]);
    if (!kind) throw data_error(where + ": unknown building kind '" + row[c_kind] + "'");
    b.building_id = row[c_id];
    b.kind = *kind;
    if (!seen.insert(b.building_id).second) throw data_error(where + ": duplicate building id " + b.building_id);
    out.push_back(std::move(b));
  }
  return out;
}

inline std::vector<Building> load_buildings(const std::filesystem::path& path) {
  return parse_buildings(csv::read(path), path.string());
}

inline void write_buildings(const std::filesystem::path& path, const std::vector<Building>& buildings) {
  csv::Writer w({"building_id", "lat", "lon", "kind"});
  for (const auto& b : buildings)
    w.add(b.building_id, b.location.lat, b.location.lon, std::string(building_kind_name(b.kind)));
  w.save(path);
}

/// Uniform lat/lon grid over building locations for radius-bounded nearest queries.
class BuildingIndex {
 public:
  explicit BuildingIndex(std::span<const Building> buildings, double cell_deg = 0.005)
      : buildings_(buildings.begin(), buildings.end()), cell_(cell_deg) {
    for (std::size_t i = 0; i < buildings_.size(); ++i) cells_[key(cell_of(buildings_[i].location))].push_back(i);
  }

  std::size_t size() const noexcept { return buildings_.size(); }
  const Building& operator[](std::size_t i) const noexcept { return buildings_[i]; }

  /// Nearest building within `radius_m`; ties go to the smaller id.
  const Building* nearest(const GeoPoint& p, double radius_m) const noexcept {
    const double dlat = km_to_lat_deg(radius_m / 1000.0);
    const double coslat = std::max(std::cos(deg2rad(p.lat)), 1e-6);
    const double dlon = std::min(dlat / coslat, 180.0);
    const auto lo = cell_of({p.lat - dlat, p.lon - dlon});
    const auto hi = cell_of({p.lat + dlat, p.lon + dlon});
    const Building* best = nullptr;
    double best_d = radius_m;
    for (std::int64_t a = lo.first; a <= hi.first; ++a) {
      for (std::int64_t b = lo.second; b <= hi.second; ++b) {
        auto it = cells_.find(key({a, b}));
        if (it == cells_.end()) continue;
        for (std::size_t i : it->second) {
          const double d = haversine_m(p, buildings_[i].location);
          if (d < best_d || (d == best_d && best && buildings_[i].building_id < best->building_id) ||
              (d == best_d && !best)) {
            best = &buildings_[i];
            best_d = d;
          }
        }
      }
    }
    return best;
  }

 private:
  std::pair<std::int64_t, std::int64_t> cell_of(const GeoPoint& p) const noexcept {
    return {static_cast<std::int64_t>(std::floor(p.lat / cell_)), static_cast<std::int64_t>(std::floor(p.lon / cell_))};
  }
  static std::uint64_t key(std::pair<std::int64_t, std::int64_t> c) noexcept {
    return (static_cast<std::uint64_t>(c.first) << 32) ^ (static_cast<std::uint64_t>(c.second) & 0xffffffffULL);
  }

  std::vector<Building> buildings_;
  double cell_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace mad4ag
