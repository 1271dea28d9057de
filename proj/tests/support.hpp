#pragma once

// Fixture builders shared by the unit tests.

#include <filesystem>
#include <initializer_list>
#include <string>
#include <vector>

#include "mad4ag/mad4ag.hpp"

namespace fx {

using namespace mad4ag;

inline constexpr std::int64_t H = kSecondsPerHour;

/// 2019-03-04, a Monday, at 00:00 UTC.
inline std::int64_t monday() { return days_from_civil({2019, 3, 4}) * kSecondsPerDay; }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("mad4ag_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

struct Act {
  ActivityType type;
  double start_h;
  double end_h;
  double trip_km = 0.0;
};

inline SurveyDiary diary(const std::string& id, std::initializer_list<Act> acts, bool employed = false,
                         UrbanDensity density = UrbanDensity::High, Region region = Region::Svealand) {
  SurveyDiary d;
  d.participant_id = id;
  d.region = region;
  d.density = density;
  d.employed = employed;
  bool first = true;
  for (const auto& a : acts) {
    SurveyActivity s;
    s.type = a.type;
    s.start_s = static_cast<std::int64_t>(a.start_h * 3600);
    s.end_s = static_cast<std::int64_t>(a.end_h * 3600);
    if (!first) s.trip_km = a.trip_km;
    first = false;
    d.activities.push_back(s);
  }
  bool incomplete = false;
  if (!finalize_diary(d, incomplete)) throw internal_error("test diary " + id + " is invalid");
  return d;
}

inline ActivityLocation location(int id, double lat, double lon, std::vector<Visit> visits, int cluster = 0) {
  ActivityLocation l;
  l.device_id = "dev";
  l.cluster_id = cluster;
  l.location_id = id;
  l.lat = lat;
  l.lon = lon;
  l.visits = std::move(visits);
  return l;
}

inline DeviceActivityData device(const std::string& id, std::vector<ActivityLocation> locs) {
  DeviceActivityData d;
  d.device_id = id;
  for (auto& l : locs) l.device_id = id;
  d.locations = std::move(locs);
  d.active_days = count_active_days(d.locations, 0);
  return d;
}

/// Visits [day + from_h, day + to_h) for each of the first n days from Monday;
/// to_h may exceed 24 for overnight visits.
inline std::vector<Visit> daily(int n, double from_h, double to_h, int first_day = 0) {
  std::vector<Visit> v;
  for (int d = first_day; d < first_day + n; ++d) {
    const std::int64_t base = monday() + d * kSecondsPerDay;
    v.push_back({base + static_cast<std::int64_t>(from_h * 3600), base + static_cast<std::int64_t>(to_h * 3600)});
  }
  return v;
}

/// A point `east_km` east and `north_km` north of (lat, lon).
inline GeoPoint offset(GeoPoint p, double north_km, double east_km) {
  return {p.lat + km_to_lat_deg(north_km), p.lon + km_to_lat_deg(east_km) / std::cos(deg2rad(p.lat))};
}

inline std::string read(const std::filesystem::path& p) { return csv::read_file(p); }

}  // namespace fx
