#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"
#include "mad4ag/dbscan.hpp"
#include "mad4ag/ingestion.hpp"
#include "mad4ag/parallel.hpp"

namespace mad4ag {

struct Visit {
  EpochSeconds start = 0;
  EpochSeconds end = 0;

  EpochSeconds duration() const noexcept { return end - start; }
  friend bool operator==(const Visit&, const Visit&) = default;
};

struct ActivityLocation {
  std::string device_id;
  int cluster_id = 0;
  int location_id = 0;
  std::optional<std::string> building_id;
  double lat = 0.0;
  double lon = 0.0;
  std::vector<Visit> visits;

  GeoPoint point() const noexcept { return {lat, lon}; }
  double total_hours() const noexcept {
    double s = 0;
    for (const auto& v : visits) s += static_cast<double>(v.duration());
    return s / kSecondsPerHour;
  }
};

struct DeviceActivityData {
  std::string device_id;
  std::vector<ActivityLocation> locations;
  int active_days = 0;

  const ActivityLocation* find(int location_id) const noexcept {
    for (const auto& l : locations)
      if (l.location_id == location_id) return &l;
    return nullptr;
  }
};

struct ClusteringParams {
  DbscanParams activity_space{200'000.0, 2};  // activity clusters
  DbscanParams location{100.0, 1};            // building-level locations
  double snap_radius_m = 500.0;
};

/// Sorts visits and merges overlapping ones.
inline void normalize_visits(std::vector<Visit>& visits) {
  std::sort(visits.begin(), visits.end(),
            [](const Visit& a, const Visit& b) { return a.start < b.start || (a.start == b.start && a.end < b.end); });
  std::vector<Visit> merged;
  for (const auto& v : visits) {
    if (!merged.empty() && v.start < merged.back().end) merged.back().end = std::max(merged.back().end, v.end);
    else merged.push_back(v);
  }
  visits = std::move(merged);
}

/// Two-stage clustering of one device's stops into activity locations.
inline std::vector<ActivityLocation> build_activity_locations(std::span<const Stop> stops,
                                                              const BuildingIndex& buildings,
                                                              const ClusteringParams& p = {}) {
  std::vector<ActivityLocation> out;
  if (stops.empty()) return out;
  const std::string& device = stops.front().device_id;

  std::vector<GeoPoint> pts;
  pts.reserve(stops.size());
  for (const auto& s : stops) pts.push_back(s.point());
  const auto cluster_of = dbscan(pts, p.activity_space);
  int nclusters = 0;
  for (int c : cluster_of) nclusters = std::max(nclusters, c + 1);

  int next_location = 0;
  for (int c = 0; c < nclusters; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < stops.size(); ++i)
      if (cluster_of[i] == c) members.push_back(i);
    std::vector<GeoPoint> cpts;
    for (std::size_t i : members) cpts.push_back(pts[i]);
    const auto group_of = dbscan(cpts, p.location);
    int ngroups = 0;
    for (int g : group_of) ngroups = std::max(ngroups, g + 1);

    // Groups snapped to the same building are one location; keyed by first group.
    std::vector<ActivityLocation> cluster_locs;
    std::map<std::string, std::size_t> by_building;
    for (int g = 0; g < ngroups; ++g) {
      double slat = 0, slon = 0;
      std::size_t cnt = 0;
      std::vector<Visit> visits;
      for (std::size_t k = 0; k < members.size(); ++k) {
        if (group_of[k] != g) continue;
        const auto& s = stops[members[k]];
        slat += s.lat;
        slon += s.lon;
        ++cnt;
        visits.push_back({s.start, s.end});
      }
      const GeoPoint mean{slat / static_cast<double>(cnt), slon / static_cast<double>(cnt)};
      const Building* b = buildings.nearest(mean, p.snap_radius_m);
      if (b) {
        auto it = by_building.find(b->building_id);
        if (it != by_building.end()) {
          auto& loc = cluster_locs[it->second];
          loc.visits.insert(loc.visits.end(), visits.begin(), visits.end());
          continue;
        }
        by_building.emplace(b->building_id, cluster_locs.size());
      }
      ActivityLocation loc;
      loc.device_id = device;
      loc.cluster_id = c;
      if (b) {
        loc.building_id = b->building_id;
        loc.lat = b->location.lat;
        loc.lon = b->location.lon;
      } else {
        loc.lat = mean.lat;
        loc.lon = mean.lon;
      }
      loc.visits = std::move(visits);
      cluster_locs.push_back(std::move(loc));
    }
    for (auto& loc : cluster_locs) {
      loc.location_id = next_location++;
      normalize_visits(loc.visits);
      out.push_back(std::move(loc));
    }
  }
  return out;
}

inline int count_active_days(const std::vector<ActivityLocation>& locs, std::int64_t utc_offset_s) {
  std::set<std::int64_t> days;
  for (const auto& l : locs)
    for (const auto& v : l.visits) days.insert(local_day(v.start, utc_offset_s));
  return static_cast<int>(days.size());
}

/// All devices of a stop list (grouped by device_id, stops in time order).
inline std::vector<DeviceActivityData> build_all_activity_data(std::span<const Stop> stops,
                                                               std::span<const Building> buildings,
                                                               const ClusteringParams& p, std::int64_t utc_offset_s,
                                                               unsigned workers = 1) {
  p.activity_space.validate();
  p.location.validate();
  const BuildingIndex index(buildings);
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t i = 0; i < stops.size();) {
    std::size_t j = i;
    while (j < stops.size() && stops[j].device_id == stops[i].device_id) ++j;
    ranges.push_back({i, j});
    i = j;
  }
  std::vector<DeviceActivityData> out(ranges.size());
  parallel_for(ranges.size(), workers, [&](std::size_t d) {
    const auto span = stops.subspan(ranges[d].first, ranges[d].second - ranges[d].first);
    out[d].device_id = span.front().device_id;
    out[d].locations = build_activity_locations(span, index, p);
    out[d].active_days = count_active_days(out[d].locations, utc_offset_s);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Filters
// ---------------------------------------------------------------------------

/// Public holidays in Sweden, 2019 (including de facto holidays on Midsummer,
/// Christmas and New Year's Eve).
inline std::vector<std::string> default_holidays() {
  return {"2019-01-01", "2019-01-06", "2019-04-19", "2019-04-21", "2019-04-22", "2019-05-01", "2019-05-30",
          "2019-06-06", "2019-06-08", "2019-06-09", "2019-06-21", "2019-06-22", "2019-11-02", "2019-12-24",
          "2019-12-25", "2019-12-26", "2019-12-31"};
}

/// Rough outline of Sweden (lon lat), generous at the borders.
inline std::string default_study_polygon() {
  return "POLYGON((11.0 58.9, 11.1 55.3, 14.4 55.2, 16.6 56.2, 19.2 57.7, 19.4 59.9, 17.5 61.2, 17.9 62.6, "
         "21.5 65.2, 24.3 65.8, 23.6 67.9, 20.6 69.1, 18.0 68.5, 14.4 66.1, 12.0 63.5, 12.4 61.2, 11.0 58.9))";
}

struct FilterParams {
  std::int64_t max_visit_s = 12 * kSecondsPerHour;
  std::vector<GeoPoint> study_area;  // empty = no spatial filter
  std::set<std::int64_t> holidays;   // local day indices
  int min_active_days = 7;
  std::size_t min_locations = 2;
  std::int64_t utc_offset_s = 0;
};

struct FilterReport {
  std::size_t devices_in = 0;
  std::size_t devices_out = 0;
  std::size_t visits_in = 0;
  std::size_t visits_too_long = 0;
  std::size_t visits_outside_area = 0;
  std::size_t visits_weekend_holiday = 0;
  std::size_t devices_few_active_days = 0;
  std::size_t devices_few_locations = 0;
};

inline bool is_weekend_or_holiday(EpochSeconds ts, const FilterParams& p) {
  const auto day = local_day(ts, p.utc_offset_s);
  return weekday_of_day(day) >= 5 || p.holidays.count(day) > 0;
}

/// Applies the data-quality filters. Device order is preserved.
inline std::vector<DeviceActivityData> apply_filters(const std::vector<DeviceActivityData>& data, const FilterParams& p,
                                                     FilterReport* report = nullptr) {
  FilterReport rep;
  std::vector<DeviceActivityData> out;
  for (const auto& dev : data) {
    ++rep.devices_in;
    DeviceActivityData kept{dev.device_id, {}, 0};
    for (const auto& loc : dev.locations) {
      rep.visits_in += loc.visits.size();
      const bool outside = !p.study_area.empty() && !polygon_contains(p.study_area, loc.point());
      ActivityLocation l = loc;
      l.visits.clear();
      for (const auto& v : loc.visits) {
        if (v.duration() > p.max_visit_s) {
          ++rep.visits_too_long;
        } else if (outside) {
          ++rep.visits_outside_area;
        } else if (is_weekend_or_holiday(v.start, p)) {
          ++rep.visits_weekend_holiday;
        } else {
          l.visits.push_back(v);
        }
      }
      if (!l.visits.empty()) kept.locations.push_back(std::move(l));
    }
    kept.active_days = count_active_days(kept.locations, p.utc_offset_s);
    if (kept.active_days < p.min_active_days) {
      ++rep.devices_few_active_days;
      continue;
    }
    if (kept.locations.size() < p.min_locations) {
      ++rep.devices_few_locations;
      continue;
    }
    out.push_back(std::move(kept));
  }
  rep.devices_out = out.size();
  if (report) *report = rep;
  return out;
}

// ---------------------------------------------------------------------------
// Dumps
// ---------------------------------------------------------------------------

inline void write_activity_data(const std::filesystem::path& locations_path, const std::filesystem::path& visits_path,
                                const std::vector<DeviceActivityData>& data) {
  csv::Writer loc({"device_id", "cluster_id", "location_id", "building_id", "lat", "lon", "n_visits", "total_hours"});
  csv::Writer vis({"device_id", "location_id", "start", "end"});
  for (const auto& d : data) {
    for (const auto& l : d.locations) {
      loc.add(d.device_id, l.cluster_id, l.location_id, l.building_id.value_or(""), l.lat, l.lon, l.visits.size(),
              l.total_hours());
      for (const auto& v : l.visits) vis.add(d.device_id, l.location_id, v.start, v.end);
    }
  }
  loc.save(locations_path);
  vis.save(visits_path);
}

inline std::vector<DeviceActivityData> read_activity_data(const std::filesystem::path& locations_path,
                                                          const std::filesystem::path& visits_path,
                                                          std::int64_t utc_offset_s) {
  const csv::Table lt = csv::read(locations_path);
  csv::require_columns(lt, {"device_id", "cluster_id", "location_id", "building_id", "lat", "lon"}, locations_path.string());
  const csv::Table vt = csv::read(visits_path);
  csv::require_columns(vt, {"device_id", "location_id", "start", "end"}, visits_path.string());

  std::map<std::string, DeviceActivityData> devices;
  std::map<std::pair<std::string, std::int64_t>, std::size_t> index;
  const int c_dev = lt.column("device_id"), c_cl = lt.column("cluster_id"), c_loc = lt.column("location_id"),
            c_b = lt.column("building_id"), c_lat = lt.column("lat"), c_lon = lt.column("lon");
  for (std::size_t r = 0; r < lt.rows.size(); ++r) {
    const auto& row = lt.rows[r];
    ActivityLocation l;
    std::int64_t cl = 0, id = 0;
    if (row.size() < 6 || !csv::to_int(row[c_cl], cl) || !csv::to_int(row[c_loc], id) ||
        !csv::to_double(row[c_lat], l.lat) || !csv::to_double(row[c_lon], l.lon))
      throw data_error(locations_path.string() + ":" + std::to_string(lt.line_numbers[r]) + ": malformed location row");
    l.device_id = row[c_dev];
    l.cluster_id = static_cast<int>(cl);
    l.location_id = static_cast<int>(id);
    if (!row[c_b].empty()) l.building_id = row[c_b];
    auto& dev = devices[l.device_id];
    dev.device_id = l.device_id;
    index[{l.device_id, id}] = dev.locations.size();
    dev.locations.push_back(std::move(l));
  }
  const int v_dev = vt.column("device_id"), v_loc = vt.column("location_id"), v_s = vt.column("start"),
            v_e = vt.column("end");
  for (std::size_t r = 0; r < vt.rows.size(); ++r) {
    const auto& row = vt.rows[r];
    std::int64_t id = 0;
    Visit v;
    if (row.size() < 4 || !csv::to_int(row[v_loc], id) || !csv::to_int(row[v_s], v.start) || !csv::to_int(row[v_e], v.end))
      throw data_error(visits_path.string() + ":" + std::to_string(vt.line_numbers[r]) + ": malformed visit row");
    auto it = index.find({row[v_dev], id});
    if (it == index.end())
      throw data_error(visits_path.string() + ": visit references unknown location " + row[v_dev] + "/" + row[v_loc]);
    devices[row[v_dev]].locations[it->second].visits.push_back(v);
  }
  std::vector<DeviceActivityData> out;
  out.reserve(devices.size());
  for (auto& [id, d] : devices) {
    std::sort(d.locations.begin(), d.locations.end(),
              [](const ActivityLocation& a, const ActivityLocation& b) { return a.location_id < b.location_id; });
    for (auto& l : d.locations) normalize_visits(l.visits);
    d.active_days = count_active_days(d.locations, utc_offset_s);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace mad4ag
