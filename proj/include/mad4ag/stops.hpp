#pragma once

#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"
#include "mad4ag/ingestion.hpp"
#include "mad4ag/parallel.hpp"

namespace mad4ag {

struct StopParams {
  double r1_m = 30.0;            // roaming radius within a stay
  double r2_m = 30.0;            // stop-merge radius
  std::int64_t t_min_s = 900;    // minimum stay duration
  std::int64_t t_max_s = 10800;  // maximum gap between consecutive fixes in a stay

  void validate() const {
    if (!(r1_m > 0) || !(r2_m > 0) || t_min_s <= 0 || t_max_s <= 0)
      throw config_error("stop parameters must all be positive");
  }
};

/// A provisional stay: a run of consecutive fixes of one device.
struct Stay {
  EpochSeconds start = 0;
  EpochSeconds end = 0;
  GeoPoint medoid;
  GeoPoint mean;
  std::size_t first = 0;  // index of the first member fix
  std::size_t count = 0;  // number of member fixes
};

namespace detail {

// Squared equirectangular distance; only used to rank members against a centroid.
inline double planar_sq(const GeoPoint& a, const GeoPoint& b, double coslat) noexcept {
  const double dy = a.lat - b.lat;
  const double dx = (a.lon - b.lon) * coslat;
  return dx * dx + dy * dy;
}

class RunTracker {
 public:
  void reset(std::span<const RawFix> fixes, std::size_t first) {
    fixes_ = fixes;
    first_ = first;
    count_ = 0;
    sum_lat_ = sum_lon_ = 0.0;
    add();
  }

  void add() {
    const auto& f = fixes_[first_ + count_];
    sum_lat_ += f.lat;
    sum_lon_ += f.lon;
    ++count_;
    const GeoPoint c = centroid();
    const double coslat = std::cos(deg2rad(c.lat));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = first_; i < first_ + count_; ++i) {
      const double d = planar_sq(fixes_[i].point(), c, coslat);
      if (d < best) {
        best = d;
        medoid_ = i;
      }
    }
  }

  GeoPoint centroid() const noexcept {
    return {sum_lat_ / static_cast<double>(count_), sum_lon_ / static_cast<double>(count_)};
  }
  GeoPoint medoid() const noexcept { return fixes_[medoid_].point(); }
  std::size_t first() const noexcept { return first_; }
  std::size_t count() const noexcept { return count_; }
  std::size_t last() const noexcept { return first_ + count_ - 1; }

 private:
  std::span<const RawFix> fixes_;
  std::size_t first_ = 0, count_ = 0, medoid_ = 0;
  double sum_lat_ = 0.0, sum_lon_ = 0.0;
};

}  // namespace detail

/// Scans one device's time-ordered fixes into stays. A fix extends the current
/// run when it lies within r1 of the run's medoid (the member nearest the run
/// centroid) and follows the previous fix by at most t_max; otherwise it starts
/// a new run. Runs lasting at least t_min are emitted.
inline std::vector<Stay> detect_stays(std::span<const RawFix> fixes, const StopParams& p) {
  std::vector<Stay> stays;
  if (fixes.size() < 2) return stays;
  detail::RunTracker run;
  run.reset(fixes, 0);
  auto close = [&] {
    const auto& a = fixes[run.first()];
    const auto& b = fixes[run.last()];
    if (run.count() >= 2 && b.ts - a.ts >= p.t_min_s)
      stays.push_back({a.ts, b.ts, run.medoid(), run.centroid(), run.first(), run.count()});
  };
  for (std::size_t i = 1; i < fixes.size(); ++i) {
    const bool gap_ok = fixes[i].ts - fixes[i - 1].ts <= p.t_max_s;
    if (gap_ok && haversine_m(fixes[i].point(), run.medoid()) <= p.r1_m) {
      run.add();
    } else {
      close();
      run.reset(fixes, i);
    }
  }
  close();
  return stays;
}

/// Union-find over stay medoids: stays closer than r2 (transitively) share a
/// label. Labels are dense from 0 in order of each group's first stay.
inline std::vector<int> group_labels(std::span<const Stay> stays, double r2_m) {
  const std::size_t n = stays.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return stays[a].medoid.lat < stays[b].medoid.lat || (stays[a].medoid.lat == stays[b].medoid.lat && a < b);
  });
  const double dlat = km_to_lat_deg(r2_m / 1000.0) * 1.0000001;
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = x + 1; y < n; ++y) {
      const auto& a = stays[order[x]];
      const auto& b = stays[order[y]];
      if (b.medoid.lat - a.medoid.lat > dlat) break;
      if (haversine_m(a.medoid, b.medoid) <= r2_m) {
        const auto ra = find(order[x]), rb = find(order[y]);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }
  std::vector<int> labels(n, -1);
  std::vector<int> root_label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = find(i);
    if (root_label[r] < 0) root_label[r] = next++;
    labels[i] = root_label[r];
  }
  return labels;
}

inline std::vector<Stop> group_stops(std::span<const Stay> stays, const std::string& device_id, const StopParams& p) {
  const auto labels = group_labels(stays, p.r2_m);
  std::vector<Stop> out;
  out.reserve(stays.size());
  for (std::size_t i = 0; i < stays.size(); ++i)
    out.push_back({device_id, stays[i].mean.lat, stays[i].mean.lon, stays[i].start, stays[i].end, labels[i]});
  return out;
}

inline std::vector<Stop> detect_stops(std::span<const RawFix> fixes, const StopParams& p) {
  if (fixes.empty()) return {};
  const auto stays = detect_stays(fixes, p);
  return group_stops(stays, fixes.front().device_id, p);
}

/// Stops of every device in the stream, in device order.
inline std::vector<Stop> detect_all_stops(const FixStream& stream, const StopParams& p, unsigned workers = 1) {
  p.validate();
  std::vector<std::vector<Stop>> per(stream.device_count());
  parallel_for(stream.device_count(), workers, [&](std::size_t i) { per[i] = detect_stops(stream.device(i), p); });
  std::vector<Stop> out;
  std::size_t total = 0;
  for (const auto& v : per) total += v.size();
  out.reserve(total);
  for (auto& v : per) std::move(v.begin(), v.end(), std::back_inserter(out));
  return out;
}

inline void write_stops(const std::filesystem::path& path, std::span<const Stop> stops) {
  csv::Writer w({"device_id", "label", "lat", "lon", "start", "end"});
  for (const auto& s : stops) w.add(s.device_id, s.label, s.lat, s.lon, s.start, s.end);
  w.save(path);
}

inline std::vector<Stop> read_stops(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  csv::require_columns(t, {"device_id", "label", "lat", "lon", "start", "end"}, path.string());
  const int c_dev = t.column("device_id"), c_lab = t.column("label"), c_lat = t.column("lat"), c_lon = t.column("lon"),
            c_s = t.column("start"), c_e = t.column("end");
  std::vector<Stop> out;
  out.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    Stop s;
    std::int64_t label = 0;
    if (row.size() < t.header.size() || !csv::to_int(row[c_lab], label) || !csv::to_double(row[c_lat], s.lat) ||
        !csv::to_double(row[c_lon], s.lon) || !csv::to_int(row[c_s], s.start) || !csv::to_int(row[c_e], s.end))
      throw data_error(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": malformed stop row");
    s.device_id = row[c_dev];
    s.label = static_cast<int>(label);
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(), [](const Stop& a, const Stop& b) {
    return a.device_id < b.device_id || (a.device_id == b.device_id && a.start < b.start);
  });
  return out;
}

}  // namespace mad4ag
