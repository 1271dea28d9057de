#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"

namespace mad4ag {

struct PlanEntry {
  ActivityType type = ActivityType::Home;
  std::int64_t start_s = 0;
  std::int64_t end_s = 0;
  std::int64_t location_id = -1;
  double lat = 0.0;
  double lon = 0.0;
  bool feasible = true;

  GeoPoint point() const noexcept { return {lat, lon}; }
};

/// One simulated average weekday of one device.
struct DailyPlan {
  std::string device_id;
  int sim_day = 0;
  std::vector<PlanEntry> entries;

  std::string sequence() const {
    std::string s;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (i) s.push_back('-');
      s.push_back(activity_code(entries[i].type));
    }
    return s;
  }
};

inline const std::vector<std::string>& plan_columns() {
  static const std::vector<std::string> cols = {"device_id", "sim_day", "seq_idx", "activity_type", "start",
                                                "end",       "location_id", "lat", "lon", "feasible"};
  return cols;
}

inline std::string plans_to_csv(const std::vector<DailyPlan>& plans) {
  csv::Writer w(plan_columns());
  for (const auto& p : plans) {
    for (std::size_t i = 0; i < p.entries.size(); ++i) {
      const auto& e = p.entries[i];
      w.add(p.device_id, p.sim_day, i, std::string(activity_name(e.type)), e.start_s, e.end_s, e.location_id,
            e.lat, e.lon, e.feasible);
    }
  }
  return w.str();
}

inline void write_plans(const std::filesystem::path& path, const std::vector<DailyPlan>& plans) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + path.string());
  out << plans_to_csv(plans);
}

/// Reads the plans schema. The trailing `feasible` column is optional so that
/// externally produced comparison plans load as well.
inline std::vector<DailyPlan> read_plans(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  csv::require_columns(t, {"device_id", "sim_day", "seq_idx", "activity_type", "start", "end", "location_id", "lat", "lon"},
                       path.string());
  const int c_dev = t.column("device_id"), c_day = t.column("sim_day"), c_seq = t.column("seq_idx"),
            c_type = t.column("activity_type"), c_start = t.column("start"), c_end = t.column("end"),
            c_loc = t.column("location_id"), c_lat = t.column("lat"), c_lon = t.column("lon"),
            c_feas = t.column("feasible");

  const std::size_t needed =
      static_cast<std::size_t>(std::max({c_dev, c_day, c_seq, c_type, c_start, c_end, c_loc, c_lat, c_lon})) + 1;

  struct Row {
    std::int64_t seq;
    PlanEntry e;
  };
  std::map<std::pair<std::string, std::int64_t>, std::vector<Row>> grouped;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() < needed)
      throw data_error(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": short row");
    std::int64_t day = 0, seq = 0;
    Row out{};
    if (!csv::to_int(row[c_day], day) || !csv::to_int(row[c_seq], seq) ||
        !parse_activity(row[c_type], out.e.type) || !csv::to_int(row[c_start], out.e.start_s) ||
        !csv::to_int(row[c_end], out.e.end_s) || !csv::to_double(row[c_lat], out.e.lat) ||
        !csv::to_double(row[c_lon], out.e.lon))
      throw data_error(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": malformed plan row");
    if (!csv::to_int(row[c_loc], out.e.location_id)) out.e.location_id = -1;
    if (c_feas >= 0 && static_cast<std::size_t>(c_feas) < row.size()) out.e.feasible = row[c_feas] != "0";
    out.seq = seq;
    grouped[{row[c_dev], day}].push_back(out);
  }
  std::vector<DailyPlan> plans;
  plans.reserve(grouped.size());
  for (auto& [key, rows] : grouped) {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.seq < b.seq; });
    DailyPlan p;
    p.device_id = key.first;
    p.sim_day = static_cast<int>(key.second);
    for (auto& r : rows) p.entries.push_back(r.e);
    plans.push_back(std::move(p));
  }
  return plans;
}

}  // namespace mad4ag
