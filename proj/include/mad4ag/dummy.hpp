#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "mad4ag/activity.hpp"
#include "mad4ag/core.hpp"
#include "mad4ag/parallel.hpp"
#include "mad4ag/plan.hpp"

namespace mad4ag {

/// counts[location][h] = number of distinct local days (by visit start) on
/// which some visit to the location overlaps clock hour h.
struct HourlyVisitTable {
  std::map<int, std::array<int, 24>> counts;
};

inline HourlyVisitTable hourly_visit_table(const DeviceActivityData& device, std::int64_t utc_offset_s = 0) {
  HourlyVisitTable t;
  for (const auto& loc : device.locations) {
    std::array<std::set<std::int64_t>, 24> days;
    for (const auto& v : loc.visits) {
      const auto prof = overlap_profile(v.start, v.end, utc_offset_s);
      const std::int64_t day = local_day(v.start, utc_offset_s);
      for (int h = 0; h < 24; ++h)
        if (prof[h] > 0) days[h].insert(day);
    }
    auto& row = t.counts[loc.location_id];
    for (int h = 0; h < 24; ++h) row[h] = static_cast<int>(days[h].size());
  }
  return t;
}

inline bool dummy_night_hour(int h) noexcept { return h >= 18 || h < 8; }

struct DummyPrimaries {
  int home_location_id = -1;
  std::optional<int> work_location_id;
};

namespace detail {
// Distinct visit-days with any overlap of the selected hours.
inline int visit_days_in(const ActivityLocation& loc, bool night, std::int64_t off) {
  std::set<std::int64_t> days;
  for (const auto& v : loc.visits) {
    const auto prof = overlap_profile(v.start, v.end, off);
    for (int h = 0; h < 24; ++h) {
      if (prof[h] > 0 && dummy_night_hour(h) == night) {
        days.insert(local_day(v.start, off));
        break;
      }
    }
  }
  return static_cast<int>(days.size());
}
}  // namespace detail

/// Home: most visit-days during 18:00-07:59 (most visits overall if nothing
/// was seen at night). Work: most visit-days during 08:00-17:59 among the
/// other locations. Ties go to the smaller location id.
inline DummyPrimaries dummy_primaries(const DeviceActivityData& device, std::int64_t utc_offset_s = 0) {
  if (device.locations.empty()) throw internal_error("device " + device.device_id + " has no locations");
  DummyPrimaries out;
  int best = -1;
  for (const auto& loc : device.locations) {
    const int n = detail::visit_days_in(loc, true, utc_offset_s);
    if (n > best || (n == best && loc.location_id < out.home_location_id)) {
      best = n;
      out.home_location_id = loc.location_id;
    }
  }
  if (best == 0) {
    std::size_t most = 0;
    for (const auto& loc : device.locations) {
      if (loc.visits.size() > most || (loc.visits.size() == most && loc.location_id < out.home_location_id)) {
        most = loc.visits.size();
        out.home_location_id = loc.location_id;
      }
    }
  }
  best = 0;
  for (const auto& loc : device.locations) {
    if (loc.location_id == out.home_location_id) continue;
    const int n = detail::visit_days_in(loc, false, utc_offset_s);
    if (n > best || (n == best && n > 0 && loc.location_id < *out.work_location_id)) {
      best = n;
      out.work_location_id = loc.location_id;
    }
  }
  return out;
}

/// Most frequented location per hour, merged into activities. Hours nobody
/// observed repeat the previous hour's location; midnight starts at home.
inline DailyPlan dummy_schedule(const DeviceActivityData& device, const DummyPrimaries& primaries,
                                const HourlyVisitTable& table) {
  std::array<int, 24> slot{};
  int prev = primaries.home_location_id;
  for (int h = 0; h < 24; ++h) {
    int best = -1, best_n = 0;
    for (const auto& [id, row] : table.counts) {
      if (row[h] > best_n) {
        best_n = row[h];
        best = id;
      }
    }
    slot[h] = best_n > 0 ? best : prev;
    prev = slot[h];
  }
  DailyPlan plan;
  plan.device_id = device.device_id;
  plan.sim_day = 0;
  for (int h = 0; h < 24; ++h) {
    if (!plan.entries.empty() && plan.entries.back().location_id == slot[h]) {
      plan.entries.back().end_s = (h + 1) * kSecondsPerHour;
      continue;
    }
    const ActivityLocation* loc = device.find(slot[h]);
    if (!loc) throw internal_error("dummy schedule references unknown location");
    PlanEntry e;
    e.type = slot[h] == primaries.home_location_id ? ActivityType::Home
             : primaries.work_location_id && slot[h] == *primaries.work_location_id ? ActivityType::Work
                                                                                     : ActivityType::Other;
    e.start_s = h * kSecondsPerHour;
    e.end_s = (h + 1) * kSecondsPerHour;
    e.location_id = slot[h];
    e.lat = loc->lat;
    e.lon = loc->lon;
    plan.entries.push_back(e);
  }
  return plan;
}

inline std::vector<DailyPlan> dummy_plans(const std::vector<DeviceActivityData>& devices, std::int64_t utc_offset_s = 0,
                                          unsigned workers = 1) {
  std::vector<DailyPlan> out(devices.size());
  parallel_for(devices.size(), workers, [&](std::size_t i) {
    const auto prim = dummy_primaries(devices[i], utc_offset_s);
    out[i] = dummy_schedule(devices[i], prim, hourly_visit_table(devices[i], utc_offset_s));
  });
  return out;
}

}  // namespace mad4ag
