#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mad4ag/activity.hpp"
#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"
#include "mad4ag/ingestion.hpp"

namespace mad4ag {

struct HourlyWeights {
  std::array<double, 24> w{};
  ActivityType kind = ActivityType::Home;
};

/// Participant-hours per activity type and clock hour over the whole survey.
struct ParticipationTable {
  std::array<std::array<double, 24>, 3> hours{};

  double total(int h) const noexcept { return hours[0][h] + hours[1][h] + hours[2][h]; }
  double share(ActivityType t, int h) const noexcept {
    const double tot = total(h);
    return tot > 0 ? hours[static_cast<int>(t)][h] / tot : 0.0;
  }
};

inline ParticipationTable participation(std::span<const SurveyDiary> survey) {
  ParticipationTable t;
  for (const auto& d : survey) {
    for (const auto& a : d.activities) {
      const auto prof = overlap_profile(a.start_s, a.end_s);
      for (int h = 0; h < 24; ++h) t.hours[static_cast<int>(a.type)][h] += prof[h];
    }
  }
  return t;
}

/// Longest run of consecutive clock hours (wrapping past midnight) whose home
/// share exceeds `threshold`. Ties go to the run starting earliest in the day.
inline ClockInterval nighttime_window(std::span<const SurveyDiary> survey, double threshold = 0.8) {
  if (survey.empty()) throw data_error("survey is empty");
  const auto table = participation(survey);
  std::array<bool, 24> above{};
  int count = 0;
  for (int h = 0; h < 24; ++h) {
    above[h] = table.share(ActivityType::Home, h) > threshold;
    count += above[h];
  }
  if (count == 0) throw data_error("no clock hour has a home share above " + csv::fmt(threshold));
  if (count == 24) return {0, kSecondsPerDay};
  int best_start = -1, best_len = 0;
  for (int h = 0; h < 24; ++h) {
    if (!above[h] || above[(h + 23) % 24]) continue;  // run starts here
    int len = 0;
    while (above[(h + len) % 24]) ++len;
    if (len > best_len || (len == best_len && h < best_start)) {
      best_len = len;
      best_start = h;
    }
  }
  return {best_start * kSecondsPerHour, ((best_start + best_len) % 24) * kSecondsPerHour};
}

/// w[h] = participant-hours in `kind` during hour h over participant-hours in
/// any activity during hour h. Home weights are zeroed outside `night`.
inline HourlyWeights derive_weights(std::span<const SurveyDiary> survey, ActivityType kind,
                                    std::optional<ClockInterval> night = std::nullopt) {
  if (survey.empty()) throw data_error("survey is empty");
  const auto table = participation(survey);
  HourlyWeights out;
  out.kind = kind;
  for (int h = 0; h < 24; ++h) out.w[h] = table.share(kind, h);
  if (kind == ActivityType::Home && night)
    for (int h = 0; h < 24; ++h)
      if (!night->contains_hour(h)) out.w[h] = 0.0;
  return out;
}

inline HourlyWeights derive_home_weights(std::span<const SurveyDiary> survey, double home_share_threshold = 0.8) {
  return derive_weights(survey, ActivityType::Home, nighttime_window(survey, home_share_threshold));
}

/// Sum over visits and clock hours of weight x hours spent in that hour.
inline double score_location(const ActivityLocation& loc, const HourlyWeights& w, std::int64_t utc_offset_s = 0) {
  double s = 0.0;
  for (const auto& v : loc.visits) {
    const auto prof = overlap_profile(v.start, v.end, utc_offset_s);
    for (int h = 0; h < 24; ++h) s += w.w[h] * prof[h];
  }
  return s;
}

/// Distinct local days (by visit start) on which the location was visited
/// during the nighttime window.
inline std::size_t nighttime_visit_days(const ActivityLocation& loc, const ClockInterval& night,
                                        std::int64_t utc_offset_s = 0) {
  std::set<std::int64_t> days;
  for (const auto& v : loc.visits) {
    const auto prof = overlap_profile(v.start, v.end, utc_offset_s);
    bool at_night = false;
    for (int h = 0; h < 24 && !at_night; ++h) at_night = prof[h] > 0 && night.contains_hour(h);
    if (at_night) days.insert(local_day(v.start, utc_offset_s));
  }
  return days.size();
}

struct PrimaryParams {
  double home_score_min = 10.0;
  double work_score_min = 30.0;
  std::size_t night_visit_min = 3;
  double home_share_threshold = 0.8;
  std::int64_t utc_offset_s = 0;
};

struct ScoredLocation {
  int location_id = -1;
  double score = 0.0;
};

struct PrimaryAssignment {
  std::string device_id;
  int home_location_id = -1;
  double home_score = 0.0;
  std::optional<int> work_location_id;
  std::optional<double> work_score;
};

namespace detail {
// Higher score, then more visits, then smaller id.
inline bool better(double score, std::size_t visits, int id, double best_score, std::size_t best_visits, int best_id) {
  if (score != best_score) return score > best_score;
  if (visits != best_visits) return visits > best_visits;
  return id < best_id;
}
}  // namespace detail

inline std::optional<ScoredLocation> infer_home(const DeviceActivityData& device, const HourlyWeights& w_home,
                                                const ClockInterval& night, const PrimaryParams& p = {}) {
  std::optional<ScoredLocation> best;
  std::size_t best_visits = 0;
  for (const auto& loc : device.locations) {
    if (nighttime_visit_days(loc, night, p.utc_offset_s) < p.night_visit_min) continue;
    const double s = score_location(loc, w_home, p.utc_offset_s);
    if (!(s > p.home_score_min)) continue;
    if (!best || detail::better(s, loc.visits.size(), loc.location_id, best->score, best_visits, best->location_id)) {
      best = ScoredLocation{loc.location_id, s};
      best_visits = loc.visits.size();
    }
  }
  return best;
}

/// Work candidates are the non-home locations inside the home's activity cluster.
inline std::optional<ScoredLocation> infer_work(const DeviceActivityData& device, const HourlyWeights& w_work,
                                                int home_location_id, const PrimaryParams& p = {}) {
  const ActivityLocation* home = device.find(home_location_id);
  std::optional<ScoredLocation> best;
  std::size_t best_visits = 0;
  for (const auto& loc : device.locations) {
    if (loc.location_id == home_location_id) continue;
    if (home && loc.cluster_id != home->cluster_id) continue;
    const double s = score_location(loc, w_work, p.utc_offset_s);
    if (!(s >= p.work_score_min)) continue;
    if (!best || detail::better(s, loc.visits.size(), loc.location_id, best->score, best_visits, best->location_id)) {
      best = ScoredLocation{loc.location_id, s};
      best_visits = loc.visits.size();
    }
  }
  return best;
}

struct PrimaryModel {
  ClockInterval night;
  HourlyWeights home;
  HourlyWeights work;
};

inline PrimaryModel build_primary_model(std::span<const SurveyDiary> survey, const PrimaryParams& p = {}) {
  PrimaryModel m;
  m.night = nighttime_window(survey, p.home_share_threshold);
  m.home = derive_weights(survey, ActivityType::Home, m.night);
  m.work = derive_weights(survey, ActivityType::Work);
  return m;
}

/// Devices without an inferable home are dropped.
inline std::vector<PrimaryAssignment> infer_primaries(const std::vector<DeviceActivityData>& devices,
                                                      const PrimaryModel& model, const PrimaryParams& p = {},
                                                      unsigned workers = 1) {
  std::vector<std::optional<PrimaryAssignment>> slots(devices.size());
  parallel_for(devices.size(), workers, [&](std::size_t i) {
    const auto home = infer_home(devices[i], model.home, model.night, p);
    if (!home) return;
    PrimaryAssignment a;
    a.device_id = devices[i].device_id;
    a.home_location_id = home->location_id;
    a.home_score = home->score;
    if (const auto work = infer_work(devices[i], model.work, home->location_id, p)) {
      a.work_location_id = work->location_id;
      a.work_score = work->score;
    }
    slots[i] = std::move(a);
  });
  std::vector<PrimaryAssignment> out;
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  return out;
}

inline void write_primaries(const std::filesystem::path& path, std::span<const PrimaryAssignment> rows) {
  csv::Writer w({"device_id", "home_location_id", "home_score", "work_location_id", "work_score"});
  for (const auto& a : rows)
    w.add(a.device_id, a.home_location_id, a.home_score,
          a.work_location_id ? std::to_string(*a.work_location_id) : std::string(),
          a.work_score ? csv::fmt(*a.work_score) : std::string());
  w.save(path);
}

inline std::vector<PrimaryAssignment> read_primaries(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  csv::require_columns(t, {"device_id", "home_location_id", "home_score", "work_location_id", "work_score"}, path.string());
  const int c_dev = t.column("device_id"), c_h = t.column("home_location_id"), c_hs = t.column("home_score"),
            c_w = t.column("work_location_id"), c_ws = t.column("work_score");
  std::vector<PrimaryAssignment> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    PrimaryAssignment a;
    std::int64_t h = 0;
    if (row.size() < 5 || !csv::to_int(row[c_h], h) || !csv::to_double(row[c_hs], a.home_score))
      throw data_error(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": malformed primary row");
    a.device_id = row[c_dev];
    a.home_location_id = static_cast<int>(h);
    std::int64_t w = 0;
    double ws = 0;
    if (!row[c_w].empty()) {
      if (!csv::to_int(row[c_w], w) || !csv::to_double(row[c_ws], ws))
        throw data_error(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": malformed work columns");
      a.work_location_id = static_cast<int>(w);
      a.work_score = ws;
    }
    out.push_back(std::move(a));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.device_id < b.device_id; });
  return out;
}

}  // namespace mad4ag
