#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mad4ag/activity.hpp"
#include "mad4ag/core.hpp"
#include "mad4ag/ingestion.hpp"
#include "mad4ag/matching.hpp"
#include "mad4ag/parallel.hpp"
#include "mad4ag/plan.hpp"
#include "mad4ag/primary.hpp"

namespace mad4ag {

struct SecondaryChoice {
  int location_id = -1;
  double f_o = 0.0;
  double d_oh_km = 0.0;
  double p = 0.0;
};

struct SynthesisParams {
  /// Distances below this are raised to it before taking ln(d + 1).
  double guard_km = 0.01;
  /// Legs faster than this between copied times get feasible = false.
  double max_speed_kmh = 150.0;
};

/// p_o proportional to f_o / ln(d_oh + 1) over every location that is neither
/// home nor work. Empty when the device has no such location.
inline std::vector<SecondaryChoice> secondary_probabilities(const DeviceActivityData& device,
                                                            const PrimaryAssignment& primary,
                                                            const SynthesisParams& p = {}) {
  const ActivityLocation* home = device.find(primary.home_location_id);
  if (!home) throw internal_error("device " + device.device_id + " has no home location");
  std::vector<SecondaryChoice> out;
  double total = 0.0;
  for (const auto& loc : device.locations) {
    if (loc.location_id == primary.home_location_id) continue;
    if (primary.work_location_id && loc.location_id == *primary.work_location_id) continue;
    SecondaryChoice c;
    c.location_id = loc.location_id;
    c.f_o = static_cast<double>(loc.visits.size());
    c.d_oh_km = haversine_km(home->point(), loc.point());
    c.p = c.f_o / std::log(std::max(c.d_oh_km, p.guard_km) + 1.0);
    total += c.p;
    out.push_back(c);
  }
  if (total > 0)
    for (auto& c : out) c.p /= total;
  return out;
}

/// `count` independent draws (with replacement) from the choice distribution.
inline std::vector<int> sample_secondary(std::span<const SecondaryChoice> choices, std::size_t count, Rng& rng) {
  std::vector<int> out;
  if (count == 0) return out;
  if (choices.empty()) throw internal_error("secondary sampling without candidate locations");
  std::vector<double> w;
  w.reserve(choices.size());
  for (const auto& c : choices) w.push_back(c.p);
  const DiscreteTable table(w);
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(choices[table.draw(rng)].location_id);
  return out;
}

/// Copies the twin's activity types and times, binding Home and Work to the
/// device's primaries. Other slots consume the sampled secondaries: each takes
/// the remaining sample nearest the last primary placed before it (home when
/// no primary precedes it).
inline DailyPlan assemble_plan(const DeviceActivityData& device, const PrimaryAssignment& primary,
                               const SurveyDiary& twin, std::vector<int> secondaries, int sim_day = 0,
                               const SynthesisParams& p = {}) {
  const ActivityLocation* home = device.find(primary.home_location_id);
  if (!home) throw internal_error("device " + device.device_id + " has no home location");
  const ActivityLocation* work = primary.work_location_id ? device.find(*primary.work_location_id) : nullptr;

  DailyPlan plan;
  plan.device_id = device.device_id;
  plan.sim_day = sim_day;
  const ActivityLocation* anchor = home;
  for (const auto& a : twin.activities) {
    const ActivityLocation* loc = nullptr;
    switch (a.type) {
      case ActivityType::Home: loc = home; anchor = home; break;
      case ActivityType::Work:
        if (!work) throw internal_error("twin diary has Work but device " + device.device_id + " has no workplace");
        loc = work;
        anchor = work;
        break;
      case ActivityType::Other: {
        if (secondaries.empty()) throw internal_error("not enough sampled secondary locations");
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < secondaries.size(); ++i) {
          const ActivityLocation* cand = device.find(secondaries[i]);
          if (!cand) throw internal_error("sampled unknown location " + std::to_string(secondaries[i]));
          const double d = haversine_km(anchor->point(), cand->point());
          if (d < best_d) {
            best_d = d;
            best = i;
          }
        }
        loc = device.find(secondaries[best]);
        secondaries.erase(secondaries.begin() + static_cast<std::ptrdiff_t>(best));
        break;
      }
    }
    PlanEntry e;
    e.type = a.type;
    e.start_s = a.start_s;
    e.end_s = a.end_s;
    e.location_id = loc->location_id;
    e.lat = loc->lat;
    e.lon = loc->lon;
    if (!plan.entries.empty()) {
      const PlanEntry& prev = plan.entries.back();
      const double km = haversine_km(prev.point(), e.point());
      const double gap_h = static_cast<double>(e.start_s - prev.end_s) / kSecondsPerHour;
      e.feasible = km <= p.max_speed_kmh * std::max(gap_h, 0.0) + 1e-9;
    }
    plan.entries.push_back(e);
  }
  return plan;
}

/// Inputs needed to synthesize one device's plans.
struct SynthesisInput {
  const DeviceActivityData* device = nullptr;
  const PrimaryAssignment* primary = nullptr;
};

/// One plan per twin assignment. Secondary draws use a (device, day) seed so
/// that plans are independent of worker count and assignment order.
inline std::vector<DailyPlan> synthesize_plans(const std::vector<DeviceActivityData>& devices,
                                               const std::vector<PrimaryAssignment>& primaries,
                                               std::span<const SurveyDiary> survey,
                                               std::span<const TwinAssignment> twins, RngSeed seed,
                                               const SynthesisParams& p = {}, unsigned workers = 1) {
  std::map<std::string, const DeviceActivityData*> dev_by_id;
  for (const auto& d : devices) dev_by_id[d.device_id] = &d;
  std::map<std::string, const PrimaryAssignment*> prim_by_id;
  for (const auto& a : primaries) prim_by_id[a.device_id] = &a;
  std::map<std::string, const SurveyDiary*> diary_by_id;
  for (const auto& d : survey) diary_by_id[d.participant_id] = &d;

  std::vector<DailyPlan> out(twins.size());
  parallel_for(twins.size(), workers, [&](std::size_t i) {
    const auto& t = twins[i];
    const auto dit = dev_by_id.find(t.device_id);
    const auto pit = prim_by_id.find(t.device_id);
    const auto sit = diary_by_id.find(t.participant_id);
    if (dit == dev_by_id.end() || pit == prim_by_id.end())
      throw data_error("twin assignment for unknown device " + t.device_id);
    if (sit == diary_by_id.end()) throw data_error("twin assignment names unknown participant " + t.participant_id);
    const SurveyDiary& twin = *sit->second;
    const auto choices = secondary_probabilities(*dit->second, *pit->second, p);
    Rng rng(split_seed(seed, "secondary", t.device_id, static_cast<std::uint64_t>(t.sim_day)));
    auto sampled = sample_secondary(choices, twin.count(ActivityType::Other), rng);
    out[i] = assemble_plan(*dit->second, *pit->second, twin, std::move(sampled), t.sim_day, p);
  });
  std::sort(out.begin(), out.end(), [](const DailyPlan& a, const DailyPlan& b) {
    return a.device_id < b.device_id || (a.device_id == b.device_id && a.sim_day < b.sim_day);
  });
  return out;
}

}  // namespace mad4ag
