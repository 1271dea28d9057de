#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"
#include "mad4ag/ingestion.hpp"

namespace mad4ag {

struct WorldSpec {
  int n_zones = 20;
  int n_persons = 500;
  int n_survey = 2000;
  double employment_rate = 0.6;
  double gps_noise_sigma_m = 20.0;
  double interaction_rate = 2.0;  // fixes per hour between 06:30 and 23:30
  double night_rate = 0.25;       // fixes per hour otherwise
  int n_days = 60;
  std::int64_t start_day = days_from_civil({2019, 3, 4});
  std::int64_t utc_offset_s = 3600;
  RngSeed seed{42};

  void validate() const {
    if (n_zones <= 0 || n_persons <= 0 || n_survey <= 0 || n_days <= 0)
      throw config_error("world sizes must be positive");
    if (!(employment_rate >= 0.0 && employment_rate <= 1.0)) throw config_error("employment rate must lie in [0, 1]");
    if (!(gps_noise_sigma_m >= 0.0) || !(interaction_rate > 0.0) || !(night_rate >= 0.0))
      throw config_error("noise must be >= 0 and the interaction rate > 0");
  }
};

struct PersonTruth {
  std::string device_id;
  std::string home_building;
  std::optional<std::string> work_building;
  std::string zone_id;
  std::string archetype;  // employed | not_employed
};

struct World {
  std::vector<Zone> zones;
  std::vector<Building> buildings;
  std::vector<SurveyDiary> survey;
  std::vector<RawFix> fixes;
  std::vector<PersonTruth> truth;
};

namespace synth {

inline constexpr double kBaseLat = 59.30;
inline constexpr double kBaseLon = 18.00;
inline constexpr double kZoneKm = 2.0;
inline constexpr double kBuildingSpacingKm = 0.2;
inline constexpr double kSpeedKmh = 30.0;

struct Person {
  std::size_t zone = 0;
  std::size_t home = 0;  // building index
  std::optional<std::size_t> work;
  std::vector<std::size_t> others;
  std::vector<double> other_weights;
};

struct Act {
  ActivityType type = ActivityType::Home;
  std::size_t building = 0;
  double start_h = 0.0;
  double end_h = 24.0;
};

struct Archetype {
  const char* sequence;
  double p;
};

inline constexpr std::array<Archetype, 5> kEmployedMix = {
    {{"H-W-H", 0.55}, {"H-W-H-O-H", 0.20}, {"H-W-O-H", 0.10}, {"H-O-W-H", 0.05}, {"H", 0.10}}};
inline constexpr std::array<Archetype, 4> kNotEmployedMix = {
    {{"H-O-H", 0.45}, {"H-O-H-O-H", 0.15}, {"H-O-O-H", 0.10}, {"H", 0.30}}};

inline double travel_h(const Building& a, const Building& b) {
  return haversine_km(a.location, b.location) / kSpeedKmh + 5.0 / 60.0;
}

/// Picks among the person's other buildings by distance-decay weight.
inline std::size_t pick_other(const Person& p, Rng& rng) { return p.others[rng.discrete(p.other_weights)]; }

inline std::string pick_archetype(bool employed, Rng& rng) {
  std::vector<double> w;
  if (employed) {
    for (const auto& a : kEmployedMix) w.push_back(a.p);
    return kEmployedMix[rng.discrete(w)].sequence;
  }
  for (const auto& a : kNotEmployedMix) w.push_back(a.p);
  return kNotEmployedMix[rng.discrete(w)].sequence;
}

/// Activity chain with clock times (hours) for one day of one archetype.
/// Returns nullopt when the sampled times do not fit in the day.
inline std::optional<std::vector<Act>> day_chain(const Person& p, const std::vector<Building>& b,
                                                 const std::string& seq, Rng& rng) {
  std::vector<Act> acts;
  const std::size_t H = p.home;
  auto go = [&](ActivityType t, std::size_t where, double dur_h) {
    const double arrive = acts.back().end_h + travel_h(b[acts.back().building], b[where]);
    acts.push_back({t, where, arrive, arrive + dur_h});
  };
  auto leave_home_for = [&](ActivityType t, std::size_t where, double start_h, double dur_h) {
    const double depart = start_h - travel_h(b[H], b[where]);
    acts.push_back({ActivityType::Home, H, 0.0, depart});
    acts.push_back({t, where, start_h, start_h + dur_h});
  };
  auto home_until_end = [&] {
    const double arrive = acts.back().end_h + travel_h(b[acts.back().building], b[H]);
    acts.push_back({ActivityType::Home, H, arrive, 24.0});
  };
  const double work_start = std::clamp(rng.normal(8.0, 0.5), 6.5, 10.0);
  const double work_dur = std::clamp(rng.normal(8.75, 0.5), 7.0, 10.5);

  if (seq == "H") {
    acts.push_back({ActivityType::Home, H, 0.0, 24.0});
  } else if (seq == "H-W-H") {
    leave_home_for(ActivityType::Work, *p.work, work_start, work_dur);
    home_until_end();
  } else if (seq == "H-W-H-O-H") {
    leave_home_for(ActivityType::Work, *p.work, work_start, work_dur);
    go(ActivityType::Home, H, rng.uniform(0.5, 1.5));
    go(ActivityType::Other, pick_other(p, rng), rng.uniform(1.0, 2.0));
    home_until_end();
  } else if (seq == "H-W-O-H") {
    leave_home_for(ActivityType::Work, *p.work, work_start, work_dur);
    go(ActivityType::Other, pick_other(p, rng), rng.uniform(0.75, 1.75));
    home_until_end();
  } else if (seq == "H-O-W-H") {
    leave_home_for(ActivityType::Other, pick_other(p, rng), std::clamp(rng.normal(7.25, 0.3), 6.0, 8.5),
                   rng.uniform(0.5, 1.0));
    go(ActivityType::Work, *p.work, work_dur - 0.75);
    home_until_end();
  } else if (seq == "H-O-H") {
    leave_home_for(ActivityType::Other, pick_other(p, rng), rng.uniform(9.0, 17.0), rng.uniform(1.0, 3.0));
    home_until_end();
  } else if (seq == "H-O-H-O-H") {
    leave_home_for(ActivityType::Other, pick_other(p, rng), rng.uniform(9.0, 12.0), rng.uniform(1.0, 2.0));
    go(ActivityType::Home, H, rng.uniform(1.0, 3.0));
    go(ActivityType::Other, pick_other(p, rng), rng.uniform(1.0, 2.0));
    home_until_end();
  } else if (seq == "H-O-O-H") {
    leave_home_for(ActivityType::Other, pick_other(p, rng), rng.uniform(9.0, 15.0), rng.uniform(1.0, 2.0));
    std::size_t second = pick_other(p, rng);
    for (int tries = 0; tries < 8 && second == acts.back().building; ++tries) second = pick_other(p, rng);
    go(ActivityType::Other, second, rng.uniform(1.0, 2.0));
    home_until_end();
  } else {
    throw internal_error("unknown archetype " + seq);
  }
  if (acts.front().end_h <= 0.25 || acts.back().start_h >= 23.5) return std::nullopt;
  return acts;
}

/// Day chain, falling back to the plainest archetype when times overflow.
inline std::vector<Act> sample_day(const Person& p, const std::vector<Building>& b, bool employed_day, Rng& rng,
                                   std::string* sequence = nullptr) {
  std::string seq = pick_archetype(employed_day, rng);
  auto chain = day_chain(p, b, seq, rng);
  if (!chain) {
    seq = employed_day ? "H-W-H" : "H";
    chain = day_chain(p, b, seq, rng);
  }
  if (!chain) {
    seq = "H";
    chain = day_chain(p, b, seq, rng);
  }
  if (sequence) *sequence = seq;
  return *chain;
}

inline double meters_to_lat(double m) { return km_to_lat_deg(m / 1000.0); }
inline double meters_to_lon(double m, double lat) { return meters_to_lat(m) / std::cos(deg2rad(lat)); }

inline double round6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace synth

/// Builds zones, buildings, the survey, GPS traces and the ground truth.
inline World generate_world(const WorldSpec& spec) {
  using namespace synth;
  spec.validate();
  World w;
  Rng rng(split_seed(spec.seed, "world"));

  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_zones))));
  const double dlat = km_to_lat_deg(kZoneKm);
  const double dlon = dlat / std::cos(deg2rad(kBaseLat));
  const int rows = (spec.n_zones + cols - 1) / cols;
  const double clat = kBaseLat + 0.5 * rows * dlat, clon = kBaseLon + 0.5 * cols * dlon;

  std::vector<std::pair<double, int>> centrality;
  for (int k = 0; k < spec.n_zones; ++k) {
    const int r = k / cols, c = k % cols;
    Zone z;
    char id[16];
    std::snprintf(id, sizeof id, "Z%03d", k);
    z.zone_id = id;
    z.region = Region::Svealand;
    const double lat0 = kBaseLat + r * dlat, lon0 = kBaseLon + c * dlon;
    z.ring = {{lat0, lon0}, {lat0, lon0 + dlon}, {lat0 + dlat, lon0 + dlon}, {lat0 + dlat, lon0}, {lat0, lon0}};
    z.update_bounds();
    z.population = static_cast<double>(700 + rng.below(2001));
    const double rate = std::clamp(spec.employment_rate * rng.uniform(0.85, 1.15), 0.0, 1.0);
    z.employees = std::round(z.population * rate);
    centrality.emplace_back(haversine_km({lat0 + dlat / 2, lon0 + dlon / 2}, {clat, clon}), k);
    w.zones.push_back(std::move(z));
  }
  std::sort(centrality.begin(), centrality.end());
  for (std::size_t i = 0; i < centrality.size(); ++i)
    w.zones[static_cast<std::size_t>(centrality[i].second)].density =
        i < centrality.size() / 2 ? UrbanDensity::High : UrbanDensity::Low;

  // Buildings on a regular grid inside each zone.
  const int per_side = static_cast<int>(std::lround(kZoneKm / kBuildingSpacingKm));
  std::vector<std::vector<std::size_t>> residential(w.zones.size());
  std::vector<std::size_t> workplaces, others;
  for (std::size_t k = 0; k < w.zones.size(); ++k) {
    const auto& z = w.zones[k];
    for (int i = 0; i < per_side; ++i) {
      for (int j = 0; j < per_side; ++j) {
        Building b;
        char id[16];
        std::snprintf(id, sizeof id, "B%06zu", w.buildings.size());
        b.building_id = id;
        b.location = {round6(z.min_lat + (i + 0.5) * dlat / per_side), round6(z.min_lon + (j + 0.5) * dlon / per_side)};
        const double u = rng.uniform();
        b.kind = u < 0.6 ? BuildingKind::Residential : u < 0.8 ? BuildingKind::Workplace : BuildingKind::Other;
        if (i == 0 && j == 0) b.kind = BuildingKind::Residential;
        const std::size_t idx = w.buildings.size();
        if (b.kind == BuildingKind::Residential) residential[k].push_back(idx);
        else if (b.kind == BuildingKind::Workplace) workplaces.push_back(idx);
        else others.push_back(idx);
        w.buildings.push_back(std::move(b));
      }
    }
  }
  if (workplaces.empty() || others.size() < 8) throw internal_error("world too small for the building mix");

  std::vector<double> zone_weight;
  for (const auto& z : w.zones) zone_weight.push_back(z.population);
  const auto& B = w.buildings;

  auto make_person = [&](Rng& r, bool employed) {
    Person p;
    p.zone = r.discrete(zone_weight);
    const auto& res = residential[p.zone];
    p.home = res[r.below(res.size())];
    const GeoPoint home = B[p.home].location;
    if (employed) {
      std::vector<double> wk;
      for (std::size_t c : workplaces) {
        const double d = haversine_km(home, B[c].location);
        wk.push_back(d < 0.3 ? 0.0 : std::exp(-d / 4.0));
      }
      p.work = workplaces[r.discrete(wk)];
    }
    const std::size_t n_other = 3 + r.below(6);
    std::vector<double> wo;
    for (std::size_t c : others) {
      const double d = haversine_km(home, B[c].location);
      const bool near_work = p.work && haversine_km(B[*p.work].location, B[c].location) < 0.3;
      wo.push_back(d < 0.3 || near_work ? 0.0 : std::exp(-d / 2.5));
    }
    while (p.others.size() < n_other) {
      const std::size_t k = r.discrete(wo);
      p.others.push_back(others[k]);
      const double d = haversine_km(home, B[others[k]].location);
      wo[k] = 0.0;
      p.other_weights.push_back(std::exp(-d / 2.5) + 0.05);
    }
    return p;
  };

  // Survey participants: one weekday diary each.
  for (int i = 0; i < spec.n_survey; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "P%05d", i);
    Rng r(split_seed(spec.seed, "survey", id));
    const bool employed = r.bernoulli(spec.employment_rate);
    const Person p = make_person(r, employed);
    const auto chain = sample_day(p, w.buildings, employed, r);
    SurveyDiary d;
    d.participant_id = id;
    d.region = w.zones[p.zone].region;
    d.density = w.zones[p.zone].density;
    d.employed = employed;
    for (std::size_t a = 0; a < chain.size(); ++a) {
      SurveyActivity act;
      act.type = chain[a].type;
      act.start_s = std::clamp<std::int64_t>(std::llround(chain[a].start_h * 3600.0), 0, kSecondsPerDay);
      act.end_s = std::clamp<std::int64_t>(std::llround(chain[a].end_h * 3600.0), 0, kSecondsPerDay);
      if (a > 0) act.trip_km = std::round(haversine_km(B[chain[a - 1].building].location, B[chain[a].building].location) * 1000.0) / 1000.0;
      d.activities.push_back(act);
    }
    bool incomplete = false;
    if (!finalize_diary(d, incomplete)) throw internal_error("generated an invalid diary for " + d.participant_id);
    w.survey.push_back(std::move(d));
  }

  // Devices: traces over n_days, weekends following the non-working mix.
  const double peak = std::max(spec.interaction_rate, spec.night_rate);
  for (int i = 0; i < spec.n_persons; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "D%05d", i);
    Rng r(split_seed(spec.seed, "person", id));
    const bool employed = r.bernoulli(spec.employment_rate);
    const Person p = make_person(r, employed);
    PersonTruth t;
    t.device_id = id;
    t.home_building = B[p.home].building_id;
    if (p.work) t.work_building = B[*p.work].building_id;
    t.zone_id = w.zones[p.zone].zone_id;
    t.archetype = employed ? "employed" : "not_employed";
    w.truth.push_back(t);

    for (int day = 0; day < spec.n_days; ++day) {
      const std::int64_t dayno = spec.start_day + day;
      const bool workday = employed && weekday_of_day(dayno) < 5;
      const auto chain = sample_day(p, w.buildings, workday, r);
      const std::int64_t day_base = dayno * kSecondsPerDay - spec.utc_offset_s;
      double t_h = 0.0;
      std::size_t a = 0;
      for (;;) {
        t_h += r.exponential(peak);
        if (t_h >= 24.0) break;
        const bool active = t_h >= 6.5 && t_h < 23.5;
        if (!r.bernoulli((active ? spec.interaction_rate : spec.night_rate) / peak)) continue;
        while (a + 1 < chain.size() && chain[a + 1].start_h <= t_h) ++a;
        GeoPoint pos;
        if (t_h >= chain[a].start_h && t_h < chain[a].end_h) {
          pos = B[chain[a].building].location;
        } else {  // travelling from chain[a] to chain[a + 1]
          const auto& from = B[chain[a].building].location;
          const auto& to = B[chain[std::min(a + 1, chain.size() - 1)].building].location;
          const double span = chain[std::min(a + 1, chain.size() - 1)].start_h - chain[a].end_h;
          const double f = span > 0 ? std::clamp((t_h - chain[a].end_h) / span, 0.0, 1.0) : 1.0;
          pos = {from.lat + f * (to.lat - from.lat), from.lon + f * (to.lon - from.lon)};
        }
        pos.lat += meters_to_lat(r.normal(0.0, spec.gps_noise_sigma_m));
        pos.lon += meters_to_lon(r.normal(0.0, spec.gps_noise_sigma_m), pos.lat);
        const std::int64_t ts = day_base + static_cast<std::int64_t>(t_h * 3600.0);
        w.fixes.push_back({id, round6(pos.lat), round6(pos.lon), ts});
      }
    }
  }
  return w;
}

/// Keeps each fix independently with probability `factor`.
inline std::vector<RawFix> degrade(const std::vector<RawFix>& fixes, double factor, RngSeed seed) {
  if (!(factor > 0.0 && factor <= 1.0)) throw config_error("sparsity factor must lie in (0, 1]");
  if (factor == 1.0) return fixes;
  Rng rng(split_seed(seed, "degrade"));
  std::vector<RawFix> out;
  out.reserve(static_cast<std::size_t>(static_cast<double>(fixes.size()) * factor) + 16);
  for (const auto& f : fixes)
    if (rng.bernoulli(factor)) out.push_back(f);
  return out;
}

inline void write_truth(const std::filesystem::path& path, const std::vector<PersonTruth>& truth) {
  csv::Writer w({"device_id", "home_building", "work_building", "zone_id", "archetype"});
  for (const auto& t : truth) w.add(t.device_id, t.home_building, t.work_building.value_or(""), t.zone_id, t.archetype);
  w.save(path);
}

inline std::vector<PersonTruth> read_truth(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  csv::require_columns(t, {"device_id", "home_building", "work_building", "zone_id", "archetype"}, path.string());
  const int c_d = t.column("device_id"), c_h = t.column("home_building"), c_w = t.column("work_building"),
            c_z = t.column("zone_id"), c_a = t.column("archetype");
  std::vector<PersonTruth> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() < 5) throw data_error(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": short row");
    PersonTruth p{row[c_d], row[c_h], std::nullopt, row[c_z], row[c_a]};
    if (!row[c_w].empty()) p.work_building = row[c_w];
    out.push_back(std::move(p));
  }
  return out;
}

/// Writes zones.csv, buildings.csv, survey.csv, fixes.csv and truth.csv.
inline void write_world(const std::filesystem::path& dir, const World& w) {
  std::filesystem::create_directories(dir);
  write_zones(dir / "zones.csv", w.zones);
  write_buildings(dir / "buildings.csv", w.buildings);
  write_survey(dir / "survey.csv", w.survey);
  write_fixes(dir / "fixes.csv", w.fixes);
  write_truth(dir / "truth.csv", w.truth);
}

}  // namespace mad4ag
