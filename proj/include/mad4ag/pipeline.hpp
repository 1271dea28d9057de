#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mad4ag/activity.hpp"
#include "mad4ag/config.hpp"
#include "mad4ag/core.hpp"
#include "mad4ag/debias.hpp"
#include "mad4ag/dummy.hpp"
#include "mad4ag/evaluation.hpp"
#include "mad4ag/ingestion.hpp"
#include "mad4ag/matching.hpp"
#include "mad4ag/plan.hpp"
#include "mad4ag/primary.hpp"
#include "mad4ag/stops.hpp"
#include "mad4ag/synthesis.hpp"
#include "mad4ag/synthworld.hpp"

namespace mad4ag {

inline Error prerequisite_error(const std::string& msg) { return {ErrorKind::Prerequisite, msg}; }

inline int exit_code(ErrorKind k) noexcept {
  switch (k) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Prerequisite: return 4;
    case ErrorKind::Internal: return 1;
  }
  return 1;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_digest(const std::filesystem::path& p) { return hex64(fnv1a64(csv::read_file(p))); }

/// Shared state for one CLI invocation.
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, unsigned workers) : cfg_(std::move(cfg)), workers_(std::max(1u, workers)) { validate(); }

  /// Parses every typed key so a bad value is a config error before any input is read.
  void validate() const {
    (void)seed();
    (void)cfg_.flag("generate_world");
    (void)cfg_.flag("census_bounds");
    world_spec().validate();
    const double f = cfg_.number("sparsity_factor");
    if (!(f > 0.0 && f <= 1.0)) throw config_error("sparsity_factor must lie in (0, 1]");
    (void)stop_params();
    (void)clustering_params();
    (void)filter_params();
    (void)primary_params();
    (void)cfg_.number("ipf_tol");
    (void)cfg_.integer("ipf_max_iter");
    (void)parse_trim_variant(cfg_.str("trim_variant"));
    (void)match_params({});
    (void)n_sim_days();
    (void)synthesis_params();
  }

  const PipelineConfig& config() const noexcept { return cfg_; }
  std::filesystem::path in(const std::string& name) const { return std::filesystem::path(cfg_.str("input_dir")) / name; }
  std::filesystem::path out(const std::string& name) const { return std::filesystem::path(cfg_.str("out_dir")) / name; }

  static const std::vector<std::string>& stages() {
    static const std::vector<std::string> s = {"gen-world", "detect-stops", "cluster", "infer-primary", "debias",
                                               "match",     "synthesize",   "baseline", "evaluate"};
    return s;
  }

  void run(const std::string& stage) {
    if (stage == "all") {
      if (cfg_.flag("generate_world")) run("gen-world");
      for (const auto& s : stages())
        if (s != "gen-world") run(s);
      return;
    }
    if (stage == "gen-world") gen_world();
    else if (stage == "detect-stops") detect_stops_stage();
    else if (stage == "cluster") cluster_stage();
    else if (stage == "infer-primary") infer_primary_stage();
    else if (stage == "debias") debias_stage();
    else if (stage == "match") match_stage();
    else if (stage == "synthesize") synthesize_stage();
    else if (stage == "baseline") baseline_stage();
    else if (stage == "evaluate") evaluate_stage();
    else throw config_error("unknown subcommand '" + stage + "'");
  }

  // ---- typed parameters --------------------------------------------------

  std::int64_t utc_offset_s() const {
    return static_cast<std::int64_t>(std::llround(cfg_.number("utc_offset_hours") * 3600.0));
  }
  RngSeed seed() const { return {static_cast<std::uint64_t>(cfg_.integer("seed"))}; }

  WorldSpec world_spec() const {
    WorldSpec w;
    w.n_zones = static_cast<int>(cfg_.integer("world_n_zones"));
    w.n_persons = static_cast<int>(cfg_.integer("world_n_persons"));
    w.n_survey = static_cast<int>(cfg_.integer("world_n_survey"));
    w.employment_rate = cfg_.number("world_employment_rate");
    w.gps_noise_sigma_m = cfg_.number("world_noise_m");
    w.interaction_rate = cfg_.number("world_rate_per_h");
    w.night_rate = cfg_.number("world_night_rate_per_h");
    w.n_days = static_cast<int>(cfg_.integer("world_n_days"));
    w.start_day = parse_date_day(cfg_.str("world_start_date"));
    w.utc_offset_s = utc_offset_s();
    w.seed = seed();
    return w;
  }

  StopParams stop_params() const {
    StopParams p;
    p.r1_m = cfg_.number("stop_r1_m");
    p.r2_m = cfg_.number("stop_r2_m");
    p.t_min_s = cfg_.integer("stop_t_min_s");
    p.t_max_s = cfg_.integer("stop_t_max_s");
    p.validate();
    return p;
  }

  ClusteringParams clustering_params() const {
    ClusteringParams p;
    p.activity_space = {cfg_.number("cluster_eps_km") * 1000.0, static_cast<std::size_t>(cfg_.integer("cluster_min_pts"))};
    p.location = {cfg_.number("location_eps_m"), static_cast<std::size_t>(cfg_.integer("location_min_pts"))};
    p.snap_radius_m = cfg_.number("snap_radius_m");
    p.activity_space.validate();
    p.location.validate();
    return p;
  }

  FilterParams filter_params() const {
    FilterParams p;
    p.max_visit_s = static_cast<std::int64_t>(std::llround(cfg_.number("max_visit_hours") * 3600.0));
    const auto& poly = cfg_.str("study_polygon");
    if (poly == "default") p.study_area = parse_wkt_polygon(default_study_polygon());
    else if (poly != "none" && !poly.empty()) p.study_area = parse_wkt_polygon(poly);
    const auto& hol = cfg_.str("holidays");
    std::vector<std::string> dates;
    if (hol == "default") dates = default_holidays();
    else if (hol != "none" && !hol.empty()) {
      std::string_view s = hol;
      while (!s.empty()) {
        const auto comma = s.find(',');
        std::string d(s.substr(0, comma));
        std::erase_if(d, [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
        if (!d.empty()) dates.push_back(d);
        s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
      }
    }
    for (const auto& d : dates) {
      try {
        p.holidays.insert(parse_date_day(d));
      } catch (const Error&) {
        throw config_error("holidays: invalid date '" + d + "'");
      }
    }
    p.min_active_days = static_cast<int>(cfg_.integer("min_active_days"));
    p.min_locations = static_cast<std::size_t>(cfg_.integer("min_locations"));
    p.utc_offset_s = utc_offset_s();
    return p;
  }

  PrimaryParams primary_params() const {
    PrimaryParams p;
    p.home_score_min = cfg_.number("home_score_min");
    p.work_score_min = cfg_.number("work_score_min");
    p.night_visit_min = static_cast<std::size_t>(cfg_.integer("night_visit_min"));
    p.home_share_threshold = cfg_.number("home_share_threshold");
    p.utc_offset_s = utc_offset_s();
    return p;
  }

  MatchParams match_params(std::span<const SurveyDiary> survey) const {
    MatchParams p;
    p.min_group = static_cast<std::size_t>(cfg_.integer("min_group"));
    const auto mode = cfg_.str("threshold_mode");
    if (mode == "fixed") {
      const auto t = cfg_.numbers("thresholds");
      if (t.size() != 2) throw config_error("thresholds needs two values: trip_km,commute_km");
      p.thresholds = {t[0], t[1]};
    } else if (mode == "survey_median") {
      if (!survey.empty()) p.thresholds = survey_median_thresholds(survey);
    } else {
      throw config_error("threshold_mode must be fixed or survey_median");
    }
    p.tol = cfg_.number("match_tol");
    p.max_iter = static_cast<int>(cfg_.integer("match_max_iter"));
    p.commute_marginal = parse_commute_marginal(cfg_.str("commute_marginal"));
    return p;
  }

  int n_sim_days() const {
    const auto n = cfg_.integer("n_sim_days");
    if (n < 1) throw config_error("n_sim_days must be >= 1");
    return static_cast<int>(n);
  }

  SynthesisParams synthesis_params() const {
    SynthesisParams p;
    p.guard_km = cfg_.number("secondary_guard_km");
    p.max_speed_kmh = cfg_.number("max_speed_kmh");
    if (!(p.guard_km > 0)) throw config_error("secondary_guard_km must be positive");
    return p;
  }

  // ---- stages ------------------------------------------------------------

  void gen_world() {
    const WorldSpec spec = world_spec();
    World w = generate_world(spec);
    const double factor = cfg_.number("sparsity_factor");
    w.fixes = degrade(w.fixes, factor, seed());
    write_world(cfg_.str("input_dir"), w);
    record("gen-world", {},
           {{in("zones.csv"), w.zones.size()},
            {in("buildings.csv"), w.buildings.size()},
            {in("survey.csv"), w.survey.size()},
            {in("fixes.csv"), w.fixes.size()},
            {in("truth.csv"), w.truth.size()}});
  }

  void detect_stops_stage() {
    const auto fixes_path = require_input("fixes.csv");
    LoadReport rep;
    const FixStream stream = load_fixes(fixes_path, &rep);
    const auto stops = detect_all_stops(stream, stop_params(), workers_);
    write_stops(out("stops.csv"), stops);
    record("detect-stops", {fixes_path}, {{out("stops.csv"), stops.size()}},
           {{"fixes", rep.rows}, {"fixes_malformed", rep.malformed}, {"fixes_duplicate", rep.duplicates},
            {"devices", stream.device_count()}});
  }

  void cluster_stage() {
    const auto stops_path = require_artifact("stops.csv", "detect-stops");
    const auto buildings_path = require_input("buildings.csv");
    const auto stops = read_stops(stops_path);
    const auto buildings = load_buildings(buildings_path);
    const auto all = build_all_activity_data(stops, buildings, clustering_params(), utc_offset_s(), workers_);
    FilterReport rep;
    const auto kept = apply_filters(all, filter_params(), &rep);
    write_activity_data(out("activity_locations.csv"), out("visits.csv"), kept);
    std::size_t n_loc = 0, n_vis = 0;
    for (const auto& d : kept) {
      n_loc += d.locations.size();
      for (const auto& l : d.locations) n_vis += l.visits.size();
    }
    record("cluster", {stops_path, buildings_path},
           {{out("activity_locations.csv"), n_loc}, {out("visits.csv"), n_vis}},
           {{"devices_in", rep.devices_in},
            {"devices_out", rep.devices_out},
            {"visits_too_long", rep.visits_too_long},
            {"visits_outside_area", rep.visits_outside_area},
            {"visits_weekend_holiday", rep.visits_weekend_holiday},
            {"devices_few_active_days", rep.devices_few_active_days},
            {"devices_few_locations", rep.devices_few_locations}});
  }

  std::vector<DeviceActivityData> load_activity() const {
    const auto l = require_artifact("activity_locations.csv", "cluster");
    const auto v = require_artifact("visits.csv", "cluster");
    return read_activity_data(l, v, utc_offset_s());
  }

  std::vector<SurveyDiary> load_survey_input() const { return load_survey(require_input("survey.csv")); }

  void infer_primary_stage() {
    const auto devices = load_activity();
    const auto survey_path = require_input("survey.csv");
    const auto survey = load_survey(survey_path);
    const auto p = primary_params();
    const auto model = build_primary_model(survey, p);
    const auto rows = infer_primaries(devices, model, p, workers_);
    write_primaries(out("primary.csv"), rows);
    std::size_t with_work = 0;
    for (const auto& r : rows) with_work += r.work_location_id.has_value();
    record("infer-primary", {out("activity_locations.csv"), out("visits.csv"), survey_path},
           {{out("primary.csv"), rows.size()}},
           {{"devices_in", devices.size()},
            {"with_work", with_work},
            {"night_start_s", model.night.start_s},
            {"night_end_s", model.night.end_s}});
  }

  /// Devices with an inferred home, their home zone and employment flag.
  std::vector<SampleMember> sample_members(const std::vector<DeviceActivityData>& devices,
                                           const std::vector<PrimaryAssignment>& primaries,
                                           std::span<const Zone> zones) const {
    std::map<std::string, const DeviceActivityData*> by_id;
    for (const auto& d : devices) by_id[d.device_id] = &d;
    std::vector<SampleMember> out;
    for (const auto& a : primaries) {
      auto it = by_id.find(a.device_id);
      if (it == by_id.end()) throw data_error("primary.csv names unknown device " + a.device_id);
      const ActivityLocation* home = it->second->find(a.home_location_id);
      if (!home) throw data_error("primary.csv: unknown home location for " + a.device_id);
      const Zone* z = zone_of(home->point(), zones);
      out.push_back({a.device_id, z ? z->zone_id : std::string(), a.work_location_id.has_value()});
    }
    return out;
  }

  std::vector<Zone> load_zones_input() const {
    ZoneLoadOptions opt;
    opt.census_bounds = cfg_.flag("census_bounds");
    return load_zones(require_input("zones.csv"), opt);
  }

  void debias_stage() {
    const auto primaries = read_primaries(require_artifact("primary.csv", "infer-primary"));
    const auto devices = load_activity();
    const auto zones = load_zones_input();
    const auto members = sample_members(devices, primaries, zones);
    IpwReport ipw;
    auto w = initial_weights(members, zones, &ipw);
    IpfParams ip;
    ip.tol = cfg_.number("ipf_tol");
    ip.max_iter = static_cast<int>(cfg_.integer("ipf_max_iter"));
    IpfReport ipf;
    w = ipf_employment(std::move(w), zones, ip, &ipf);
    TrimResult trimmed;
    if (!w.empty()) trimmed = trim_weights(std::move(w), parse_trim_variant(cfg_.str("trim_variant")));
    write_weights(out("weights.csv"), trimmed.weights);
    record("debias", {out("primary.csv"), in("zones.csv")}, {{out("weights.csv"), trimmed.weights.size()}},
           {{"members_without_zone", ipw.members_without_zone},
            {"zones_without_sample", ipw.zones_without_sample.size()},
            {"degenerate_zones", ipf.degenerate_zones.size()},
            {"unconverged_zones", ipf.unconverged_zones.size()},
            {"ipf_max_iterations", ipf.max_iterations},
            {"trim_w0", trimmed.w0}});
  }

  void match_stage() {
    const auto weights = read_weights(require_artifact("weights.csv", "debias"));
    const auto primaries = read_primaries(require_artifact("primary.csv", "infer-primary"));
    const auto devices = load_activity();
    const auto zones = load_zones_input();
    const auto survey = load_survey_input();
    const auto p = match_params(survey);

    std::map<std::string, const DeviceActivityData*> dev_by_id;
    for (const auto& d : devices) dev_by_id[d.device_id] = &d;
    std::map<std::string, const PrimaryAssignment*> prim_by_id;
    for (const auto& a : primaries) prim_by_id[a.device_id] = &a;
    std::map<std::string, const Zone*> zone_by_id;
    for (const auto& z : zones) zone_by_id[z.zone_id] = &z;

    std::vector<DeviceTraveller> travellers;
    for (const auto& w : weights) {
      const auto d = dev_by_id.find(w.device_id);
      const auto a = prim_by_id.find(w.device_id);
      const auto z = zone_by_id.find(w.zone_id);
      if (d == dev_by_id.end() || a == prim_by_id.end() || z == zone_by_id.end())
        throw data_error("weights.csv row for " + w.device_id + " has no matching device, primary or zone");
      travellers.push_back(device_traveller(*d->second, *a->second, *z->second, p.thresholds));
    }
    const SurveyGrouping grouping(survey_travellers(survey, p.thresholds), p.min_group);
    MatchReport rep;
    const auto twins = match_twins(travellers, grouping, p, seed(), n_sim_days(), &rep);
    write_twins(out("twins.csv"), twins);
    record("match", {out("weights.csv"), out("primary.csv"), in("survey.csv")}, {{out("twins.csv"), twins.size()}},
           {{"groups_used", rep.groups_used},
            {"tables_unconverged", rep.tables_unconverged},
            {"repair_swaps", rep.assignment.swaps},
            {"unrepairable", rep.assignment.unrepairable},
            {"trip_threshold_km", p.thresholds.trip_km},
            {"commute_threshold_km", p.thresholds.commute_km}});
  }

  void synthesize_stage() {
    const auto twins = read_twins(require_artifact("twins.csv", "match"));
    const auto primaries = read_primaries(require_artifact("primary.csv", "infer-primary"));
    const auto devices = load_activity();
    const auto survey = load_survey_input();
    const auto plans = synthesize_plans(devices, primaries, survey, twins, seed(), synthesis_params(), workers_);
    write_plans(out("plans.csv"), plans);
    std::size_t entries = 0, infeasible = 0;
    for (const auto& pl : plans)
      for (const auto& e : pl.entries) {
        ++entries;
        infeasible += !e.feasible;
      }
    record("synthesize", {out("twins.csv")}, {{out("plans.csv"), entries}},
           {{"plans", plans.size()}, {"infeasible_entries", infeasible}});
  }

  void baseline_stage() {
    const auto devices = load_activity();
    const auto plans = dummy_plans(devices, utc_offset_s(), workers_);
    write_plans(out("dummy_plans.csv"), plans);
    std::size_t entries = 0;
    for (const auto& pl : plans) entries += pl.entries.size();
    record("baseline", {out("activity_locations.csv"), out("visits.csv")}, {{out("dummy_plans.csv"), entries}},
           {{"plans", plans.size()}});
  }

  void evaluate_stage() {
    const auto plans = read_plans(require_artifact("plans.csv", "synthesize"));
    const auto dummy = read_plans(require_artifact("dummy_plans.csv", "baseline"));
    const auto weights = read_weights(require_artifact("weights.csv", "debias"));
    const auto survey = load_survey_input();
    const auto zones = load_zones_input();
    WeightMap wmap;
    for (const auto& w : weights) wmap[w.device_id] = w.w;

    EvalReport r;
    r.models.push_back({"survey", sequence_shares(survey), hourly_participation(survey), std::nullopt});
    r.models.push_back({"generative", sequence_shares(plans, &wmap), hourly_participation(plans, &wmap),
                        trip_stats(plans, &wmap)});
    r.models.push_back({"dummy", sequence_shares(dummy), hourly_participation(dummy), trip_stats(dummy)});
    std::vector<std::filesystem::path> inputs = {out("plans.csv"), out("dummy_plans.csv"), out("weights.csv")};
    if (const auto& cmp = cfg_.str("comparison_plans"); !cmp.empty()) {
      if (!std::filesystem::exists(cmp)) throw data_error("comparison_plans file not found: " + cmp);
      const auto other = read_plans(cmp);
      r.models.push_back({"comparison", sequence_shares(other), hourly_participation(other), trip_stats(other)});
      inputs.push_back(cmp);
    }
    compare_models(r);

    std::map<int, std::vector<DailyPlan>> by_day;
    for (const auto& p : plans) by_day[p.sim_day].push_back(p);
    std::vector<HourlyCurves> day_curves;
    for (const auto& [d, v] : by_day) day_curves.push_back(hourly_participation(v, &wmap));
    for (std::size_t i = 0; i < day_curves.size(); ++i)
      for (std::size_t j = i + 1; j < day_curves.size(); ++j) r.day_to_day_hourly_js.push_back(hourly_js(day_curves[i], day_curves[j]));

    std::map<std::string, double> homes;
    for (const auto& w : weights) homes[w.zone_id] += 1.0;
    std::vector<double> counts, pops;
    for (const auto& z : zones) {
      counts.push_back(homes.count(z.zone_id) ? homes[z.zone_id] : 0.0);
      pops.push_back(z.population);
    }
    std::string spearman_note = "ok";
    try {
      r.spearman_home_population = spearman(counts, pops);
    } catch (const Error& e) {
      spearman_note = e.what();
    }
    write_report(out("report.json"), out("report.csv"), r);
    record("evaluate", inputs, {{out("report.json"), r.models.size()}, {out("report.csv"), r.sequence_js.size()}},
           {{"spearman", spearman_note}});
  }

 private:
  std::filesystem::path require_input(const std::string& name) const {
    const auto p = in(name);
    if (!std::filesystem::exists(p))
      throw prerequisite_error("missing input " + p.string() + " (provide it or run gen-world first)");
    return p;
  }

  std::filesystem::path require_artifact(const std::string& name, const std::string& stage) const {
    const auto p = out(name);
    if (!std::filesystem::exists(p))
      throw prerequisite_error("missing " + p.string() + ": run the '" + stage + "' stage first");
    return p;
  }

  /// Updates manifest.json with this stage's input digests and output rows.
  void record(const std::string& stage, const std::vector<std::filesystem::path>& inputs,
              const std::vector<std::pair<std::filesystem::path, std::size_t>>& outputs,
              const nlohmann::json& info = nlohmann::json::object()) const {
    const auto path = out("manifest.json");
    nlohmann::json m = nlohmann::json::object();
    if (std::filesystem::exists(path)) {
      try {
        m = nlohmann::json::parse(csv::read_file(path));
      } catch (const nlohmann::json::exception&) {
        m = nlohmann::json::object();
      }
    }
    m["config_hash"] = hex64(cfg_.hash());
    m["seed"] = cfg_.integer("seed");
    nlohmann::json s = nlohmann::json::object();
    nlohmann::json in_j = nlohmann::json::object();
    for (const auto& p : inputs) in_j[p.filename().string()] = file_digest(p);
    nlohmann::json out_j = nlohmann::json::object();
    for (const auto& [p, rows] : outputs) out_j[p.filename().string()] = {{"digest", file_digest(p)}, {"rows", rows}};
    s["inputs"] = in_j;
    s["outputs"] = out_j;
    s["info"] = info;
    m["stages"][stage] = s;
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw data_error("cannot write " + path.string());
    f << m.dump(2) << '\n';
  }

  PipelineConfig cfg_;
  unsigned workers_;
};

}  // namespace mad4ag
