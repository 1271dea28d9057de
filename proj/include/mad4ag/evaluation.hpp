#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"
#include "mad4ag/ingestion.hpp"
#include "mad4ag/plan.hpp"

namespace mad4ag {

/// Labelled masses. Kept sorted by label so that comparisons are order free.
struct Distribution {
  std::map<std::string, double> mass;

  double total() const noexcept {
    double t = 0;
    for (const auto& [k, v] : mass) t += v;
    return t;
  }
  void normalize() {
    const double t = total();
    if (t > 0)
      for (auto& [k, v] : mass) v /= t;
  }
  /// Labels ordered by descending mass, ties by label; at most k of them.
  std::vector<std::pair<std::string, double>> top(std::size_t k) const {
    std::vector<std::pair<std::string, double>> v(mass.begin(), mass.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (v.size() > k) v.resize(k);
    return v;
  }
};

/// Sum of p log2(p/q) - p + q; q where p = 0; infinity where q = 0 < p.
inline double kl_generalized(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw internal_error("kl_generalized: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0 && q[i] > 0) s += p[i] * std::log2(p[i] / q[i]) - p[i] + q[i];
    else if (p[i] == 0) s += q[i];
    else return std::numeric_limits<double>::infinity();
  }
  return s;
}

inline double js_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw internal_error("js_distance: size mismatch");
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  const double v = 0.5 * (kl_generalized(p, m) + kl_generalized(q, m));
  return std::min(std::sqrt(std::max(v, 0.0)), 1.0);
}

/// JS distance over the union of labels, each side normalized first.
inline double js_distance(const Distribution& a, const Distribution& b) {
  Distribution x = a, y = b;
  x.normalize();
  y.normalize();
  std::vector<double> p, q;
  for (const auto& [k, v] : x.mass) y.mass.try_emplace(k, 0.0);
  for (const auto& [k, v] : y.mass) x.mass.try_emplace(k, 0.0);
  for (const auto& [k, v] : x.mass) {
    p.push_back(v);
    q.push_back(y.mass.at(k));
  }
  return js_distance(p, q);
}

using WeightMap = std::map<std::string, double>;

namespace detail {
inline double weight_of(const WeightMap* w, const std::string& id) {
  if (!w) return 1.0;
  auto it = w->find(id);
  return it == w->end() ? 0.0 : it->second;
}
}  // namespace detail

/// Weighted share of each activity-sequence string. Without weights every
/// plan counts once; with weights, devices missing from the map count zero.
inline Distribution sequence_shares(std::span<const DailyPlan> plans, const WeightMap* weights = nullptr) {
  Distribution d;
  for (const auto& p : plans) {
    const double w = detail::weight_of(weights, p.device_id);
    if (w > 0) d.mass[p.sequence()] += w;
  }
  d.normalize();
  return d;
}

inline Distribution sequence_shares(std::span<const SurveyDiary> survey) {
  Distribution d;
  for (const auto& s : survey) d.mass[s.sequence()] += 1.0;
  d.normalize();
  return d;
}

/// curves[type][h]: weighted share of activity time in hour h spent in that type.
using HourlyCurves = std::array<std::array<double, 24>, 3>;

namespace detail {
inline void normalize_hours(HourlyCurves& c) {
  for (int h = 0; h < 24; ++h) {
    const double t = c[0][h] + c[1][h] + c[2][h];
    if (t > 0)
      for (auto& row : c) row[h] /= t;
  }
}
}  // namespace detail

inline HourlyCurves hourly_participation(std::span<const DailyPlan> plans, const WeightMap* weights = nullptr) {
  HourlyCurves c{};
  for (const auto& p : plans) {
    const double w = detail::weight_of(weights, p.device_id);
    if (w <= 0) continue;
    for (const auto& e : p.entries) {
      const auto prof = overlap_profile(e.start_s, e.end_s);
      for (int h = 0; h < 24; ++h) c[static_cast<int>(e.type)][h] += w * prof[h];
    }
  }
  detail::normalize_hours(c);
  return c;
}

inline HourlyCurves hourly_participation(std::span<const SurveyDiary> survey) {
  HourlyCurves c{};
  for (const auto& d : survey)
    for (const auto& a : d.activities) {
      const auto prof = overlap_profile(a.start_s, a.end_s);
      for (int h = 0; h < 24; ++h) c[static_cast<int>(a.type)][h] += prof[h];
    }
  detail::normalize_hours(c);
  return c;
}

/// JS distance between two curve sets flattened to 72 (type, hour) cells.
inline double hourly_js(const HourlyCurves& a, const HourlyCurves& b) {
  std::vector<double> p, q;
  for (int t = 0; t < 3; ++t)
    for (int h = 0; h < 24; ++h) {
      p.push_back(a[t][h] / 24.0);
      q.push_back(b[t][h] / 24.0);
    }
  return js_distance(p, q);
}

/// Weighted percentile with linear interpolation between order statistics.
/// Sample n sits at position (S_n - w_n) / (S_N - w_N), S being cumulative
/// weight in ascending value order; equal weights reduce to the usual
/// (N-1)-based linear rule.
inline double weighted_percentile(std::vector<std::pair<double, double>> vw, double q) {
  std::erase_if(vw, [](const auto& x) { return !(x.second > 0); });
  if (vw.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(vw.begin(), vw.end());
  if (vw.size() == 1) return vw[0].first;
  std::vector<double> pos(vw.size());
  double cum = 0.0;
  for (std::size_t i = 0; i < vw.size(); ++i) {
    cum += vw[i].second;
    pos[i] = cum - vw[i].second;
  }
  const double span = pos.back();
  if (!(span > 0)) return vw.back().first;
  const double target = q * span;
  auto it = std::upper_bound(pos.begin(), pos.end(), target);
  if (it == pos.end()) return vw.back().first;
  const std::size_t hi = static_cast<std::size_t>(it - pos.begin());
  if (hi == 0) return vw.front().first;
  const std::size_t lo = hi - 1;
  const double f = (target - pos[lo]) / (pos[hi] - pos[lo]);
  return vw[lo].first + f * (vw[hi].first - vw[lo].first);
}

struct TripSummary {
  std::size_t legs = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double p90 = std::numeric_limits<double>::quiet_NaN();
};

inline TripSummary summarize_legs(const std::vector<std::pair<double, double>>& legs) {
  TripSummary s;
  double sw = 0.0, sx = 0.0;
  for (const auto& [km, w] : legs) {
    if (!(w > 0)) continue;
    ++s.legs;
    sw += w;
    sx += w * km;
  }
  if (s.legs == 0) return s;
  s.mean = sx / sw;
  s.median = weighted_percentile(legs, 0.5);
  s.p90 = weighted_percentile(legs, 0.9);
  return s;
}

struct TripStats {
  TripSummary overall;
  TripSummary commuting;
};

/// Legs are consecutive plan entries; commuting legs join Home and Work directly.
inline TripStats trip_stats(std::span<const DailyPlan> plans, const WeightMap* weights = nullptr) {
  std::vector<std::pair<double, double>> all, commute;
  for (const auto& p : plans) {
    const double w = detail::weight_of(weights, p.device_id);
    for (std::size_t i = 1; i < p.entries.size(); ++i) {
      const auto& a = p.entries[i - 1];
      const auto& b = p.entries[i];
      const double km = haversine_km(a.point(), b.point());
      all.emplace_back(km, w);
      const bool hw = (a.type == ActivityType::Home && b.type == ActivityType::Work) ||
                      (a.type == ActivityType::Work && b.type == ActivityType::Home);
      if (hw) commute.emplace_back(km, w);
    }
  }
  return {summarize_legs(all), summarize_legs(commute)};
}

/// Average ranks (1-based), ties sharing the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Pearson correlation of average ranks, with a two-sided p from the t
/// approximation on n - 2 degrees of freedom.
inline SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw internal_error("spearman: size mismatch");
  if (x.size() < 3) throw data_error("spearman needs at least 3 observations");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0 || syy == 0) throw data_error("spearman: degenerate ranks (constant input)");
  SpearmanResult r;
  r.n = x.size();
  r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = n - 2.0;
  if (std::abs(r.rho) >= 1.0) {
    r.p_value = 0.0;
  } else {
    const double t = r.rho * std::sqrt(df / (1.0 - r.rho * r.rho));
    const boost::math::students_t dist(df);
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct ModelEvaluation {
  std::string name;
  Distribution sequences;
  HourlyCurves hourly{};
  std::optional<TripStats> trips;  // absent for the survey reference
};

struct EvalReport {
  std::vector<ModelEvaluation> models;
  std::map<std::pair<std::string, std::string>, double> sequence_js;
  std::map<std::pair<std::string, std::string>, double> hourly_js;
  std::optional<SpearmanResult> spearman_home_population;
  std::vector<double> day_to_day_hourly_js;  // pairwise over simulated days
  std::size_t top_k = 8;
};

inline void compare_models(EvalReport& r) {
  r.sequence_js.clear();
  r.hourly_js.clear();
  for (std::size_t i = 0; i < r.models.size(); ++i)
    for (std::size_t j = i + 1; j < r.models.size(); ++j) {
      const auto key = std::make_pair(r.models[i].name, r.models[j].name);
      r.sequence_js[key] = js_distance(r.models[i].sequences, r.models[j].sequences);
      r.hourly_js[key] = hourly_js(r.models[i].hourly, r.models[j].hourly);
    }
}

namespace detail {
inline nlohmann::json num(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}
inline nlohmann::json summary_json(const TripSummary& s) {
  return {{"legs", s.legs}, {"mean_km", num(s.mean)}, {"median_km", num(s.median)}, {"p90_km", num(s.p90)}};
}
}  // namespace detail

inline nlohmann::json report_json(const EvalReport& r) {
  using nlohmann::json;
  json out = json::object();
  json models = json::object();
  for (const auto& m : r.models) {
    json jm = json::object();
    json shares = json::object();
    for (const auto& [k, v] : m.sequences.mass) shares[k] = v;
    jm["sequence_shares"] = shares;
    json top = json::array();
    for (const auto& [k, v] : m.sequences.top(r.top_k)) top.push_back({{"sequence", k}, {"share", v}});
    jm["top_sequences"] = top;
    json hourly = json::object();
    for (int t = 0; t < 3; ++t) hourly[std::string(activity_name(static_cast<ActivityType>(t)))] = m.hourly[t];
    jm["hourly_participation"] = hourly;
    if (m.trips) jm["trip_stats"] = {{"overall", detail::summary_json(m.trips->overall)},
                                     {"commuting", detail::summary_json(m.trips->commuting)}};
    models[m.name] = jm;
  }
  out["models"] = models;
  json js = json::array();
  for (const auto& [k, v] : r.sequence_js)
    js.push_back({{"a", k.first}, {"b", k.second}, {"sequence_js", detail::num(v)},
                  {"hourly_js", detail::num(r.hourly_js.at(k))}});
  out["js"] = js;
  if (r.spearman_home_population)
    out["spearman_home_population"] = {{"rho", detail::num(r.spearman_home_population->rho)},
                                       {"p_value", detail::num(r.spearman_home_population->p_value)},
                                       {"zones", r.spearman_home_population->n}};
  else
    out["spearman_home_population"] = nullptr;
  json days = json::array();
  for (double v : r.day_to_day_hourly_js) days.push_back(detail::num(v));
  out["day_to_day_hourly_js"] = days;
  return out;
}

/// Flat metric table: one row per (scope, metric) value.
inline std::string report_csv(const EvalReport& r) {
  csv::Writer w({"scope", "metric", "value"});
  for (const auto& [k, v] : r.sequence_js) w.add(k.first + ":" + k.second, "sequence_js", v);
  for (const auto& [k, v] : r.hourly_js) w.add(k.first + ":" + k.second, "hourly_js", v);
  for (const auto& m : r.models) {
    if (!m.trips) continue;
    const auto put = [&](const std::string& scope, const TripSummary& s) {
      w.add(m.name + ":" + scope, "legs", s.legs);
      w.add(m.name + ":" + scope, "mean_km", s.mean);
      w.add(m.name + ":" + scope, "median_km", s.median);
      w.add(m.name + ":" + scope, "p90_km", s.p90);
    };
    put("overall", m.trips->overall);
    put("commuting", m.trips->commuting);
  }
  if (r.spearman_home_population) {
    w.add("home_population", "spearman_rho", r.spearman_home_population->rho);
    w.add("home_population", "spearman_p", r.spearman_home_population->p_value);
  }
  for (std::size_t i = 0; i < r.day_to_day_hourly_js.size(); ++i)
    w.add("day_pair_" + std::to_string(i), "hourly_js", r.day_to_day_hourly_js[i]);
  return w.str();
}

inline void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                         const EvalReport& r) {
  if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());
  {
    std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write " + json_path.string());
    out << report_json(r).dump(2) << '\n';
  }
  std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write " + csv_path.string());
  out << report_csv(r);
}

}  // namespace mad4ag
