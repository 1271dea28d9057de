#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"
#include "mad4ag/ingestion.hpp"

namespace mad4ag {

struct PersonWeight {
  std::string device_id;
  std::string zone_id;
  bool employed = false;
  double w = 0.0;
};

/// Sample member as seen by the weighting step.
struct SampleMember {
  std::string device_id;
  std::string zone_id;
  bool employed = false;
};

struct IpwReport {
  std::vector<std::string> zones_without_sample;
  std::size_t members_without_zone = 0;
};

/// Inverse probability weights: population(z) / sample size(z).
inline std::vector<PersonWeight> initial_weights(std::span<const SampleMember> members, std::span<const Zone> zones,
                                                 IpwReport* report = nullptr) {
  std::map<std::string, const Zone*> by_id;
  for (const auto& z : zones) by_id[z.zone_id] = &z;
  std::map<std::string, std::size_t> n_sample;
  IpwReport rep;
  for (const auto& m : members) {
    if (by_id.count(m.zone_id)) ++n_sample[m.zone_id];
    else ++rep.members_without_zone;
  }
  for (const auto& [id, z] : by_id)
    if (!n_sample.count(id)) rep.zones_without_sample.push_back(id);
  std::vector<PersonWeight> out;
  for (const auto& m : members) {
    auto it = by_id.find(m.zone_id);
    if (it == by_id.end()) continue;
    out.push_back({m.device_id, m.zone_id, m.employed, it->second->population / static_cast<double>(n_sample[m.zone_id])});
  }
  if (report) *report = rep;
  return out;
}

struct IpfParams {
  double tol = 1e-6;
  int max_iter = 100;
};

struct IpfReport {
  std::vector<std::string> degenerate_zones;
  std::vector<std::string> unconverged_zones;
  int max_iterations = 0;
};

/// Alternating two-constraint fit per zone: employed members are scaled to the
/// zone's employee count, then everyone is rescaled to the zone population.
/// Iterates until both group multipliers are within tol of one. Zones whose
/// marginals cannot be met with positive weights keep their input weights.
inline std::vector<PersonWeight> ipf_employment(std::vector<PersonWeight> weights, std::span<const Zone> zones,
                                                const IpfParams& p = {}, IpfReport* report = nullptr) {
  IpfReport rep;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < weights.size(); ++i) members[weights[i].zone_id].push_back(i);
  std::map<std::string, const Zone*> by_id;
  for (const auto& z : zones) by_id[z.zone_id] = &z;

  for (const auto& [zone_id, idx] : members) {
    auto zit = by_id.find(zone_id);
    if (zit == by_id.end()) continue;
    const double pop = zit->second->population;
    const double emp = zit->second->employees;
    std::size_t n_emp = 0;
    for (std::size_t i : idx) n_emp += weights[i].employed;
    const std::size_t n_non = idx.size() - n_emp;
    const bool feasible = ((n_emp > 0) == (emp > 0)) && ((n_non > 0) == (pop - emp > 0));
    if (!feasible) {
      rep.degenerate_zones.push_back(zone_id);
      continue;
    }
    bool converged = false;
    int it = 0;
    while (it < p.max_iter && !converged) {
      ++it;
      double emp_sum = 0.0;
      for (std::size_t i : idx)
        if (weights[i].employed) emp_sum += weights[i].w;
      const double fa = emp_sum > 0 ? emp / emp_sum : 1.0;
      for (std::size_t i : idx)
        if (weights[i].employed) weights[i].w *= fa;
      double total = 0.0;
      for (std::size_t i : idx) total += weights[i].w;
      const double fb = pop / total;
      for (std::size_t i : idx) weights[i].w *= fb;
      const double change = std::max(std::abs(fa * fb - 1.0), std::abs(fb - 1.0));
      converged = change < p.tol;
    }
    rep.max_iterations = std::max(rep.max_iterations, it);
    if (!converged) rep.unconverged_zones.push_back(zone_id);
  }
  if (report) *report = rep;
  return weights;
}

enum class TrimVariant { Literal, Classic };

inline TrimVariant parse_trim_variant(std::string_view s) {
  if (s == "literal") return TrimVariant::Literal;
  if (s == "classic") return TrimVariant::Classic;
  throw config_error("trim_variant must be literal or classic, got '" + std::string(s) + "'");
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Coefficient of variation with the population standard deviation.
inline double coefficient_of_variation(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size()));
  return mean != 0.0 ? sd / mean : 0.0;
}

/// Literal: 3.5 * sqrt(1 + CV^2 * Med). Classic: 3.5 * Med * sqrt(1 + CV^2).
inline double trim_threshold(std::span<const double> w, TrimVariant variant = TrimVariant::Literal) {
  if (w.empty()) throw data_error("cannot trim an empty weight vector");
  const double cv = coefficient_of_variation(w);
  const double med = median(std::vector<double>(w.begin(), w.end()));
  if (variant == TrimVariant::Literal) return 3.5 * std::sqrt(1.0 + cv * cv * med);
  return 3.5 * med * std::sqrt(1.0 + cv * cv);
}

/// Caps every weight above w0 at w0.
inline void cap_weights(std::vector<PersonWeight>& weights, double w0) noexcept {
  for (auto& p : weights) p.w = std::min(p.w, w0);
}

struct TrimResult {
  std::vector<PersonWeight> weights;
  double w0 = 0.0;
};

inline TrimResult trim_weights(std::vector<PersonWeight> weights, TrimVariant variant = TrimVariant::Literal) {
  std::vector<double> w;
  w.reserve(weights.size());
  for (const auto& p : weights) w.push_back(p.w);
  const double w0 = trim_threshold(w, variant);
  cap_weights(weights, w0);
  return {std::move(weights), w0};
}

inline void write_weights(const std::filesystem::path& path, std::span<const PersonWeight> weights) {
  csv::Writer w({"device_id", "zone_id", "employed", "weight"});
  for (const auto& p : weights) w.add(p.device_id, p.zone_id, p.employed, p.w);
  w.save(path);
}

inline std::vector<PersonWeight> read_weights(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  csv::require_columns(t, {"device_id", "zone_id", "employed", "weight"}, path.string());
  const int c_dev = t.column("device_id"), c_z = t.column("zone_id"), c_e = t.column("employed"), c_w = t.column("weight");
  std::vector<PersonWeight> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    PersonWeight p;
    const auto emp = row.size() >= 4 ? parse_bool(row[c_e]) : std::nullopt;
    if (!emp || !csv::to_double(row[c_w], p.w))
      throw data_error(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": malformed weight row");
    p.device_id = row[c_dev];
    p.zone_id = row[c_z];
    p.employed = *emp;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace mad4ag
