#pragma once

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"

namespace mad4ag {

/// Flat key=value pipeline configuration. Every key has a default; unknown
/// keys are rejected wherever they come from.
class PipelineConfig {
 public:
  PipelineConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"seed", "42"},
        {"utc_offset_hours", "1"},
        {"holidays", "default"},
        {"study_polygon", "default"},
        {"input_dir", "data"},
        {"out_dir", "out"},
        {"comparison_plans", ""},
        {"generate_world", "false"},
        {"stop_r1_m", "30"},
        {"stop_r2_m", "30"},
        {"stop_t_min_s", "900"},
        {"stop_t_max_s", "10800"},
        {"cluster_eps_km", "200"},
        {"cluster_min_pts", "2"},
        {"location_eps_m", "100"},
        {"location_min_pts", "1"},
        {"snap_radius_m", "500"},
        {"max_visit_hours", "12"},
        {"min_active_days", "7"},
        {"min_locations", "2"},
        {"home_score_min", "10"},
        {"work_score_min", "30"},
        {"night_visit_min", "3"},
        {"home_share_threshold", "0.8"},
        {"census_bounds", "true"},
        {"ipf_tol", "1e-6"},
        {"ipf_max_iter", "100"},
        {"trim_variant", "literal"},
        {"min_group", "50"},
        {"thresholds", "4.3,7.9"},
        {"threshold_mode", "fixed"},
        {"match_tol", "1e-9"},
        {"match_max_iter", "1000"},
        {"commute_marginal", "survey"},
        {"n_sim_days", "1"},
        {"secondary_guard_km", "0.01"},
        {"max_speed_kmh", "150"},
        {"world_n_zones", "20"},
        {"world_n_persons", "500"},
        {"world_n_survey", "2000"},
        {"world_employment_rate", "0.6"},
        {"world_noise_m", "20"},
        {"world_rate_per_h", "2"},
        {"world_night_rate_per_h", "0.25"},
        {"world_n_days", "60"},
        {"world_start_date", "2019-03-04"},
        {"sparsity_factor", "1"},
    };
    return d;
  }

  void set(std::string_view key, std::string_view value, std::string_view origin = "override") {
    const std::string k = trim(key);
    auto it = values_.find(k);
    if (it == values_.end()) throw config_error(std::string(origin) + ": unknown configuration key '" + k + "'");
    it->second = trim(value);
  }

  /// Parses `key = value` lines; '#' starts a comment.
  void load_text(std::string_view text, std::string_view origin) {
    std::size_t lineno = 0;
    while (!text.empty()) {
      const auto nl = text.find('\n');
      std::string_view line = text.substr(0, nl);
      text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      if (trim(line).empty()) continue;
      const auto eq = line.find('=');
      const std::string where = std::string(origin) + ":" + std::to_string(lineno);
      if (eq == std::string_view::npos) throw config_error(where + ": expected key = value");
      set(line.substr(0, eq), line.substr(eq + 1), where);
    }
  }

  void load_file(const std::filesystem::path& path) {
    std::string text;
    try {
      text = csv::read_file(path);
    } catch (const Error&) {
      throw config_error("cannot read config file " + path.string());
    }
    load_text(text, path.string());
  }

  /// MAD4AG_<KEY> (upper case) overrides the key of the same name.
  void apply_environment() {
    for (auto& [k, v] : values_) {
      std::string name = "MAD4AG_";
      for (char c : k) name.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      if (const char* env = std::getenv(name.c_str())) v = trim(env);
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw internal_error("configuration key not declared: " + key);
    return it->second;
  }

  double number(const std::string& key) const {
    double v = 0;
    if (!csv::to_double(str(key), v)) throw config_error(key + " must be a number, got '" + str(key) + "'");
    return v;
  }

  std::int64_t integer(const std::string& key) const {
    std::int64_t v = 0;
    if (!csv::to_int(str(key), v)) throw config_error(key + " must be an integer, got '" + str(key) + "'");
    return v;
  }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw config_error(key + " must be true or false, got '" + s + "'");
  }

  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    std::string_view s = str(key);
    while (!s.empty()) {
      const auto comma = s.find(',');
      double v = 0;
      if (!csv::to_double(trim(s.substr(0, comma)), v)) throw config_error(key + " must be a comma-separated number list");
      out.push_back(v);
      s = comma == std::string_view::npos ? std::string_view{} : s.substr(comma + 1);
    }
    return out;
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Canonical dump; location keys are left out so that the same settings
  /// hash identically wherever they run.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
      if (k == "input_dir" || k == "out_dir") continue;
      out += k + "=" + v + "\n";
    }
    return out;
  }

  std::uint64_t hash() const { return fnv1a64(canonical()); }

 private:
  static std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace mad4ag
