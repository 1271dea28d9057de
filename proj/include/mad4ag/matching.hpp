#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mad4ag/activity.hpp"
#include "mad4ag/core.hpp"
#include "mad4ag/csv.hpp"
#include "mad4ag/ingestion.hpp"
#include "mad4ag/primary.hpp"

namespace mad4ag {

// ---------------------------------------------------------------------------
// Traveller categories
// ---------------------------------------------------------------------------

enum class DistClass { Short, Long };
enum class CommuteClass { Short, Long, None };

struct TravellerAttributes {
  Region region = Region::Svealand;
  UrbanDensity density = UrbanDensity::High;
  bool employed = false;
  DistClass trip = DistClass::Short;
  CommuteClass commute = CommuteClass::None;
};

inline constexpr int kCategoryDepth = 5;

/// Attribute value at grouping step `level` (0 = region ... 4 = commute).
inline int attribute_value(const TravellerAttributes& a, int level) noexcept {
  switch (level) {
    case 0: return static_cast<int>(a.region);
    case 1: return static_cast<int>(a.density);
    case 2: return a.employed ? 1 : 0;
    case 3: return static_cast<int>(a.trip);
    case 4: return static_cast<int>(a.commute);
  }
  return 0;
}

inline std::string attribute_label(const TravellerAttributes& a, int level) {
  switch (level) {
    case 0: return std::string(region_name(a.region));
    case 1: return std::string(density_name(a.density));
    case 2: return a.employed ? "employed" : "not_employed";
    case 3: return a.trip == DistClass::Long ? "trip_long" : "trip_short";
    case 4: return a.commute == CommuteClass::Long ? "commute_long"
                   : a.commute == CommuteClass::Short ? "commute_short" : "commute_na";
  }
  return {};
}

/// Category key restricted to the first `depth` attributes, e.g. "Svealand|high|employed".
inline std::string category_key(const TravellerAttributes& a, int depth) {
  if (depth == 0) return "all";
  std::string s;
  for (int l = 0; l < depth; ++l) {
    if (l) s += '|';
    s += attribute_label(a, l);
  }
  return s;
}

struct TravellerCategory {
  TravellerAttributes attrs;
  int depth = kCategoryDepth;

  std::string key() const { return category_key(attrs, depth); }
};

struct DistanceThresholds {
  double trip_km = 4.3;
  double commute_km = 7.9;
};

inline DistClass classify_trip(double km, const DistanceThresholds& t) noexcept {
  return km >= t.trip_km ? DistClass::Long : DistClass::Short;
}

inline CommuteClass classify_commute(std::optional<double> km, const DistanceThresholds& t) noexcept {
  if (!km) return CommuteClass::None;
  return *km >= t.commute_km ? CommuteClass::Long : CommuteClass::Short;
}

/// Mobile-side matching unit.
struct DeviceTraveller {
  std::string device_id;
  TravellerAttributes attrs;
  double avg_trip_km = 0.0;
  std::optional<double> commute_km;
  bool has_work = false;
  bool has_other = false;
};

/// Survey-side matching unit.
struct SurveyTraveller {
  std::size_t diary = 0;  // index into the survey
  std::string participant_id;
  TravellerAttributes attrs;
  double avg_trip_km = 0.0;
  std::string sequence;
  bool has_work = false;
  bool has_other = false;
};

inline std::vector<SurveyTraveller> survey_travellers(std::span<const SurveyDiary> survey, const DistanceThresholds& t) {
  std::vector<SurveyTraveller> out;
  out.reserve(survey.size());
  for (std::size_t i = 0; i < survey.size(); ++i) {
    const auto& d = survey[i];
    SurveyTraveller s;
    s.diary = i;
    s.participant_id = d.participant_id;
    s.avg_trip_km = d.average_trip_km();
    s.attrs = {d.region, d.density, d.employed, classify_trip(s.avg_trip_km, t), classify_commute(d.commute_km(), t)};
    s.sequence = d.sequence();
    s.has_work = d.has(ActivityType::Work);
    s.has_other = d.has(ActivityType::Other);
    out.push_back(std::move(s));
  }
  return out;
}

/// Thresholds recomputed as survey medians of average trip and commute distance.
inline DistanceThresholds survey_median_thresholds(std::span<const SurveyDiary> survey) {
  std::vector<double> trips, commutes;
  for (const auto& d : survey) {
    if (!d.trips.empty()) trips.push_back(d.average_trip_km());
    if (auto c = d.commute_km()) commutes.push_back(*c);
  }
  auto med = [](std::vector<double> v, double fallback) {
    if (v.empty()) return fallback;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  return {med(trips, 4.3), med(commutes, 7.9)};
}

/// Node of the step-wise survey grouping: a node is subdivided on the next
/// attribute only while it holds at least `min_group` participants.
struct SurveyGroup {
  std::string key;
  int depth = 0;
  TravellerAttributes prefix;  // first `depth` attributes are meaningful
  std::vector<std::size_t> members;  // indices into the traveller list
  std::map<int, std::unique_ptr<SurveyGroup>> children;  // empty when a leaf
  bool subdivided = false;
};

class SurveyGrouping {
 public:
  SurveyGrouping(std::vector<SurveyTraveller> travellers, std::size_t min_group)
      : travellers_(std::move(travellers)), min_group_(min_group) {
    if (travellers_.empty()) throw data_error("no survey group: survey is empty");
    root_ = std::make_unique<SurveyGroup>();
    root_->key = "all";
    for (std::size_t i = 0; i < travellers_.size(); ++i) root_->members.push_back(i);
    split(*root_);
  }

  const std::vector<SurveyTraveller>& travellers() const noexcept { return travellers_; }
  const SurveyGroup& root() const noexcept { return *root_; }

  /// Deepest group along the device's attribute path that has participants.
  const SurveyGroup& group_for(const TravellerAttributes& a) const noexcept {
    const SurveyGroup* g = root_.get();
    while (g->subdivided) {
      auto it = g->children.find(attribute_value(a, g->depth));
      if (it == g->children.end() || it->second->members.empty()) break;
      g = it->second.get();
    }
    return *g;
  }

  /// All groups in depth-first key order.
  std::vector<const SurveyGroup*> groups() const {
    std::vector<const SurveyGroup*> out;
    collect(*root_, out);
    return out;
  }

 private:
  void split(SurveyGroup& g) {
    if (g.depth >= kCategoryDepth || g.members.size() < min_group_) return;
    g.subdivided = true;
    for (std::size_t m : g.members) {
      const int v = attribute_value(travellers_[m].attrs, g.depth);
      auto& child = g.children[v];
      if (!child) {
        child = std::make_unique<SurveyGroup>();
        child->depth = g.depth + 1;
        child->prefix = travellers_[m].attrs;
        child->key = category_key(travellers_[m].attrs, child->depth);
      }
      child->members.push_back(m);
    }
    for (auto& [v, c] : g.children) split(*c);
  }

  static void collect(const SurveyGroup& g, std::vector<const SurveyGroup*>& out) {
    out.push_back(&g);
    for (const auto& [v, c] : g.children) collect(*c, out);
  }

  std::vector<SurveyTraveller> travellers_;
  std::size_t min_group_;
  std::unique_ptr<SurveyGroup> root_;
};

/// Visit-weighted mean distance from home to the device's other locations in
/// the home's activity cluster; 0 when there are none.
inline double device_average_trip_km(const DeviceActivityData& device, int home_location_id) {
  const ActivityLocation* home = device.find(home_location_id);
  if (!home) return 0.0;
  double sum = 0.0, n = 0.0;
  for (const auto& loc : device.locations) {
    if (loc.location_id == home_location_id || loc.cluster_id != home->cluster_id) continue;
    const double w = static_cast<double>(loc.visits.size());
    sum += w * haversine_km(home->point(), loc.point());
    n += w;
  }
  return n > 0 ? sum / n : 0.0;
}

/// Matching profile of a device whose home lies in `home_zone`.
inline DeviceTraveller device_traveller(const DeviceActivityData& device, const PrimaryAssignment& primary,
                                        const Zone& home_zone, const DistanceThresholds& t) {
  DeviceTraveller d;
  d.device_id = device.device_id;
  d.has_work = primary.work_location_id.has_value();
  d.avg_trip_km = device_average_trip_km(device, primary.home_location_id);
  const ActivityLocation* home = device.find(primary.home_location_id);
  if (d.has_work && home)
    if (const ActivityLocation* work = device.find(*primary.work_location_id))
      d.commute_km = haversine_km(home->point(), work->point());
  for (const auto& loc : device.locations)
    if (loc.location_id != primary.home_location_id && loc.location_id != primary.work_location_id.value_or(-1))
      d.has_other = true;
  d.attrs = {home_zone.region, home_zone.density, d.has_work, classify_trip(d.avg_trip_km, t),
             classify_commute(d.commute_km, t)};
  return d;
}

// ---------------------------------------------------------------------------
// Matching probabilities
// ---------------------------------------------------------------------------

/// One support cell (participant, commuting type, sequence type).
struct MatchCell {
  std::size_t participant = 0;
  std::size_t k = 0;
  std::size_t s = 0;
  double p = 0.0;
};

struct MatchTable {
  std::string category;
  std::vector<MatchCell> cells;
  int iterations = 0;
  bool converged = false;
  std::vector<std::size_t> zero_marginal_cells;  // cells pinned at zero

  double row_sum(std::size_t k) const noexcept {
    double s = 0;
    for (const auto& c : cells)
      if (c.k == k) s += c.p;
    return s;
  }
  double col_sum(std::size_t s) const noexcept {
    double t = 0;
    for (const auto& c : cells)
      if (c.s == s) t += c.p;
    return t;
  }
  double total() const noexcept {
    double t = 0;
    for (const auto& c : cells) t += c.p;
    return t;
  }
};

/// Renormalizes a marginal over the types that have at least one cell.
inline std::vector<double> restrict_to_support(std::vector<double> m, const std::vector<bool>& supported) {
  double tot = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i >= supported.size() || !supported[i]) m[i] = 0.0;
    tot += m[i];
  }
  if (tot > 0)
    for (double& x : m) x /= tot;
  return m;
}

/// Alternating row fit to D (commuting), column fit to S (sequences) and
/// normalization to unit mass, starting from a uniform 1/N table over the
/// group's N participants. Stops once every row and column sum is within tol
/// of its marginal. Cells whose row or column marginal is zero stay at zero.
inline MatchTable matching_probabilities(std::vector<MatchCell> cells, std::size_t n_participants,
                                         std::vector<double> D, std::vector<double> S, double tol = 1e-9,
                                         int max_iter = 1000) {
  MatchTable t;
  std::size_t K = D.size(), NS = S.size();
  for (const auto& c : cells) {
    K = std::max(K, c.k + 1);
    NS = std::max(NS, c.s + 1);
  }
  D.resize(K, 0.0);
  S.resize(NS, 0.0);
  std::vector<bool> k_sup(K, false), s_sup(NS, false);
  for (const auto& c : cells) {
    k_sup[c.k] = true;
    s_sup[c.s] = true;
  }
  D = restrict_to_support(std::move(D), k_sup);
  S = restrict_to_support(std::move(S), s_sup);

  const double p0 = n_participants ? 1.0 / static_cast<double>(n_participants) : 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cells[i].p = p0;
    if (D[cells[i].k] == 0.0 || S[cells[i].s] == 0.0) {
      cells[i].p = 0.0;
      t.zero_marginal_cells.push_back(i);
    }
  }
  std::vector<double> row(K), col(NS);
  auto marginal_error = [&] {
    std::fill(row.begin(), row.end(), 0.0);
    std::fill(col.begin(), col.end(), 0.0);
    for (const auto& c : cells) {
      row[c.k] += c.p;
      col[c.s] += c.p;
    }
    double e = 0.0;
    for (std::size_t k = 0; k < K; ++k) e = std::max(e, std::abs(row[k] - D[k]));
    for (std::size_t s = 0; s < NS; ++s) e = std::max(e, std::abs(col[s] - S[s]));
    return e;
  };
  if (!cells.empty()) {
    while (t.iterations < max_iter) {
      ++t.iterations;
      std::fill(row.begin(), row.end(), 0.0);
      for (const auto& c : cells) row[c.k] += c.p;
      for (auto& c : cells)
        if (row[c.k] > 0) c.p *= D[c.k] / row[c.k];
      std::fill(col.begin(), col.end(), 0.0);
      for (const auto& c : cells) col[c.s] += c.p;
      for (auto& c : cells)
        if (col[c.s] > 0) c.p *= S[c.s] / col[c.s];
      double total = 0.0;
      for (const auto& c : cells) total += c.p;
      if (total > 0)
        for (auto& c : cells) c.p /= total;
      if (marginal_error() < tol) {
        t.converged = true;
        break;
      }
    }
  }
  t.cells = std::move(cells);
  return t;
}

// ---------------------------------------------------------------------------
// Twin assignment
// ---------------------------------------------------------------------------

struct TwinAssignment {
  std::string device_id;
  std::string participant_id;
  std::string category;
  int sim_day = 0;
};

struct AssignmentReport {
  std::size_t swaps = 0;
  std::size_t unrepairable = 0;
};

inline bool twin_compatible(const DeviceTraveller& d, const SurveyTraveller& s) noexcept {
  return (d.has_other || !s.has_other) && (d.has_work || !s.has_work);
}

/// Pairs devices with survey participants drawn (with replacement) from
/// `probability` (one entry per candidate), rank-matched on average trip
/// distance. Pairs that give a diary with Other (or Work) activities to a
/// device lacking such locations are repaired by the nearest-rank swap that
/// fixes both sides; failing that, the device takes the nearest-ranked
/// compatible candidate.
inline std::vector<std::pair<std::size_t, std::size_t>> assign_twins(
    std::span<const DeviceTraveller> devices, std::span<const SurveyTraveller> candidates,
    std::span<const double> probability, Rng& rng, AssignmentReport* report = nullptr) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (device index, candidate index)
  if (devices.empty()) return pairs;
  if (candidates.empty()) throw data_error("twin matching: no survey participants for group");
  const DiscreteTable table(std::vector<double>(probability.begin(), probability.end()));
  if (!(table.total() > 0)) throw data_error("twin matching: probability table has no mass");

  std::vector<std::size_t> sample(devices.size());
  for (auto& s : sample) s = table.draw(rng);

  std::vector<std::size_t> dev_order(devices.size());
  std::iota(dev_order.begin(), dev_order.end(), 0);
  std::sort(dev_order.begin(), dev_order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = devices[a];
    const auto& y = devices[b];
    return x.avg_trip_km < y.avg_trip_km || (x.avg_trip_km == y.avg_trip_km && x.device_id < y.device_id);
  });
  std::stable_sort(sample.begin(), sample.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = candidates[a];
    const auto& y = candidates[b];
    return x.avg_trip_km < y.avg_trip_km || (x.avg_trip_km == y.avg_trip_km && x.participant_id < y.participant_id);
  });

  AssignmentReport rep;
  const std::size_t n = sample.size();
  auto ok = [&](std::size_t rank_dev, std::size_t cand) {
    return twin_compatible(devices[dev_order[rank_dev]], candidates[cand]);
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (ok(i, sample[i])) continue;
    bool fixed = false;
    for (std::size_t off = 1; off < n && !fixed; ++off) {
      for (int sign : {-1, 1}) {
        if (sign < 0 && off > i) continue;
        const std::size_t j = sign < 0 ? i - off : i + off;
        if (j >= n) continue;
        if (ok(i, sample[j]) && ok(j, sample[i])) {
          std::swap(sample[i], sample[j]);
          ++rep.swaps;
          fixed = true;
          break;
        }
      }
    }
    if (fixed) continue;
    ++rep.unrepairable;
    // Nearest-rank compatible participant in the sample, else in the whole group.
    std::optional<std::size_t> pick;
    for (std::size_t off = 1; off < n && !pick; ++off) {
      if (off <= i && ok(i, sample[i - off])) pick = sample[i - off];
      else if (i + off < n && ok(i, sample[i + off])) pick = sample[i + off];
    }
    if (!pick) {
      const double target = devices[dev_order[i]].avg_trip_km;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (!ok(i, c)) continue;
        const double d = std::abs(candidates[c].avg_trip_km - target);
        if (d < best) {
          best = d;
          pick = c;
        }
      }
    }
    if (!pick) throw data_error("twin matching: device " + devices[dev_order[i]].device_id +
                                " has no compatible survey participant in its group");
    sample[i] = *pick;
  }
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(dev_order[i], sample[i]);
  std::sort(pairs.begin(), pairs.end());
  if (report) {
    report->swaps += rep.swaps;
    report->unrepairable += rep.unrepairable;
  }
  return pairs;
}

enum class CommuteMarginal { Survey, Devices };

inline CommuteMarginal parse_commute_marginal(std::string_view s) {
  if (s == "survey") return CommuteMarginal::Survey;
  if (s == "devices") return CommuteMarginal::Devices;
  throw config_error("commute_marginal must be survey or devices, got '" + std::string(s) + "'");
}

struct MatchParams {
  std::size_t min_group = 50;
  DistanceThresholds thresholds;
  double tol = 1e-9;
  int max_iter = 1000;
  CommuteMarginal commute_marginal = CommuteMarginal::Survey;
};

struct MatchReport {
  std::size_t groups_used = 0;
  std::size_t tables_unconverged = 0;
  AssignmentReport assignment;
  std::map<std::string, std::size_t> devices_per_group;
};

/// Probability table for one survey group from its own commuting and sequence
/// marginals (or the mapped devices' commuting mix).
inline MatchTable group_table(const SurveyGroup& g, const std::vector<SurveyTraveller>& travellers,
                              std::span<const DeviceTraveller> group_devices, const MatchParams& p) {
  std::map<std::string, std::size_t> seq_index;
  for (std::size_t m : g.members) seq_index.emplace(travellers[m].sequence, 0);
  std::size_t next = 0;
  for (auto& [s, idx] : seq_index) idx = next++;
  std::vector<double> D(3, 0.0), S(seq_index.size(), 0.0);
  std::vector<MatchCell> cells;
  for (std::size_t j = 0; j < g.members.size(); ++j) {
    const auto& t = travellers[g.members[j]];
    const std::size_t k = static_cast<std::size_t>(t.attrs.commute);
    const std::size_t s = seq_index[t.sequence];
    cells.push_back({j, k, s, 0.0});
    D[k] += 1.0;
    S[s] += 1.0;
  }
  if (p.commute_marginal == CommuteMarginal::Devices && !group_devices.empty()) {
    std::fill(D.begin(), D.end(), 0.0);
    for (const auto& d : group_devices) D[static_cast<std::size_t>(d.attrs.commute)] += 1.0;
  }
  auto normalize = [](std::vector<double>& v) {
    double t = 0;
    for (double x : v) t += x;
    if (t > 0)
      for (double& x : v) x /= t;
  };
  normalize(D);
  normalize(S);
  MatchTable table = matching_probabilities(std::move(cells), g.members.size(), D, S, p.tol, p.max_iter);
  table.category = g.key;
  return table;
}

/// Twin assignment for every device on sim days [0, n_days).
inline std::vector<TwinAssignment> match_twins(std::span<const DeviceTraveller> devices, const SurveyGrouping& grouping,
                                               const MatchParams& p, RngSeed seed, int n_days,
                                               MatchReport* report = nullptr) {
  MatchReport rep;
  std::map<const SurveyGroup*, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < devices.size(); ++i) by_group[&grouping.group_for(devices[i].attrs)].push_back(i);
  const auto& travellers = grouping.travellers();

  // Iterate in key order so results do not depend on pointer values.
  std::vector<std::pair<const SurveyGroup*, std::vector<std::size_t>>> ordered(by_group.begin(), by_group.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first->key < b.first->key; });

  std::vector<TwinAssignment> out;
  for (const auto& [g, dev_idx] : ordered) {
    std::vector<DeviceTraveller> gdev;
    for (std::size_t i : dev_idx) gdev.push_back(devices[i]);
    std::vector<SurveyTraveller> cands;
    for (std::size_t m : g->members) cands.push_back(travellers[m]);
    const MatchTable table = group_table(*g, travellers, gdev, p);
    if (!table.converged) ++rep.tables_unconverged;
    std::vector<double> prob(cands.size(), 0.0);
    for (const auto& c : table.cells) prob[c.participant] += c.p;
    ++rep.groups_used;
    rep.devices_per_group[g->key] = gdev.size();
    for (int day = 0; day < n_days; ++day) {
      Rng rng(split_seed(seed, "match", g->key, static_cast<std::uint64_t>(day)));
      const auto pairs = assign_twins(gdev, cands, prob, rng, &rep.assignment);
      for (const auto& [d, c] : pairs) out.push_back({gdev[d].device_id, cands[c].participant_id, g->key, day});
    }
  }
  std::sort(out.begin(), out.end(), [](const TwinAssignment& a, const TwinAssignment& b) {
    return a.sim_day < b.sim_day || (a.sim_day == b.sim_day && a.device_id < b.device_id);
  });
  if (report) *report = rep;
  return out;
}

inline void write_twins(const std::filesystem::path& path, std::span<const TwinAssignment> rows) {
  csv::Writer w({"device_id", "participant_id", "category", "sim_day"});
  for (const auto& t : rows) w.add(t.device_id, t.participant_id, t.category, t.sim_day);
  w.save(path);
}

inline std::vector<TwinAssignment> read_twins(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  csv::require_columns(t, {"device_id", "participant_id", "category", "sim_day"}, path.string());
  const int c_d = t.column("device_id"), c_p = t.column("participant_id"), c_c = t.column("category"),
            c_s = t.column("sim_day");
  std::vector<TwinAssignment> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    std::int64_t day = 0;
    if (row.size() < 4 || !csv::to_int(row[c_s], day))
      throw data_error(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": malformed twin row");
    out.push_back({row[c_d], row[c_p], row[c_c], static_cast<int>(day)});
  }
  return out;
}

}  // namespace mad4ag
