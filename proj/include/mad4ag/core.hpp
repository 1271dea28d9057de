#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mad4ag {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind { Config, Data, Prerequisite, Internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return {ErrorKind::Config, msg}; }
inline Error data_error(const std::string& msg) { return {ErrorKind::Data, msg}; }
inline Error internal_error(const std::string& msg) { return {ErrorKind::Internal, msg}; }

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

using EpochSeconds = std::int64_t;

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

inline bool valid_coordinates(double lat, double lon) noexcept {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
         lon >= -180.0 && lon <= 180.0;
}

struct RawFix {
  std::string device_id;
  double lat = 0.0;
  double lon = 0.0;
  EpochSeconds ts = 0;

  GeoPoint point() const noexcept { return {lat, lon}; }
};

struct Stop {
  std::string device_id;
  double lat = 0.0;
  double lon = 0.0;
  EpochSeconds start = 0;
  EpochSeconds end = 0;
  int label = 0;

  GeoPoint point() const noexcept { return {lat, lon}; }
  EpochSeconds duration() const noexcept { return end - start; }
};

/// Clock-time window in seconds of day. `end_s` is exclusive; a window with
/// end_s <= start_s wraps past midnight. start_s == end_s denotes the full day.
struct ClockInterval {
  std::int64_t start_s = 0;
  std::int64_t end_s = kSecondsPerDay;

  std::int64_t duration() const noexcept {
    const std::int64_t d = end_s - start_s;
    return d > 0 ? d : d + kSecondsPerDay;
  }

  bool contains_hour(int hour) const noexcept {
    const std::int64_t s = hour * kSecondsPerHour;
    if (duration() == kSecondsPerDay) return true;
    if (start_s < end_s) return s >= start_s && s < end_s;
    return s >= start_s || s < end_s;
  }

  friend bool operator==(const ClockInterval&, const ClockInterval&) = default;
};

struct RngSeed {
  std::uint64_t seed = 0;
};

enum class ActivityType { Home, Work, Other };

inline char activity_code(ActivityType t) noexcept {
  switch (t) {
    case ActivityType::Home: return 'H';
    case ActivityType::Work: return 'W';
    case ActivityType::Other: return 'O';
  }
  return '?';
}

inline std::string_view activity_name(ActivityType t) noexcept {
  switch (t) {
    case ActivityType::Home: return "Home";
    case ActivityType::Work: return "Work";
    case ActivityType::Other: return "Other";
  }
  return "?";
}

inline bool parse_activity(std::string_view s, ActivityType& out) noexcept {
  if (s == "Home" || s == "H" || s == "home") { out = ActivityType::Home; return true; }
  if (s == "Work" || s == "W" || s == "work") { out = ActivityType::Work; return true; }
  if (s == "Other" || s == "O" || s == "other") { out = ActivityType::Other; return true; }
  return false;
}

// ---------------------------------------------------------------------------
// Geodesy
// ---------------------------------------------------------------------------

inline constexpr double kEarthRadiusKm = 6371.0088;

inline double deg2rad(double deg) noexcept { return deg * std::numbers::pi / 180.0; }

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
inline double haversine_km(const GeoPoint& a, const GeoPoint& b) noexcept {
  const double phi1 = deg2rad(a.lat);
  const double phi2 = deg2rad(b.lat);
  const double dphi = phi2 - phi1;
  const double dlambda = deg2rad(b.lon - a.lon);
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

inline double haversine_m(const GeoPoint& a, const GeoPoint& b) noexcept {
  return 1000.0 * haversine_km(a, b);
}

/// Degrees of latitude spanned by `km` along a meridian.
inline double km_to_lat_deg(double km) noexcept {
  return km / (kEarthRadiusKm * std::numbers::pi / 180.0);
}

// ---------------------------------------------------------------------------
// Time
// ---------------------------------------------------------------------------

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

inline std::int64_t floor_mod(std::int64_t a, std::int64_t b) noexcept {
  return a - floor_div(a, b) * b;
}

/// Local civil hour 0..23 under a fixed UTC offset.
inline int hour_of(EpochSeconds ts, std::int64_t utc_offset_s = 0) noexcept {
  return static_cast<int>(floor_mod(ts + utc_offset_s, kSecondsPerDay) / kSecondsPerHour);
}

/// Local calendar day index (days since 1970-01-01 in local time).
inline std::int64_t local_day(EpochSeconds ts, std::int64_t utc_offset_s = 0) noexcept {
  return floor_div(ts + utc_offset_s, kSecondsPerDay);
}

inline std::int64_t seconds_of_day(EpochSeconds ts, std::int64_t utc_offset_s = 0) noexcept {
  return floor_mod(ts + utc_offset_s, kSecondsPerDay);
}

/// 0 = Monday ... 6 = Sunday.
inline int weekday_of_day(std::int64_t day) noexcept {
  return static_cast<int>(floor_mod(day + 3, 7));
}

struct CivilDate {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;

  friend bool operator==(const CivilDate&, const CivilDate&) = default;
};

// Proleptic Gregorian conversions (H. Hinnant's days_from_civil).
inline std::int64_t days_from_civil(CivilDate d) noexcept {
  const int y = d.year - (d.month <= 2 ? 1 : 0);
  const std::int64_t era = floor_div(y, 400);
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned mp = d.month > 2 ? d.month - 3 : d.month + 9;
  const unsigned doy = (153 * mp + 2) / 5 + d.day - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline CivilDate civil_from_days(std::int64_t z) noexcept {
  z += 719468;
  const std::int64_t era = floor_div(z, 146097);
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2 ? 1 : 0)), m, d};
}

/// Parses YYYY-MM-DD. Throws config_error on malformed input.
inline std::int64_t parse_date_day(std::string_view s) {
  int y = 0;
  unsigned m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw config_error("bad date '" + std::string(s) + "'");
  try {
    y = std::stoi(std::string(s.substr(0, 4)));
    m = static_cast<unsigned>(std::stoi(std::string(s.substr(5, 2))));
    d = static_cast<unsigned>(std::stoi(std::string(s.substr(8, 2))));
  } catch (const std::exception&) {
    throw config_error("bad date '" + std::string(s) + "'");
  }
  if (m < 1 || m > 12 || d < 1 || d > 31) throw config_error("bad date '" + std::string(s) + "'");
  return days_from_civil({y, m, d});
}

inline std::string format_date(std::int64_t day) {
  const CivilDate c = civil_from_days(day);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", c.year, c.month, c.day);
  return buf;
}

/// Hours of [start, end) falling into local clock hour `hour_bucket`, summed
/// over every calendar day the interval crosses.
inline double overlap_hours(EpochSeconds start, EpochSeconds end, int hour_bucket,
                            std::int64_t utc_offset_s = 0) noexcept {
  if (end <= start) return 0.0;
  const std::int64_t ls = start + utc_offset_s;
  const std::int64_t le = end + utc_offset_s;
  std::int64_t total = 0;
  for (std::int64_t day = floor_div(ls, kSecondsPerDay); day * kSecondsPerDay < le; ++day) {
    const std::int64_t b0 = day * kSecondsPerDay + hour_bucket * kSecondsPerHour;
    const std::int64_t b1 = b0 + kSecondsPerHour;
    const std::int64_t lo = std::max(b0, ls);
    const std::int64_t hi = std::min(b1, le);
    if (hi > lo) total += hi - lo;
  }
  return static_cast<double>(total) / kSecondsPerHour;
}

/// All 24 buckets at once; sums to (end - start) / 3600.
inline std::array<double, 24> overlap_profile(EpochSeconds start, EpochSeconds end,
                                              std::int64_t utc_offset_s = 0) noexcept {
  std::array<double, 24> out{};
  if (end <= start) return out;
  std::int64_t t = start + utc_offset_s;
  const std::int64_t le = end + utc_offset_s;
  while (t < le) {
    const std::int64_t next = (floor_div(t, kSecondsPerHour) + 1) * kSecondsPerHour;
    const std::int64_t hi = std::min(next, le);
    out[static_cast<std::size_t>(floor_mod(floor_div(t, kSecondsPerHour), 24))] +=
        static_cast<double>(hi - t) / kSecondsPerHour;
    t = hi;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic randomness
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives an independent stream seed from the master seed, a stage name and
/// a unit key. The result depends only on its arguments, never on call order.
inline RngSeed split_seed(RngSeed master, std::string_view stage, std::string_view key = {},
                          std::uint64_t counter = 0) noexcept {
  std::uint64_t h = splitmix64(master.seed);
  h = splitmix64(h ^ fnv1a64(stage));
  h = splitmix64(h ^ fnv1a64(key));
  h = splitmix64(h ^ counter);
  return {h};
}

/// xoshiro256** seeded through splitmix64. Distributions are implemented here
/// so output does not depend on the standard library's distribution code.
class Rng {
 public:
  explicit Rng(RngSeed seed) noexcept {
    std::uint64_t x = seed.seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      s = splitmix64(x);
    }
  }

  std::uint64_t next() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do { r = next(); } while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sd) noexcept { return mean + sd * normal(); }

  double exponential(double rate) noexcept {
    double u = 0.0;
    do { u = uniform(); } while (u <= 0.0);
    return -std::log(u) / rate;
  }

  /// Index drawn proportionally to non-negative `weights`; weights must not all be zero.
  std::size_t discrete(const std::vector<double>& weights) noexcept {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      if (r < weights[i]) return i;
      r -= weights[i];
    }
    for (std::size_t i = weights.size(); i-- > 0;)
      if (weights[i] > 0.0) return i;
    return 0;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Cumulative table for repeated draws from a fixed discrete distribution.
class DiscreteTable {
 public:
  DiscreteTable() = default;
  explicit DiscreteTable(const std::vector<double>& weights) : cumulative_(weights.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += std::max(weights[i], 0.0);
      cumulative_[i] = acc;
    }
  }

  std::size_t size() const noexcept { return cumulative_.size(); }
  double total() const noexcept { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

  std::size_t draw(Rng& rng) const noexcept {
    const double r = rng.uniform() * total();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), r);
    if (it == cumulative_.end()) --it;
    return static_cast<std::size_t>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
};

}  // namespace mad4ag
