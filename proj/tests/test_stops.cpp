#include <gtest/gtest.h>

#include "oracles/stops_oracle.hpp"
#include "support.hpp"

using namespace mad4ag;

namespace {

std::vector<RawFix> at_point(GeoPoint p, std::int64_t t0, int n, std::int64_t step, const std::string& dev = "d") {
  std::vector<RawFix> f;
  for (int i = 0; i < n; ++i) f.push_back({dev, p.lat, p.lon, t0 + i * step});
  return f;
}

// Random walk of tight clusters with travel jumps and occasional long gaps.
std::vector<RawFix> random_track(Rng& rng, int n) {
  std::vector<RawFix> f;
  GeoPoint centre{59.3, 18.0};
  std::int64_t t = 1'550'000'000;
  for (int i = 0; i < n; ++i) {
    if (rng.bernoulli(0.08)) centre = fx::offset(centre, rng.uniform(-2, 2), rng.uniform(-2, 2));
    const GeoPoint p = fx::offset(centre, rng.normal(0, 0.012), rng.normal(0, 0.012));
    t += rng.bernoulli(0.03) ? 4 * 3600 : 60 + static_cast<std::int64_t>(rng.below(600));
    f.push_back({"d", p.lat, p.lon, t});
  }
  return f;
}

}  // namespace

TEST(DetectStays, FiveFixesOverTwentyMinutes) {
  const auto f = at_point({59.3, 18.0}, 1000, 5, 300);
  const auto s = detect_stays(f, {});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].end - s[0].start, 1200);
  EXPECT_EQ(s[0].count, 5u);
}

TEST(DetectStays, TenMinutesIsTooShort) {
  const auto f = at_point({59.3, 18.0}, 1000, 3, 300);
  EXPECT_TRUE(detect_stays(f, {}).empty());
}

TEST(DetectStays, FewerThanTwoFixes) {
  EXPECT_TRUE(detect_stays(at_point({59.3, 18.0}, 1000, 1, 300), {}).empty());
  EXPECT_TRUE(detect_stays(std::vector<RawFix>{}, {}).empty());
}

TEST(DetectStays, TwoClustersOneKilometreApart) {
  const GeoPoint a{59.3, 18.0};
  const GeoPoint b = fx::offset(a, 0, 1.0);
  auto f = at_point(a, 0, 7, 300);
  auto g = at_point(b, 3000, 7, 300);
  f.insert(f.end(), g.begin(), g.end());
  const auto s = detect_stays(f, {});
  const auto o = oracle::stays(f, 30, 900, 10800);
  ASSERT_EQ(s.size(), 2u);
  ASSERT_EQ(o.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(s[i].start, o[i].start);
    EXPECT_EQ(s[i].end, o[i].end);
  }
  EXPECT_EQ(s[0].end - s[0].start, 1800);
}

TEST(DetectStays, GapLongerThanTmaxSplits) {
  auto f = at_point({59.3, 18.0}, 0, 4, 600);
  auto g = at_point({59.3, 18.0}, 1800 + 10801, 4, 600);
  f.insert(f.end(), g.begin(), g.end());
  EXPECT_EQ(detect_stays(f, {}).size(), 2u);
}

TEST(DetectStays, MatchesNaiveScannerOnRandomTracks) {
  Rng rng({17});
  for (int trial = 0; trial < 60; ++trial) {
    const auto f = random_track(rng, 300);
    const auto s = detect_stays(f, {});
    const auto o = oracle::stays(f, 30, 900, 10800);
    ASSERT_EQ(s.size(), o.size()) << "trial " << trial;
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_EQ(s[i].start, o[i].start);
      EXPECT_EQ(s[i].end, o[i].end);
      EXPECT_EQ(s[i].first, o[i].first);
      EXPECT_EQ(s[i].count, o[i].count);
      EXPECT_NEAR(s[i].mean.lat, o[i].mean_lat, 1e-12);
      EXPECT_NEAR(s[i].mean.lon, o[i].mean_lon, 1e-12);
    }
  }
}

TEST(DetectStays, EveryStayHonoursTminAndTmax) {
  Rng rng({23});
  const StopParams p;
  for (int trial = 0; trial < 30; ++trial) {
    const auto f = random_track(rng, 400);
    for (const auto& s : detect_stays(f, p)) {
      EXPECT_GE(s.end - s.start, p.t_min_s);
      for (std::size_t i = s.first + 1; i < s.first + s.count; ++i) EXPECT_LE(f[i].ts - f[i - 1].ts, p.t_max_s);
    }
  }
}

TEST(DetectStays, AddingMidpointsKeepsTheStay) {
  Rng rng({29});
  for (int trial = 0; trial < 40; ++trial) {
    const GeoPoint c{59.3, 18.0};
    std::vector<RawFix> f;
    std::int64_t t = 10'000;
    for (int i = 0; i < 8; ++i) {
      const GeoPoint p = fx::offset(c, rng.normal(0, 0.004), rng.normal(0, 0.004));
      f.push_back({"d", p.lat, p.lon, t});
      t += 300 + static_cast<std::int64_t>(rng.below(300));
    }
    const auto before = detect_stays(f, {});
    ASSERT_EQ(before.size(), 1u);
    std::vector<RawFix> dense;
    for (std::size_t i = 0; i < f.size(); ++i) {
      dense.push_back(f[i]);
      if (i + 1 < f.size())
        dense.push_back({"d", 0.5 * (f[i].lat + f[i + 1].lat), 0.5 * (f[i].lon + f[i + 1].lon), (f[i].ts + f[i + 1].ts) / 2});
    }
    const auto after = detect_stays(dense, {});
    bool covered = false;
    for (const auto& s : after) covered |= s.start <= before[0].start && s.end >= before[0].end;
    EXPECT_TRUE(covered) << "trial " << trial;
  }
}

TEST(GroupStops, TenMetresShareALabel) {
  const GeoPoint a{59.3, 18.0};
  std::vector<Stay> s = {{0, 1000, a, a, 0, 2}, {2000, 3000, fx::offset(a, 0.010, 0), fx::offset(a, 0.010, 0), 2, 2}};
  const auto l = group_labels(s, 30);
  EXPECT_EQ(l[0], l[1]);
}

TEST(GroupStops, HundredMetresApartDiffer) {
  const GeoPoint a{59.3, 18.0};
  std::vector<Stay> s = {{0, 1000, a, a, 0, 2}, {2000, 3000, fx::offset(a, 0.1, 0), fx::offset(a, 0.1, 0), 2, 2}};
  const auto l = group_labels(s, 30);
  EXPECT_NE(l[0], l[1]);
  EXPECT_EQ(l[0], 0);
  EXPECT_EQ(l[1], 1);
}

TEST(GroupStops, EqualsSingleLinkageComponents) {
  Rng rng({31});
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(49));
    std::vector<Stay> s;
    std::vector<GeoPoint> pts;
    for (int i = 0; i < n; ++i) {
      const GeoPoint p = fx::offset({59.3, 18.0}, rng.uniform(0, 0.2), rng.uniform(0, 0.2));
      s.push_back({i * 10, i * 10 + 5, p, p, 0, 2});
      pts.push_back(p);
    }
    EXPECT_EQ(group_labels(s, 30), oracle::single_linkage(pts, 30)) << "trial " << trial;
  }
}

TEST(DetectAllStops, DeviceOutputIndependentOfOtherDevices) {
  Rng rng({37});
  std::vector<RawFix> all;
  std::vector<std::vector<RawFix>> per;
  for (int d = 0; d < 5; ++d) {
    auto f = random_track(rng, 200);
    for (auto& x : f) x.device_id = "dev" + std::to_string(d);
    per.push_back(f);
    all.insert(all.end(), f.begin(), f.end());
  }
  std::reverse(all.begin(), all.end());
  const FixStream stream(all);
  const auto one = detect_all_stops(stream, {}, 1);
  const auto four = detect_all_stops(stream, {}, 4);
  ASSERT_EQ(one.size(), four.size());
  std::size_t k = 0;
  for (int d = 0; d < 5; ++d) {
    for (const auto& s : detect_stops(per[d], {})) {
      ASSERT_LT(k, one.size());
      EXPECT_EQ(one[k].device_id, s.device_id);
      EXPECT_EQ(one[k].start, s.start);
      EXPECT_EQ(one[k].label, s.label);
      EXPECT_EQ(four[k].start, s.start);
      EXPECT_EQ(four[k].lat, s.lat);
      ++k;
    }
  }
  EXPECT_EQ(k, one.size());
}

TEST(DetectAllStops, DumpRoundTrip) {
  const auto dir = fx::scratch("stops_rt");
  Rng rng({41});
  const FixStream stream(random_track(rng, 300));
  const auto stops = detect_all_stops(stream, {});
  ASSERT_FALSE(stops.empty());
  write_stops(dir / "a.csv", stops);
  const auto back = read_stops(dir / "a.csv");
  write_stops(dir / "b.csv", back);
  EXPECT_EQ(fx::read(dir / "a.csv"), fx::read(dir / "b.csv"));
}

TEST(StopParams, RejectsNonPositive) {
  StopParams p;
  p.r1_m = 0;
  EXPECT_THROW(p.validate(), Error);
}
