#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "support.hpp"

using namespace mad4ag;

TEST(Haversine, IdenticalPointsAreZero) {
  EXPECT_EQ(haversine_km({59.33, 18.06}, {59.33, 18.06}), 0.0);
}

TEST(Haversine, OneDegreeOfLongitudeAtEquator) {
  // R * pi / 180 with R = 6371.0088
  EXPECT_NEAR(haversine_km({0, 0}, {0, 1}), 111.1949, 0.01);
  EXPECT_NEAR(haversine_km({0, 0}, {0, 1}), 6371.0088 * std::numbers::pi / 180.0, 1e-9);
}

TEST(Haversine, StockholmToGothenburg) {
  EXPECT_NEAR(haversine_km({59.33, 18.06}, {57.71, 11.97}), 397.0, 2.0);
}

TEST(Haversine, SymmetricAndTriangleOnRandomTriples) {
  Rng rng({7});
  for (int i = 0; i < 2000; ++i) {
    const GeoPoint a{rng.uniform(-89, 89), rng.uniform(-179, 179)};
    const GeoPoint b{rng.uniform(-89, 89), rng.uniform(-179, 179)};
    const GeoPoint c{rng.uniform(-89, 89), rng.uniform(-179, 179)};
    EXPECT_EQ(haversine_km(a, b), haversine_km(b, a));
    EXPECT_GE(haversine_km(a, b), 0.0);
    EXPECT_LE(haversine_km(a, c), haversine_km(a, b) + haversine_km(b, c) + 1e-9);
  }
}

TEST(HourOf, Examples) {
  EXPECT_EQ(hour_of(0, 0), 0);
  EXPECT_EQ(hour_of(3600, 0), 1);
  EXPECT_EQ(hour_of(82800, 2 * 3600), 1);
}

TEST(HourOf, NegativeOffsetWrapsBackwards) {
  EXPECT_EQ(hour_of(1800, -3600), 23);
  EXPECT_EQ(local_day(1800, -3600), -1);
}

TEST(OverlapHours, FullContainment) {
  const std::int64_t s = 21 * 3600, e = kSecondsPerDay + 5 * 3600 + 59 * 60;
  EXPECT_DOUBLE_EQ(overlap_hours(s, e, 21), 1.0);
  EXPECT_NEAR(overlap_hours(s, e, 5), 59.0 / 60.0, 1e-12);
  EXPECT_DOUBLE_EQ(overlap_hours(s, e, 12), 0.0);
}

TEST(OverlapHours, PartialBuckets) {
  const std::int64_t s = 21 * 3600 + 1800, e = 22 * 3600 + 900;
  EXPECT_DOUBLE_EQ(overlap_hours(s, e, 21), 0.5);
  EXPECT_DOUBLE_EQ(overlap_hours(s, e, 22), 0.25);
}

TEST(OverlapHours, AccumulatesAcrossDays) {
  // 10:30 on day 0 to 11:00 on day 2 touches hour 10 three times.
  const std::int64_t s = 10 * 3600 + 1800, e = 2 * kSecondsPerDay + 11 * 3600;
  EXPECT_DOUBLE_EQ(overlap_hours(s, e, 10), 2.5);
}

TEST(OverlapHours, PartitionsDurationOnRandomIntervals) {
  Rng rng({11});
  for (int i = 0; i < 3000; ++i) {
    const std::int64_t s = 1'500'000'000 + static_cast<std::int64_t>(rng.below(10'000'000));
    const std::int64_t e = s + 1 + static_cast<std::int64_t>(rng.below(12 * 3600));
    const std::int64_t off = static_cast<std::int64_t>(rng.below(5)) * 3600 - 7200;
    double sum = 0, sum_profile = 0;
    const auto prof = overlap_profile(s, e, off);
    for (int h = 0; h < 24; ++h) {
      const double v = overlap_hours(s, e, h, off);
      sum += v;
      sum_profile += prof[h];
      EXPECT_NEAR(v, prof[h], 1e-12);
    }
    EXPECT_NEAR(sum, static_cast<double>(e - s) / 3600.0, 1e-9);
    EXPECT_NEAR(sum_profile, static_cast<double>(e - s) / 3600.0, 1e-9);
  }
}

TEST(ClockInterval, WrappingAndFullDay) {
  const ClockInterval night{18 * 3600, 8 * 3600};
  EXPECT_TRUE(night.contains_hour(18));
  EXPECT_TRUE(night.contains_hour(0));
  EXPECT_TRUE(night.contains_hour(7));
  EXPECT_FALSE(night.contains_hour(8));
  EXPECT_FALSE(night.contains_hour(17));
  EXPECT_EQ(night.duration(), 14 * 3600);
  const ClockInterval full{0, kSecondsPerDay};
  for (int h = 0; h < 24; ++h) EXPECT_TRUE(full.contains_hour(h));
}

TEST(Calendar, CivilRoundTripAndWeekday) {
  EXPECT_EQ(days_from_civil({1970, 1, 1}), 0);
  EXPECT_EQ(weekday_of_day(days_from_civil({2019, 3, 4})), 0);  // Monday
  EXPECT_EQ(weekday_of_day(days_from_civil({2019, 3, 9})), 5);  // Saturday
  for (std::int64_t d = -1000; d < 30000; d += 37) EXPECT_EQ(days_from_civil(civil_from_days(d)), d);
  EXPECT_EQ(format_date(parse_date_day("2019-06-21")), "2019-06-21");
  EXPECT_THROW(parse_date_day("2019-13-01"), Error);
}

TEST(Rng, SameSeedSameStream) {
  Rng a({123}), b({123});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, SplitSeedDependsOnlyOnArguments) {
  const RngSeed m{42};
  EXPECT_EQ(split_seed(m, "match", "g", 3).seed, split_seed(m, "match", "g", 3).seed);
  EXPECT_NE(split_seed(m, "match", "g", 3).seed, split_seed(m, "match", "g", 4).seed);
  EXPECT_NE(split_seed(m, "match", "g").seed, split_seed(m, "secondary", "g").seed);
  EXPECT_NE(split_seed(m, "x", "a").seed, split_seed({43}, "x", "a").seed);
}

TEST(Rng, UniformAndNormalMoments) {
  Rng r({5});
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Rng, BelowIsInRangeAndCoversAll) {
  Rng r({9});
  std::map<std::uint64_t, int> seen;
  for (int i = 0; i < 7000; ++i) {
    const auto v = r.below(7);
    ASSERT_LT(v, 7u);
    ++seen[v];
  }
  EXPECT_EQ(seen.size(), 7u);
  for (const auto& [v, c] : seen) EXPECT_NEAR(c, 1000, 150);
}

TEST(DiscreteTable, FrequenciesFollowWeights) {
  const std::vector<double> w = {1, 0, 3, 6};
  const DiscreteTable t(w);
  Rng r({1});
  std::vector<int> c(4, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++c[t.draw(r)];
  EXPECT_EQ(c[1], 0);
  EXPECT_NEAR(c[0] / double(n), 0.1, 0.01);
  EXPECT_NEAR(c[2] / double(n), 0.3, 0.01);
  EXPECT_NEAR(c[3] / double(n), 0.6, 0.01);
}

TEST(Rng, DiscreteSkipsZeroWeights) {
  Rng r({2});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(r.discrete({0.0, 0.0, 2.0, 0.0}), 2u);
}
