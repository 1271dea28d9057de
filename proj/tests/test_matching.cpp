#include <gtest/gtest.h>

#include <map>
#include <set>

#include "oracles/ipf_oracle.hpp"
#include "support.hpp"

using namespace mad4ag;
using fx::Act;
using AT = ActivityType;

namespace {

SurveyTraveller candidate(const std::string& id, double km, bool other = false, bool work = false,
                          const std::string& seq = "H-W-H") {
  SurveyTraveller s;
  s.participant_id = id;
  s.avg_trip_km = km;
  s.has_other = other;
  s.has_work = work;
  s.sequence = seq;
  return s;
}

DeviceTraveller device(const std::string& id, double km, bool other = true, bool work = true) {
  DeviceTraveller d;
  d.device_id = id;
  d.avg_trip_km = km;
  d.has_other = other;
  d.has_work = work;
  return d;
}

std::vector<std::string> kSequences = {"H", "H-W-H", "H-O-H", "H-W-O-H", "H-O-W-H", "H-O-O-H"};

std::vector<SurveyTraveller> random_group(Rng& rng, std::size_t n) {
  std::vector<SurveyTraveller> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& seq = kSequences[rng.below(kSequences.size())];
    auto c = candidate("P" + std::to_string(10000 + i), rng.uniform(0, 20), seq.find('O') != std::string::npos,
                       seq.find('W') != std::string::npos, seq);
    c.attrs.commute = c.has_work ? (rng.bernoulli(0.5) ? CommuteClass::Long : CommuteClass::Short) : CommuteClass::None;
    out.push_back(c);
  }
  return out;
}

SurveyGroup flat_group(std::size_t n) {
  SurveyGroup g;
  g.key = "all";
  for (std::size_t i = 0; i < n; ++i) g.members.push_back(i);
  return g;
}

}  // namespace

TEST(Classes, TripAndCommuteThresholds) {
  const DistanceThresholds t;
  EXPECT_EQ(classify_trip(5.0, t), DistClass::Long);
  EXPECT_EQ(classify_trip(4.3, t), DistClass::Long);
  EXPECT_EQ(classify_trip(4.29, t), DistClass::Short);
  EXPECT_EQ(classify_commute(std::nullopt, t), CommuteClass::None);
  EXPECT_EQ(classify_commute(8.0, t), CommuteClass::Long);
  EXPECT_EQ(classify_commute(7.0, t), CommuteClass::Short);
}

TEST(Classes, SurveyMedianThresholds) {
  std::vector<SurveyDiary> s;
  for (double km : {1.0, 3.0, 11.0})
    s.push_back(fx::diary("p" + std::to_string(km), {{AT::Home, 0, 8}, {AT::Work, 9, 17, km}, {AT::Home, 18, 24, km}}, true));
  const auto t = survey_median_thresholds(s);
  EXPECT_DOUBLE_EQ(t.trip_km, 3.0);
  EXPECT_DOUBLE_EQ(t.commute_km, 3.0);
}

TEST(Device, TravellerProfile) {
  auto dev = fx::device("d", {fx::location(0, 59.3, 18.0, fx::daily(10, 18, 32)),
                              fx::location(1, 59.3, 18.0, fx::daily(10, 9, 17)),
                              fx::location(2, 59.3, 18.0, fx::daily(2, 17, 18))});
  const GeoPoint home{59.3, 18.0};
  const GeoPoint w = fx::offset(home, 10, 0), o = fx::offset(home, 0, 4);
  dev.locations[1].lat = w.lat;
  dev.locations[1].lon = w.lon;
  dev.locations[2].lat = o.lat;
  dev.locations[2].lon = o.lon;
  PrimaryAssignment p{"d", 0, 50.0, 1, 80.0};
  Zone z;
  z.region = Region::Norrland;
  z.density = UrbanDensity::Low;
  const auto t = device_traveller(dev, p, z, {});
  EXPECT_TRUE(t.has_work);
  EXPECT_TRUE(t.has_other);
  ASSERT_TRUE(t.commute_km);
  EXPECT_NEAR(*t.commute_km, haversine_km(home, w), 1e-12);
  EXPECT_NEAR(t.avg_trip_km, (10 * haversine_km(home, w) + 2 * haversine_km(home, o)) / 12, 1e-12);
  EXPECT_EQ(t.attrs.region, Region::Norrland);
  EXPECT_EQ(t.attrs.trip, DistClass::Long);
  EXPECT_EQ(t.attrs.commute, CommuteClass::Long);
  p.work_location_id.reset();
  const auto t2 = device_traveller(dev, p, z, {});
  EXPECT_FALSE(t2.has_work);
  EXPECT_EQ(t2.attrs.commute, CommuteClass::None);
}

TEST(Grouping, SmallRegionIsNotSubdivided) {
  std::vector<SurveyDiary> s;
  for (int i = 0; i < 40; ++i)
    s.push_back(fx::diary("N" + std::to_string(i), {{AT::Home, 0, 24}}, i % 2, UrbanDensity::High, Region::Norrland));
  for (int i = 0; i < 120; ++i)
    s.push_back(fx::diary("S" + std::to_string(i), {{AT::Home, 0, 24}}, i % 2, i % 3 ? UrbanDensity::High : UrbanDensity::Low));
  const SurveyGrouping g(survey_travellers(s, {}), 50);
  ASSERT_TRUE(g.root().subdivided);
  const auto& norr = *g.root().children.at(static_cast<int>(Region::Norrland));
  EXPECT_FALSE(norr.subdivided);
  EXPECT_EQ(norr.members.size(), 40u);
  EXPECT_TRUE(g.root().children.at(static_cast<int>(Region::Svealand))->subdivided);
  TravellerAttributes a;
  a.region = Region::Norrland;
  a.employed = true;
  EXPECT_EQ(&g.group_for(a), &norr);
  a.region = Region::Gotaland;  // no participants: stays at the root
  EXPECT_EQ(&g.group_for(a), &g.root());
  EXPECT_THROW(SurveyGrouping({}, 50), Error);
}

TEST(Grouping, EveryDeviceMapsToAPrefixGroup) {
  Rng rng({401});
  std::vector<SurveyDiary> s;
  for (int i = 0; i < 600; ++i) {
    const double km = rng.uniform(0.5, 12);
    const bool emp = rng.bernoulli(0.6);
    const auto reg = static_cast<Region>(rng.below(3));
    const auto den = rng.bernoulli(0.5) ? UrbanDensity::High : UrbanDensity::Low;
    if (emp) s.push_back(fx::diary("P" + std::to_string(i), {{AT::Home, 0, 8}, {AT::Work, 9, 17, km}, {AT::Home, 18, 24, km}}, true, den, reg));
    else s.push_back(fx::diary("P" + std::to_string(i), {{AT::Home, 0, 10}, {AT::Other, 11, 12, km}, {AT::Home, 13, 24, km}}, false, den, reg));
  }
  const SurveyGrouping g(survey_travellers(s, {}), 50);
  std::set<const SurveyGroup*> all;
  for (const auto* x : g.groups()) all.insert(x);
  for (int trial = 0; trial < 500; ++trial) {
    TravellerAttributes a{static_cast<Region>(rng.below(3)), rng.bernoulli(0.5) ? UrbanDensity::High : UrbanDensity::Low,
                          rng.bernoulli(0.5), rng.bernoulli(0.5) ? DistClass::Long : DistClass::Short,
                          static_cast<CommuteClass>(rng.below(3))};
    const auto& grp = g.group_for(a);
    EXPECT_TRUE(all.count(&grp));
    EXPECT_FALSE(grp.members.empty());
    for (int l = 0; l < grp.depth; ++l) EXPECT_EQ(attribute_value(grp.prefix, l), attribute_value(a, l));
    for (std::size_t m : grp.members)
      for (int l = 0; l < grp.depth; ++l) EXPECT_EQ(attribute_value(g.travellers()[m].attrs, l), attribute_value(a, l));
  }
}

TEST(MatchIpf, UniformFixedPoint) {
  std::vector<MatchCell> cells;
  for (std::size_t i = 0; i < 4; ++i) cells.push_back({i, i % 2, i / 2, 0});
  const auto t = matching_probabilities(cells, 4, {0.5, 0.5}, {0.5, 0.5});
  EXPECT_TRUE(t.converged);
  EXPECT_EQ(t.iterations, 1);
  for (const auto& c : t.cells) EXPECT_DOUBLE_EQ(c.p, 0.25);
}

TEST(MatchIpf, TwoByTwoHandIterated) {
  // Participant i has commuting type i and may carry either sequence type.
  std::vector<MatchCell> cells;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t s = 0; s < 2; ++s) cells.push_back({i, i, s, 0});
  const auto t = matching_probabilities(cells, 2, {0.5, 0.5}, {0.75, 0.25});
  // Start 1/2 each; rows halve to 1/4; columns scale by 3/2 and 1/2; total 1.
  ASSERT_TRUE(t.converged);
  EXPECT_NEAR(t.cells[0].p, 0.375, 1e-9);
  EXPECT_NEAR(t.cells[1].p, 0.125, 1e-9);
  EXPECT_NEAR(t.cells[2].p, 0.375, 1e-9);
  EXPECT_NEAR(t.cells[3].p, 0.125, 1e-9);
}

TEST(MatchIpf, RandomMaskedTablesMatchDenseOracle) {
  Rng rng({403});
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t N = 1 + rng.below(6), K = 1 + rng.below(3), S = 1 + rng.below(4);
    std::vector<char> mask(N * K * S, 0);
    for (auto& m : mask) m = rng.bernoulli(0.6);
    // Every row and column needs support; patch with one diagonal-ish cell each.
    for (std::size_t k = 0; k < K; ++k) mask[(rng.below(N) * K + k) * S + rng.below(S)] = 1;
    for (std::size_t s = 0; s < S; ++s) mask[(rng.below(N) * K + rng.below(K)) * S + s] = 1;
    // Feasible marginals: those of a random positive table on the mask.
    std::vector<double> D(K, 0), Sm(S, 0);
    double tot = 0;
    std::vector<MatchCell> cells;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t s = 0; s < S; ++s) {
          if (!mask[(i * K + k) * S + s]) continue;
          const double q = rng.uniform(0.1, 1);
          D[k] += q;
          Sm[s] += q;
          tot += q;
          cells.push_back({i, k, s, 0});
        }
    for (auto& x : D) x /= tot;
    for (auto& x : Sm) x /= tot;
    const auto got = matching_probabilities(cells, N, D, Sm, 1e-13, 200000);
    auto want = oracle::ipf_dense(N, K, S, mask, D, Sm);
    ASSERT_TRUE(got.converged) << trial;
    for (const auto& c : got.cells) EXPECT_NEAR(c.p, want.at(c.participant, c.k, c.s), 1e-9) << trial;
    for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(got.row_sum(k), D[k], 1e-6);
    for (std::size_t s = 0; s < S; ++s) EXPECT_NEAR(got.col_sum(s), Sm[s], 1e-6);
    EXPECT_NEAR(got.total(), 1.0, 1e-12);
    // Default tolerance also meets the marginals.
    const auto def = matching_probabilities(cells, N, D, Sm);
    for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(def.row_sum(k), D[k], 1e-6);
  }
}

TEST(MatchIpf, ZeroMarginalCellsPinnedAtZero) {
  std::vector<MatchCell> cells = {{0, 0, 0, 0}, {1, 1, 0, 0}, {2, 0, 1, 0}};
  const auto t = matching_probabilities(cells, 3, {1.0, 0.0}, {0.5, 0.5});
  EXPECT_EQ(t.zero_marginal_cells, (std::vector<std::size_t>{1}));
  EXPECT_EQ(t.cells[1].p, 0.0);
  EXPECT_TRUE(t.converged);
  EXPECT_NEAR(t.cells[0].p, 0.5, 1e-9);
  EXPECT_NEAR(t.cells[2].p, 0.5, 1e-9);
  for (const auto& c : t.cells) EXPECT_GE(c.p, 0.0);
}

TEST(Assign, SingleDeviceSingleParticipant) {
  Rng rng({405});
  const std::vector<DeviceTraveller> d = {device("d", 3)};
  const std::vector<SurveyTraveller> c = {candidate("p", 7)};
  const std::vector<double> p = {1.0};
  EXPECT_EQ(assign_twins(d, c, p, rng), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}}));
}

TEST(Assign, RankOrderPairing) {
  const std::vector<DeviceTraveller> d = {device("far", 9), device("near", 1)};
  const std::vector<SurveyTraveller> c = {candidate("p8", 8), candidate("p2", 2)};
  const std::vector<double> p = {0.5, 0.5};
  bool seen_both = false;
  for (std::uint64_t seed = 1; seed < 50 && !seen_both; ++seed) {
    Rng rng({seed});
    const auto pairs = assign_twins(d, c, p, rng);
    ASSERT_EQ(pairs.size(), 2u);
    if (pairs[0].second != pairs[1].second) {
      seen_both = true;
      EXPECT_EQ(pairs[0], (std::pair<std::size_t, std::size_t>{0, 0}));  // 9 km with 8 km
      EXPECT_EQ(pairs[1], (std::pair<std::size_t, std::size_t>{1, 1}));  // 1 km with 2 km
    }
  }
  EXPECT_TRUE(seen_both);
}

TEST(Assign, RankIsomorphismWhenAllCompatible) {
  Rng rng({407});
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<DeviceTraveller> d;
    for (int i = 0; i < 40; ++i) d.push_back(device("d" + std::to_string(100 + i), rng.uniform(0, 30)));
    const auto c = random_group(rng, 15);
    std::vector<double> p(c.size(), 1.0);
    const auto pairs = assign_twins(d, c, p, rng);
    ASSERT_EQ(pairs.size(), d.size());
    for (const auto& [a, x] : pairs)
      for (const auto& [b, y] : pairs)
        if (d[a].avg_trip_km < d[b].avg_trip_km) { EXPECT_LE(c[x].avg_trip_km, c[y].avg_trip_km); }
  }
}

TEST(Assign, NoSecondaryConstraintAlwaysHolds) {
  Rng rng({409});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<DeviceTraveller> d;
    for (int i = 0; i < 30; ++i)
      d.push_back(device("d" + std::to_string(100 + i), rng.uniform(0, 30), rng.bernoulli(0.5), rng.bernoulli(0.7)));
    auto c = random_group(rng, 12);
    c.push_back(candidate("P_home", 0.0, false, false, "H"));  // always compatible
    std::vector<double> p(c.size(), 1.0);
    AssignmentReport rep;
    const auto pairs = assign_twins(d, c, p, rng, &rep);
    ASSERT_EQ(pairs.size(), d.size());
    std::set<std::size_t> devs;
    for (const auto& [a, x] : pairs) {
      devs.insert(a);
      EXPECT_TRUE(twin_compatible(d[a], c[x])) << trial;
    }
    EXPECT_EQ(devs.size(), d.size());
  }
}

TEST(Assign, UnrepairableWithoutAnyCompatibleParticipant) {
  Rng rng({411});
  const std::vector<DeviceTraveller> d = {device("d", 1, false, false)};
  const std::vector<SurveyTraveller> c = {candidate("p", 1, true, true)};
  const std::vector<double> p = {1.0};
  EXPECT_THROW(assign_twins(d, c, p, rng), Error);
}

TEST(Assign, SampledSequencesFollowMarginal) {
  Rng rng({413});
  const auto c = random_group(rng, 120);
  const auto g = flat_group(c.size());
  const auto table = group_table(g, c, {}, {});
  ASSERT_TRUE(table.converged);
  std::vector<double> prob(c.size(), 0.0);
  for (const auto& cell : table.cells) prob[cell.participant] += cell.p;
  std::vector<DeviceTraveller> d;
  for (int i = 0; i < 10000; ++i) d.push_back(device("d" + std::to_string(100000 + i), rng.uniform(0, 20)));
  const auto pairs = assign_twins(d, c, prob, rng);
  Distribution sampled, marginal;
  for (const auto& [a, x] : pairs) sampled.mass[c[x].sequence] += 1;
  for (const auto& s : c) marginal.mass[s.sequence] += 1;
  EXPECT_LE(js_distance(sampled, marginal), 0.05);
}

TEST(MatchTwins, TotalSeededAndCategoryRespecting) {
  Rng rng({415});
  std::vector<SurveyDiary> s;
  for (int i = 0; i < 400; ++i) {
    const double km = rng.uniform(0.5, 12);
    const auto reg = static_cast<Region>(rng.below(2));
    if (i % 3) s.push_back(fx::diary("P" + std::to_string(1000 + i), {{AT::Home, 0, 8}, {AT::Work, 9, 17, km}, {AT::Home, 18, 24, km}}, true, UrbanDensity::High, reg));
    else s.push_back(fx::diary("P" + std::to_string(1000 + i), {{AT::Home, 0, 10}, {AT::Other, 11, 12, km}, {AT::Home, 13, 24, km}}, false, UrbanDensity::High, reg));
  }
  const SurveyGrouping g(survey_travellers(s, {}), 50);
  std::vector<DeviceTraveller> d;
  for (int i = 0; i < 300; ++i) {
    auto x = device("d" + std::to_string(1000 + i), rng.uniform(0, 12), true, i % 2);
    x.attrs.region = static_cast<Region>(rng.below(3));
    x.attrs.employed = x.has_work;
    x.attrs.trip = classify_trip(x.avg_trip_km, {});
    x.attrs.commute = x.has_work ? CommuteClass::Short : CommuteClass::None;
    d.push_back(x);
  }
  MatchReport rep;
  const auto a = match_twins(d, g, {}, {7}, 3, &rep);
  ASSERT_EQ(a.size(), 3 * d.size());
  std::map<std::string, const SurveyTraveller*> by_id;
  for (const auto& t : g.travellers()) by_id[t.participant_id] = &t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& dev = d[i % d.size()];
    EXPECT_EQ(a[i].sim_day, static_cast<int>(i / d.size()));
    EXPECT_EQ(a[i].device_id, dev.device_id);
    EXPECT_EQ(a[i].category, g.group_for(dev.attrs).key);
    EXPECT_TRUE(twin_compatible(dev, *by_id.at(a[i].participant_id)));
  }
  const auto again = match_twins(d, g, {}, {7}, 3);
  const auto other = match_twins(d, g, {}, {8}, 3);
  std::size_t same = 0, diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(again[i].participant_id, a[i].participant_id);
    (other[i].participant_id == a[i].participant_id ? same : diff)++;
  }
  EXPECT_GT(diff, 0u);

  const auto dir = fx::scratch("twins_rt");
  write_twins(dir / "t.csv", a);
  const auto back = read_twins(dir / "t.csv");
  write_twins(dir / "u.csv", back);
  EXPECT_EQ(fx::read(dir / "t.csv"), fx::read(dir / "u.csv"));
}

TEST(MatchTwins, SeedChangeKeepsGroupSequenceShares) {
  Rng rng({417});
  const auto c = random_group(rng, 200);
  const SurveyGrouping g(c, 100000);  // one group
  std::vector<DeviceTraveller> d;
  for (int i = 0; i < 5000; ++i) d.push_back(device("d" + std::to_string(100000 + i), rng.uniform(0, 20)));
  const auto a = match_twins(d, g, {}, {1}, 1), b = match_twins(d, g, {}, {2}, 1);
  std::map<std::string, std::string> seq;
  for (const auto& t : c) seq[t.participant_id] = t.sequence;
  Distribution da, db;
  for (const auto& t : a) da.mass[seq[t.participant_id]] += 1;
  for (const auto& t : b) db.mass[seq[t.participant_id]] += 1;
  EXPECT_LE(js_distance(da, db), 0.05);
}
