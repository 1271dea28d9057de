#pragma once

#include <algorithm>
#include <deque>
#include <numeric>
#include <span>
#include <vector>

#include "mad4ag/core.hpp"

namespace mad4ag {

struct DbscanParams {
  double eps_m = 100.0;
  std::size_t min_pts = 1;

  void validate() const {
    if (!(eps_m > 0) || min_pts < 1) throw config_error("DBSCAN needs eps > 0 and min_pts >= 1");
  }
};

inline constexpr int kNoise = -1;

/// DBSCAN under the haversine metric. A point is core when at least min_pts
/// points (itself included) lie within eps. Clusters are the connected
/// components of core points; a border point joins the cluster of its first
/// core neighbour in (lat, lon, index) order. Cluster ids are dense and
/// ordered by the smallest input index among each cluster's core points.
inline std::vector<int> dbscan(std::span<const GeoPoint> points, const DbscanParams& p) {
  p.validate();
  const std::size_t n = points.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  // Canonical order doubles as the latitude sweep order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (points[a].lat != points[b].lat) return points[a].lat < points[b].lat;
    if (points[a].lon != points[b].lon) return points[a].lon < points[b].lon;
    return a < b;
  });
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;
  std::vector<double> lats(n);
  for (std::size_t r = 0; r < n; ++r) lats[r] = points[order[r]].lat;
  const double dlat = km_to_lat_deg(p.eps_m / 1000.0) * (1.0 + 1e-9);

  // Neighbours of the point at canonical rank r, as canonical ranks ascending.
  auto neighbours = [&](std::size_t r, std::vector<std::size_t>& out) {
    out.clear();
    const auto lo = std::lower_bound(lats.begin(), lats.end(), lats[r] - dlat) - lats.begin();
    const auto hi = std::upper_bound(lats.begin(), lats.end(), lats[r] + dlat) - lats.begin();
    const GeoPoint& pr = points[order[r]];
    for (auto q = lo; q < hi; ++q)
      if (haversine_m(pr, points[order[static_cast<std::size_t>(q)]]) <= p.eps_m) out.push_back(static_cast<std::size_t>(q));
  };

  std::vector<char> core(n, 0);
  std::vector<std::size_t> nb;
  for (std::size_t r = 0; r < n; ++r) {
    neighbours(r, nb);
    core[r] = nb.size() >= p.min_pts;
  }

  // Components of core points, by canonical rank.
  std::vector<int> comp(n, kNoise);
  int ncomp = 0;
  std::deque<std::size_t> queue;
  for (std::size_t r = 0; r < n; ++r) {
    if (!core[r] || comp[r] != kNoise) continue;
    comp[r] = ncomp;
    queue.push_back(r);
    while (!queue.empty()) {
      const std::size_t c = queue.front();
      queue.pop_front();
      neighbours(c, nb);
      for (std::size_t q : nb) {
        if (core[q] && comp[q] == kNoise) {
          comp[q] = ncomp;
          queue.push_back(q);
        }
      }
    }
    ++ncomp;
  }

  // Border points: first core neighbour in canonical order.
  for (std::size_t r = 0; r < n; ++r) {
    if (core[r]) continue;
    neighbours(r, nb);
    for (std::size_t q : nb) {
      if (core[q]) {
        comp[r] = comp[q];
        break;
      }
    }
  }

  // Renumber by smallest input index of each cluster's core points.
  std::vector<std::size_t> min_index(static_cast<std::size_t>(ncomp), n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rank[i];
    if (core[r]) min_index[static_cast<std::size_t>(comp[r])] = std::min(min_index[static_cast<std::size_t>(comp[r])], i);
  }
  std::vector<int> by_first(static_cast<std::size_t>(ncomp));
  std::iota(by_first.begin(), by_first.end(), 0);
  std::sort(by_first.begin(), by_first.end(),
            [&](int a, int b) { return min_index[static_cast<std::size_t>(a)] < min_index[static_cast<std::size_t>(b)]; });
  std::vector<int> rename(static_cast<std::size_t>(ncomp));
  for (int k = 0; k < ncomp; ++k) rename[static_cast<std::size_t>(by_first[static_cast<std::size_t>(k)])] = k;
  for (std::size_t i = 0; i < n; ++i) {
    const int c = comp[rank[i]];
    labels[i] = c == kNoise ? kNoise : rename[static_cast<std::size_t>(c)];
  }
  return labels;
}

}  // namespace mad4ag
