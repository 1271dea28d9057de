#pragma once

// O(n^2) DBSCAN: full distance matrix, union-find over core pairs.

#include <algorithm>
#include <numeric>
#include <vector>

#include "mad4ag/core.hpp"

namespace oracle {

inline std::vector<int> dbscan(const std::vector<mad4ag::GeoPoint>& pts, double eps_m, std::size_t min_pts) {
  const std::size_t n = pts.size();
  std::vector<std::vector<char>> near(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) near[i][j] = mad4ag::haversine_m(pts[i], pts[j]) <= eps_m;

  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) c += near[i][j];
    core[i] = c >= min_pts;
  }

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (core[i] && core[j] && near[i][j]) parent[std::max(find(i), find(j))] = std::min(find(i), find(j));

  // Border points follow their first core neighbour in (lat, lon, index) order.
  auto before = [&](std::size_t a, std::size_t b) {
    if (pts[a].lat != pts[b].lat) return pts[a].lat < pts[b].lat;
    if (pts[a].lon != pts[b].lon) return pts[a].lon < pts[b].lon;
    return a < b;
  };
  std::vector<long> root(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      root[i] = static_cast<long>(find(i));
      continue;
    }
    long pick = -1;
    for (std::size_t j = 0; j < n; ++j)
      if (core[j] && near[i][j] && (pick < 0 || before(j, static_cast<std::size_t>(pick)))) pick = static_cast<long>(j);
    if (pick >= 0) root[i] = static_cast<long>(find(static_cast<std::size_t>(pick)));
  }

  // Union-find roots are the smallest core index of each component already.
  std::vector<long> roots;
  for (std::size_t i = 0; i < n; ++i)
    if (core[i] && find(i) == i) roots.push_back(static_cast<long>(i));
  std::vector<int> labels(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (root[i] < 0) continue;
    labels[i] = static_cast<int>(std::lower_bound(roots.begin(), roots.end(), root[i]) - roots.begin());
  }
  return labels;
}

}  // namespace oracle
