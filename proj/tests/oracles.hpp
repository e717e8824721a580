#pragma once

// Brute-force reference implementations. Slow on purpose; every fast path in
// the library is checked against one of these.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <vector>

#include "btk/volume.hpp"

namespace oracle {

using btk::BinaryMask;
using btk::Extents;
using btk::Spacing;

inline double squared_distance(const std::array<std::size_t, 3>& a, const std::array<std::size_t, 3>& b,
                               const Spacing& s) {
  double d = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double t = (static_cast<double>(a[k]) - static_cast<double>(b[k])) * s[k];
    d += t * t;
  }
  return d;
}

/// Distance from every voxel to the nearest foreground voxel by exhaustive
/// search over all foreground voxels.
inline std::vector<double> edt(const BinaryMask& m) {
  std::vector<std::array<std::size_t, 3>> sites;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i]) sites.push_back(m.geometry.coords(i));
  }
  std::vector<double> out(m.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto c = m.geometry.coords(i);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : sites) best = std::min(best, squared_distance(c, s, m.geometry.spacing_mm));
    out[i] = std::sqrt(best);
  }
  return out;
}

inline bool adjacent(int dx, int dy, int dz, int connectivity) {
  const int n = std::abs(dx) + std::abs(dy) + std::abs(dz);
  if (n == 0) return false;
  if (connectivity == 6) return n == 1;
  if (connectivity == 18) return n <= 2;
  return true;
}

/// Breadth-first flood fill started from each unlabelled foreground voxel in
/// raster order, so ids follow each component's smallest linear index.
inline std::vector<std::uint32_t> components(const BinaryMask& m, int connectivity, std::uint32_t* count = nullptr) {
  const auto& e = m.extents();
  std::vector<std::uint32_t> lab(m.size(), 0);
  std::uint32_t next = 0;
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (!m[s] || lab[s]) continue;
    lab[s] = ++next;
    std::deque<std::size_t> q{s};
    while (!q.empty()) {
      const auto c = m.geometry.coords(q.front());
      q.pop_front();
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!adjacent(dx, dy, dz, connectivity)) continue;
            const long x = static_cast<long>(c[0]) + dx, y = static_cast<long>(c[1]) + dy,
                       z = static_cast<long>(c[2]) + dz;
            if (x < 0 || y < 0 || z < 0 || x >= static_cast<long>(e[0]) || y >= static_cast<long>(e[1]) ||
                z >= static_cast<long>(e[2]))
              continue;
            const std::size_t j = m.geometry.index(static_cast<std::size_t>(x), static_cast<std::size_t>(y),
                                                   static_cast<std::size_t>(z));
            if (m[j] && !lab[j]) {
              lab[j] = next;
              q.push_back(j);
            }
          }
    }
  }
  if (count) *count = next;
  return lab;
}

inline double dice(const BinaryMask& a, const BinaryMask& b) {
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] != 0;
    nb += b[i] != 0;
    both += a[i] && b[i];
  }
  return na + nb == 0 ? 1.0 : 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

/// Foreground voxels with a face neighbour that is background or off-grid.
inline std::vector<std::array<std::size_t, 3>> surface(const BinaryMask& m) {
  const auto& e = m.extents();
  std::vector<std::array<std::size_t, 3>> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m[i]) continue;
    const auto c = m.geometry.coords(i);
    bool edge = false;
    for (int a = 0; a < 3 && !edge; ++a) {
      for (int d : {-1, 1}) {
        auto n = c;
        if ((d < 0 && c[a] == 0) || (d > 0 && c[a] + 1 == e[a])) {
          edge = true;
          break;
        }
        n[a] = c[a] + static_cast<std::size_t>(d);
        if (!m.at(n[0], n[1], n[2])) {
          edge = true;
          break;
        }
      }
    }
    if (edge) out.push_back(c);
  }
  return out;
}

/// Pooled symmetric surface distances, 95th percentile by nearest rank.
inline double hd95(const BinaryMask& a, const BinaryMask& b, double penalty) {
  const auto sa = surface(a), sb = surface(b);
  if (sa.empty() && sb.empty()) return 0.0;
  if (sa.empty() || sb.empty()) return penalty;
  const auto& sp = a.geometry.spacing_mm;
  std::vector<double> d;
  for (const auto* pair : {&sa, &sb}) {
    const auto& from = *pair;
    const auto& to = pair == &sa ? sb : sa;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, squared_distance(p, q, sp));
      d.push_back(std::sqrt(best));
    }
  }
  std::sort(d.begin(), d.end());
  std::size_t rank = 0;
  while (static_cast<double>(rank) < 0.95 * static_cast<double>(d.size()) - 1e-9) ++rank;
  return d[std::max<std::size_t>(rank, 1) - 1];
}

/// Exhaustive Otsu over `bins` equal-width bins; ties on a contiguous run of
/// optimal splits resolve to the midpoint of the run.
inline double otsu(const std::vector<float>& v, std::size_t bins = 256) {
  const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
  const double w = (hi - lo) / static_cast<double>(bins);
  auto bin = [&](float x) { return std::min(static_cast<std::size_t>((x - lo) / w), bins - 1); };
  auto centre = [&](std::size_t k) { return lo + (static_cast<double>(k) + 0.5) * w; };
  std::vector<double> score(bins - 1, -1.0);
  for (std::size_t k = 0; k + 1 < bins; ++k) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (float x : v) {
      const std::size_t b = bin(x);
      (b <= k ? n0 : n1) += 1;
      (b <= k ? s0 : s1) += centre(b);
    }
    if (n0 == 0 || n1 == 0) continue;
    const double n = n0 + n1, m0 = s0 / n0, m1 = s1 / n1;
    score[k] = (n0 / n) * (n1 / n) * (m0 - m1) * (m0 - m1);
  }
  const double best = *std::max_element(score.begin(), score.end());
  // Scores are accumulated in a different order than the library; treat
  // near-equal values as ties.
  auto tied = [&](double s) { return s >= best * (1 - 1e-12); };
  std::size_t first = 0;
  while (!tied(score[first])) ++first;
  std::size_t last = first;
  while (last + 1 < score.size() && tied(score[last + 1])) ++last;
  return 0.5 * (centre(first) + centre(last + 1));
}

}  // namespace oracle
