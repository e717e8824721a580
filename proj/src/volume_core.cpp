#include "btk/volume_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <fmt/format.h>

#include "btk/kernels.hpp"

namespace btk {

std::vector<Box> ComponentSet::boxes() const {
  constexpr std::size_t big = std::numeric_limits<std::size_t>::max();
  std::vector<Box> out(count(), Box{{big, big, big}, {0, 0, 0}});
  const auto& e = labels.extents();
  std::size_t i = 0;
  for (std::size_t z = 0; z < e[2]; ++z) {
    for (std::size_t y = 0; y < e[1]; ++y) {
      for (std::size_t x = 0; x < e[0]; ++x, ++i) {
        const std::uint32_t id = labels.data[i];
        if (id == 0) continue;
        Box& b = out[id - 1];
        const std::size_t c[3] = {x, y, z};
        for (int a = 0; a < 3; ++a) {
          b.lo[a] = std::min(b.lo[a], c[a]);
          b.hi[a] = std::max(b.hi[a], c[a] + 1);
        }
      }
    }
  }
  return out;
}

ZScoreResult zscore_normalize(const IntensityVolume& volume, const BinaryMask& mask) {
  require_same_grid(volume, mask, "zscore_normalize");
  std::size_t n = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < volume.size(); ++i) {
    if (mask[i]) {
      ++n;
      sum += volume[i];
    }
  }
  if (n == 0) throw ContractError("zscore_normalize: mask is empty");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < volume.size(); ++i) {
    if (mask[i]) {
      const double d = volume[i] - mean;
      ss += d * d;
    }
  }
  const double sd = std::sqrt(ss / static_cast<double>(n));

  ZScoreResult r;
  r.mean = mean;
  r.stddev = sd;
  r.volume = IntensityVolume(volume.geometry, 0.0f);
  if (!std::isfinite(mean) || !std::isfinite(sd)) throw DataError("zscore_normalize: non-finite intensities in mask");
  if (sd == 0.0) {
    r.warnings.push_back(fmt::format("zscore_normalize: zero variance over {} masked voxels; output set to 0", n));
    return r;
  }
  for (std::size_t i = 0; i < volume.size(); ++i) {
    if (mask[i]) r.volume[i] = static_cast<float>((volume[i] - mean) / sd);
  }
  return r;
}

double otsu_threshold(const IntensityVolume& volume, std::size_t bins) {
  if (bins < 2) throw ContractError("otsu_threshold: need at least 2 bins");
  if (volume.size() == 0) throw DegenerateInputError("otsu_threshold: empty volume");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (float v : volume.data) {
    if (!std::isfinite(v)) throw DataError("otsu_threshold: non-finite intensity");
    lo = std::min<double>(lo, v);
    hi = std::max<double>(hi, v);
  }
  if (!(hi > lo)) throw DegenerateInputError("otsu_threshold: volume is constant, no separable classes");

  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> hist(bins, 0.0);
  for (float v : volume.data) {
    auto k = static_cast<std::size_t>((v - lo) / width);
    hist[std::min(k, bins - 1)] += 1.0;
  }
  auto centre = [&](std::size_t k) { return lo + (static_cast<double>(k) + 0.5) * width; };

  double total = 0.0, total_sum = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    total += hist[k];
    total_sum += hist[k] * centre(k);
  }

  // sigma[k]: between-class variance when class 0 = bins 0..k.
  std::vector<double> sigma(bins - 1, -1.0);
  double w0 = 0.0, s0 = 0.0;
  for (std::size_t k = 0; k + 1 < bins; ++k) {
    w0 += hist[k];
    s0 += hist[k] * centre(k);
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = s0 / w0, m1 = (total_sum - s0) / w1;
    sigma[k] = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
  }
  const double best = *std::max_element(sigma.begin(), sigma.end());
  std::size_t first = 0;
  while (sigma[first] != best) ++first;
  std::size_t last = first;
  while (last + 1 < sigma.size() && sigma[last + 1] == best) ++last;
  return 0.5 * (centre(first) + centre(last + 1));
}

BinaryMask fill_holes_per_slice(const BinaryMask& mask) {
  const auto& e = mask.extents();
  BinaryMask out = mask;
  const std::size_t nx = e[0], ny = e[1], plane = nx * ny;
#pragma omp parallel
  {
    std::vector<std::uint8_t> reached(plane);
    std::vector<std::size_t> stack;
#pragma omp for schedule(static)
    for (std::ptrdiff_t zi = 0; zi < static_cast<std::ptrdiff_t>(e[2]); ++zi) {
      const std::size_t off = plane * static_cast<std::size_t>(zi);
      std::fill(reached.begin(), reached.end(), 0);
      stack.clear();
      auto seed = [&](std::size_t x, std::size_t y) {
        const std::size_t j = x + nx * y;
        if (!mask[off + j] && !reached[j]) {
          reached[j] = 1;
          stack.push_back(j);
        }
      };
      for (std::size_t x = 0; x < nx; ++x) {
        seed(x, 0);
        seed(x, ny - 1);
      }
      for (std::size_t y = 0; y < ny; ++y) {
        seed(0, y);
        seed(nx - 1, y);
      }
      while (!stack.empty()) {
        const std::size_t j = stack.back();
        stack.pop_back();
        const std::size_t x = j % nx, y = j / nx;
        if (x > 0) seed(x - 1, y);
        if (x + 1 < nx) seed(x + 1, y);
        if (y > 0) seed(x, y - 1);
        if (y + 1 < ny) seed(x, y + 1);
      }
      for (std::size_t j = 0; j < plane; ++j) {
        if (!mask[off + j] && !reached[j]) out[off + j] = 1;
      }
    }
  }
  return out;
}

ComponentSet connected_components(const BinaryMask& mask, int connectivity) {
  ComponentSet cs;
  cs.connectivity = connectivity;
  cs.labels = Volume<std::uint32_t>(mask.geometry);
  const std::uint32_t k = kernels::label_components(mask.span(), mask.extents(), connectivity, cs.labels.span());
  cs.voxel_counts.assign(k, 0);
  for (std::uint32_t id : cs.labels.data) {
    if (id != 0) ++cs.voxel_counts[id - 1];
  }
  return cs;
}

BinaryMask largest_component(const BinaryMask& mask, int connectivity) {
  const ComponentSet cs = connected_components(mask, connectivity);
  BinaryMask out(mask.geometry, 0);
  if (cs.count() == 0) return out;
  const auto it = std::max_element(cs.voxel_counts.begin(), cs.voxel_counts.end());
  const auto keep = static_cast<std::uint32_t>(it - cs.voxel_counts.begin() + 1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cs.labels[i] == keep ? 1 : 0;
  return out;
}

BinaryMask foreground_mask(const IntensityVolume& volume) {
  const double t = otsu_threshold(volume);
  BinaryMask above(volume.geometry, 0);
  for (std::size_t i = 0; i < volume.size(); ++i) above[i] = volume[i] > t ? 1 : 0;
  BinaryMask head = largest_component(above, 26);
  if (popcount(head) == 0) throw DegenerateInputError("foreground_mask: no voxels above the Otsu threshold");
  return fill_holes_per_slice(head);
}

BinaryMask nonzero_mask(std::span<const IntensityVolume> volumes) {
  if (volumes.empty()) throw ContractError("nonzero_mask: no volumes");
  BinaryMask m(volumes[0].geometry, 0);
  for (const auto& v : volumes) {
    require_same_grid(v, m, "nonzero_mask");
    for (std::size_t i = 0; i < v.size(); ++i) m[i] |= v[i] != 0.0f ? 1 : 0;
  }
  return m;
}

DistanceMap euclidean_distance_transform(const BinaryMask& mask) {
  DistanceMap d(mask.geometry);
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < mask.size(); ++i) d[i] = mask[i] ? 0.0 : inf;
  kernels::squared_edt(d.span(), mask.extents(), mask.geometry.spacing_mm);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(d.size()); ++i) {
    d.data[static_cast<std::size_t>(i)] = std::sqrt(d.data[static_cast<std::size_t>(i)]);
  }
  return d;
}

BinaryMask dilate(const BinaryMask& mask, int radius_voxels) {
  if (radius_voxels < 0) throw ContractError("dilate: radius must be >= 0");
  BinaryMask out(mask.geometry, 0);
  kernels::box_dilate(mask.span(), mask.extents(), static_cast<std::size_t>(radius_voxels), out.span());
  return out;
}

Box bounding_box(const BinaryMask& mask) {
  constexpr std::size_t big = std::numeric_limits<std::size_t>::max();
  Box b{{big, big, big}, {0, 0, 0}};
  const auto& e = mask.extents();
  std::size_t i = 0;
  for (std::size_t z = 0; z < e[2]; ++z) {
    for (std::size_t y = 0; y < e[1]; ++y) {
      for (std::size_t x = 0; x < e[0]; ++x, ++i) {
        if (!mask.data[i]) continue;
        const std::size_t c[3] = {x, y, z};
        for (int a = 0; a < 3; ++a) {
          b.lo[a] = std::min(b.lo[a], c[a]);
          b.hi[a] = std::max(b.hi[a], c[a] + 1);
        }
      }
    }
  }
  if (b.hi[0] == 0) return Box{};
  return b;
}

Box expand_box(const Box& box, std::size_t margin, const Extents& extents) {
  Box b = box;
  for (int a = 0; a < 3; ++a) {
    b.lo[a] = b.lo[a] > margin ? b.lo[a] - margin : 0;
    b.hi[a] = std::min(b.hi[a] + margin, extents[a]);
  }
  return b;
}

}  // namespace btk
