#include "btk/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace btk::kernels {

namespace detail {

namespace {

constexpr std::array<std::array<int, 3>, 13> kBackward26 = {{
    {-1, 0, 0}, {0, -1, 0}, {0, 0, -1},                                                  // faces
    {-1, -1, 0}, {1, -1, 0}, {-1, 0, -1}, {1, 0, -1}, {0, -1, -1}, {0, 1, -1},           // edges
    {-1, -1, -1}, {1, -1, -1}, {-1, 1, -1}, {1, 1, -1},                                  // corners
}};

}  // namespace

void check_connectivity(int connectivity) {
  if (connectivity != 6 && connectivity != 18 && connectivity != 26) {
    throw ContractError("connectivity must be 6, 18 or 26");
  }
}

std::span<const std::array<int, 3>> backward_offsets(int connectivity) {
  check_connectivity(connectivity);
  const std::size_t n = connectivity == 6 ? 3 : connectivity == 18 ? 9 : 13;
  return std::span(kBackward26).first(n);
}

void edt_line(const double* f, double* out, std::size_t n, double step, std::size_t* v, double* z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::ptrdiff_t k = -1;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    const double xq = step * static_cast<double>(q);
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const double xv = step * static_cast<double>(v[k]);
      s = ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
      if (s <= z[k]) {
        --k;  // z[0] is -inf, so k never drops below 0 here
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    std::fill(out, out + n, inf);
    return;
  }
  std::ptrdiff_t j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double xq = step * static_cast<double>(q);
    while (z[j + 1] < xq) ++j;
    const double d = xq - step * static_cast<double>(v[j]);
    out[q] = d * d + f[v[j]];
  }
}

}  // namespace detail

namespace {

struct LineScratch {
  std::vector<double> in, out, z;
  std::vector<std::size_t> v;
  explicit LineScratch(std::size_t n) : in(n), out(n), z(n + 1), v(n) {}
};

// Transform every line along `axis`. Lines are independent, so the result is
// the same for any scheduling.
void edt_axis(std::span<double> f, const Extents& e, double step, int axis) {
  const std::size_t n = e[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? e[0] : e[0] * e[1];
  const std::size_t lines = f.size() / n;
  const std::size_t nx = e[0], ny = e[1];
#pragma omp parallel
  {
    LineScratch s(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t li = 0; li < static_cast<std::ptrdiff_t>(lines); ++li) {
      const auto l = static_cast<std::size_t>(li);
      std::size_t base;
      if (axis == 0) {
        base = l * nx;
      } else if (axis == 1) {
        base = (l % nx) + (l / nx) * nx * ny;
      } else {
        base = l;
      }
      for (std::size_t i = 0; i < n; ++i) s.in[i] = f[base + i * stride];
      detail::edt_line(s.in.data(), s.out.data(), n, step, s.v.data(), s.z.data());
      for (std::size_t i = 0; i < n; ++i) f[base + i * stride] = s.out[i];
    }
  }
}

std::uint32_t find_root(std::vector<std::uint32_t>& parent, std::uint32_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

// Smaller root wins, so parent[i] <= i holds throughout.
void unite(std::vector<std::uint32_t>& parent, std::uint32_t a, std::uint32_t b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a < b) {
    parent[b] = a;
  } else if (b < a) {
    parent[a] = b;
  }
}

void unite_with_neighbours(std::span<const std::uint8_t> mask, const Extents& e,
                           std::span<const std::array<int, 3>> offsets, std::vector<std::uint32_t>& parent,
                           std::size_t x, std::size_t y, std::size_t z, std::size_t zmin, bool only_lower_plane) {
  const std::size_t nx = e[0], ny = e[1];
  const std::size_t i = x + nx * (y + ny * z);
  for (const auto& o : offsets) {
    if (only_lower_plane && o[2] != -1) continue;
    const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(x) + o[0];
    const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + o[1];
    const std::ptrdiff_t zz = static_cast<std::ptrdiff_t>(z) + o[2];
    if (xx < 0 || yy < 0 || zz < static_cast<std::ptrdiff_t>(zmin) || xx >= static_cast<std::ptrdiff_t>(nx) ||
        yy >= static_cast<std::ptrdiff_t>(ny)) {
      continue;
    }
    const std::size_t j = static_cast<std::size_t>(xx) + nx * (static_cast<std::size_t>(yy) + ny * static_cast<std::size_t>(zz));
    if (mask[j]) unite(parent, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
  }
}

}  // namespace

void squared_edt(std::span<double> f, const Extents& extents, const Spacing& spacing) {
  if (f.empty()) return;
  for (int axis = 0; axis < 3; ++axis) edt_axis(f, extents, spacing[axis], axis);
}

std::uint32_t label_components(std::span<const std::uint8_t> mask, const Extents& e, int connectivity,
                               std::span<std::uint32_t> labels) {
  const auto offsets = detail::backward_offsets(connectivity);
  const std::size_t n = mask.size();
  if (n >= std::numeric_limits<std::uint32_t>::max()) throw ContractError("volume too large for labelling");
  std::vector<std::uint32_t> parent(n, 0);
  const std::size_t nx = e[0], ny = e[1], nz = e[2];
  const std::size_t plane = nx * ny;

  // Phase 1: independent z-slabs. Unions stay inside a slab, so slabs never
  // touch each other's parent entries.
  const std::size_t slabs = std::clamp<std::size_t>(static_cast<std::size_t>(omp_get_max_threads()), 1, std::max<std::size_t>(nz, 1));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(slabs); ++si) {
    const auto s = static_cast<std::size_t>(si);
    const std::size_t z0 = nz * s / slabs, z1 = nz * (s + 1) / slabs;
    for (std::size_t z = z0; z < z1; ++z) {
      for (std::size_t y = 0; y < ny; ++y) {
        for (std::size_t x = 0; x < nx; ++x) {
          const std::size_t i = x + nx * y + plane * z;
          if (!mask[i]) continue;
          parent[i] = static_cast<std::uint32_t>(i);
          unite_with_neighbours(mask, e, offsets, parent, x, y, z, z0, false);
        }
      }
    }
  }

  // Phase 2: stitch slab boundaries.
  for (std::size_t s = 1; s < slabs; ++s) {
    const std::size_t z0 = nz * s / slabs;
    if (z0 == 0 || z0 >= nz) continue;
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        const std::size_t i = x + nx * y + plane * z0;
        if (mask[i]) unite_with_neighbours(mask, e, offsets, parent, x, y, z0, z0 - 1, true);
      }
    }
  }

  // Phase 3: parent[i] <= i, so one raster pass resolves roots and numbers
  // them by first appearance.
  std::uint32_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) {
      labels[i] = 0;
      continue;
    }
    const std::uint32_t p = parent[i];
    if (p == i) {
      labels[i] = ++count;
    } else {
      parent[i] = parent[p];
      labels[i] = labels[parent[i]];
    }
  }
  return count;
}

void box_dilate(std::span<const std::uint8_t> in, const Extents& e, std::size_t radius, std::span<std::uint8_t> out) {
  if (radius == 0) {
    std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  std::vector<std::uint8_t> tmp(in.begin(), in.end());
  std::vector<std::uint8_t> next(in.size());
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n = e[axis];
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? e[0] : e[0] * e[1];
    const std::size_t lines = in.size() / n;
    const std::size_t nx = e[0], ny = e[1];
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t li = 0; li < static_cast<std::ptrdiff_t>(lines); ++li) {
      const auto l = static_cast<std::size_t>(li);
      const std::size_t base = axis == 0 ? l * nx : axis == 1 ? (l % nx) + (l / nx) * nx * ny : l;
      // Sliding count of set samples in [q - r, q + r].
      std::size_t count = 0;
      for (std::size_t q = 0; q < std::min(n, radius); ++q) count += tmp[base + q * stride];
      for (std::size_t q = 0; q < n; ++q) {
        if (q + radius < n) count += tmp[base + (q + radius) * stride];
        if (q > radius) count -= tmp[base + (q - radius - 1) * stride];
        next[base + q * stride] = count > 0 ? 1 : 0;
      }
    }
    tmp.swap(next);
  }
  std::copy(tmp.begin(), tmp.end(), out.begin());
}

void surface(std::span<const std::uint8_t> mask, const Extents& e, std::span<std::uint8_t> out) {
  const std::size_t nx = e[0], ny = e[1], nz = e[2];
  const std::size_t plane = nx * ny;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t zi = 0; zi < static_cast<std::ptrdiff_t>(nz); ++zi) {
    const auto z = static_cast<std::size_t>(zi);
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        const std::size_t i = x + nx * y + plane * z;
        if (!mask[i]) {
          out[i] = 0;
          continue;
        }
        const bool edge = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
        out[i] = (edge || !mask[i - 1] || !mask[i + 1] || !mask[i - nx] || !mask[i + nx] || !mask[i - plane] ||
                  !mask[i + plane])
                     ? 1
                     : 0;
      }
    }
  }
}

void accumulate_fixed(std::span<const double> values, double weight, std::span<std::int64_t> acc) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(values.size()); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    acc[i] += static_cast<std::int64_t>(std::nearbyint(std::ldexp(weight * values[i], kFixedPointBits)));
  }
}

}  // namespace btk::kernels
