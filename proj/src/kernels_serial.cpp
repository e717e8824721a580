// Plain single-threaded reference kernels. Kept deliberately naive where the
// algorithm allows (flood fill, direct neighbourhood scans) so the parallel
// versions have something independent to be checked against.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "btk/kernels.hpp"

namespace btk::kernels::serial {

void squared_edt(std::span<double> f, const Extents& e, const Spacing& spacing) {
  if (f.empty()) return;
  std::vector<double> in, out, z;
  std::vector<std::size_t> v;
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n = e[axis];
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? e[0] : e[0] * e[1];
    in.resize(n);
    out.resize(n);
    z.resize(n + 1);
    v.resize(n);
    for (std::size_t zz = 0; zz < (axis == 2 ? 1 : e[2]); ++zz) {
      for (std::size_t yy = 0; yy < (axis == 1 ? 1 : e[1]); ++yy) {
        for (std::size_t xx = 0; xx < (axis == 0 ? 1 : e[0]); ++xx) {
          const std::size_t base = xx + e[0] * (yy + e[1] * zz);
          for (std::size_t i = 0; i < n; ++i) in[i] = f[base + i * stride];
          detail::edt_line(in.data(), out.data(), n, spacing[axis], v.data(), z.data());
          for (std::size_t i = 0; i < n; ++i) f[base + i * stride] = out[i];
        }
      }
    }
  }
}

std::uint32_t label_components(std::span<const std::uint8_t> mask, const Extents& e, int connectivity,
                               std::span<std::uint32_t> labels) {
  detail::check_connectivity(connectivity);
  std::vector<std::array<int, 3>> offsets;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == 6 && manhattan > 1) continue;
        if (connectivity == 18 && manhattan > 2) continue;
        offsets.push_back({dx, dy, dz});
      }
    }
  }
  std::fill(labels.begin(), labels.end(), 0u);
  std::uint32_t count = 0;
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < mask.size(); ++seed) {
    if (!mask[seed] || labels[seed] != 0) continue;
    labels[seed] = ++count;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t i = queue.front();
      queue.pop_front();
      const std::size_t x = i % e[0], y = (i / e[0]) % e[1], z = i / (e[0] * e[1]);
      for (const auto& o : offsets) {
        const auto xx = static_cast<std::ptrdiff_t>(x) + o[0];
        const auto yy = static_cast<std::ptrdiff_t>(y) + o[1];
        const auto zz = static_cast<std::ptrdiff_t>(z) + o[2];
        if (xx < 0 || yy < 0 || zz < 0 || xx >= static_cast<std::ptrdiff_t>(e[0]) ||
            yy >= static_cast<std::ptrdiff_t>(e[1]) || zz >= static_cast<std::ptrdiff_t>(e[2])) {
          continue;
        }
        const std::size_t j =
            static_cast<std::size_t>(xx) + e[0] * (static_cast<std::size_t>(yy) + e[1] * static_cast<std::size_t>(zz));
        if (mask[j] && labels[j] == 0) {
          labels[j] = count;
          queue.push_back(j);
        }
      }
    }
  }
  return count;
}

void box_dilate(std::span<const std::uint8_t> in, const Extents& e, std::size_t radius, std::span<std::uint8_t> out) {
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t z = 0; z < e[2]; ++z) {
    for (std::size_t y = 0; y < e[1]; ++y) {
      for (std::size_t x = 0; x < e[0]; ++x) {
        bool hit = false;
        for (std::ptrdiff_t dz = -r; dz <= r && !hit; ++dz) {
          for (std::ptrdiff_t dy = -r; dy <= r && !hit; ++dy) {
            for (std::ptrdiff_t dx = -r; dx <= r && !hit; ++dx) {
              const auto xx = static_cast<std::ptrdiff_t>(x) + dx;
              const auto yy = static_cast<std::ptrdiff_t>(y) + dy;
              const auto zz = static_cast<std::ptrdiff_t>(z) + dz;
              if (xx < 0 || yy < 0 || zz < 0 || xx >= static_cast<std::ptrdiff_t>(e[0]) ||
                  yy >= static_cast<std::ptrdiff_t>(e[1]) || zz >= static_cast<std::ptrdiff_t>(e[2])) {
                continue;
              }
              hit = in[static_cast<std::size_t>(xx) +
                       e[0] * (static_cast<std::size_t>(yy) + e[1] * static_cast<std::size_t>(zz))] != 0;
            }
          }
        }
        out[x + e[0] * (y + e[1] * z)] = hit ? 1 : 0;
      }
    }
  }
}

void surface(std::span<const std::uint8_t> mask, const Extents& e, std::span<std::uint8_t> out) {
  static constexpr int kFaces[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  for (std::size_t z = 0; z < e[2]; ++z) {
    for (std::size_t y = 0; y < e[1]; ++y) {
      for (std::size_t x = 0; x < e[0]; ++x) {
        const std::size_t i = x + e[0] * (y + e[1] * z);
        out[i] = 0;
        if (!mask[i]) continue;
        for (const auto& f : kFaces) {
          const auto xx = static_cast<std::ptrdiff_t>(x) + f[0];
          const auto yy = static_cast<std::ptrdiff_t>(y) + f[1];
          const auto zz = static_cast<std::ptrdiff_t>(z) + f[2];
          const bool outside = xx < 0 || yy < 0 || zz < 0 || xx >= static_cast<std::ptrdiff_t>(e[0]) ||
                               yy >= static_cast<std::ptrdiff_t>(e[1]) || zz >= static_cast<std::ptrdiff_t>(e[2]) ||
                               !mask[static_cast<std::size_t>(xx) +
                                     e[0] * (static_cast<std::size_t>(yy) + e[1] * static_cast<std::size_t>(zz))];
          if (outside) {
            out[i] = 1;
            break;
          }
        }
      }
    }
  }
}

void accumulate_fixed(std::span<const double> values, double weight, std::span<std::int64_t> acc) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc[i] += static_cast<std::int64_t>(std::nearbyint(std::ldexp(weight * values[i], kFixedPointBits)));
  }
}

}  // namespace btk::kernels::serial
