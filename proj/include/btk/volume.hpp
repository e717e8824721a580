#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "btk/error.hpp"

namespace btk {

using Extents = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;
using Affine = std::array<std::array<double, 4>, 4>;

inline Affine identity_affine() {
  return {{{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}};
}

/// Voxel grid layout plus its physical embedding. Voxel (x, y, z) lives at
/// linear index x + nx * (y + ny * z), matching NIfTI on-disk order.
struct VolumeGeometry {
  Extents extents{0, 0, 0};
  Spacing spacing_mm{1.0, 1.0, 1.0};
  Affine affine = identity_affine();

  std::size_t voxel_count() const { return extents[0] * extents[1] * extents[2]; }
  double voxel_volume_mm3() const { return spacing_mm[0] * spacing_mm[1] * spacing_mm[2]; }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + extents[0] * (y + extents[1] * z);
  }
  std::array<std::size_t, 3> coords(std::size_t i) const {
    const std::size_t x = i % extents[0];
    const std::size_t yz = i / extents[0];
    return {x, yz % extents[1], yz / extents[1]};
  }

  // Grid compatibility only; the affine is carried, not compared.
  bool same_grid(const VolumeGeometry& o) const {
    return extents == o.extents && spacing_mm == o.spacing_mm;
  }

  bool operator==(const VolumeGeometry&) const = default;
};

inline VolumeGeometry make_geometry(Extents e, Spacing s = {1.0, 1.0, 1.0}) {
  for (double v : s) {
    if (!(v > 0.0)) throw ContractError("voxel spacing must be strictly positive");
  }
  VolumeGeometry g;
  g.extents = e;
  g.spacing_mm = s;
  g.affine = identity_affine();
  for (int a = 0; a < 3; ++a) g.affine[a][a] = s[a];
  return g;
}

template <typename T>
struct Volume {
  VolumeGeometry geometry;
  std::vector<T> data;

  Volume() = default;
  explicit Volume(VolumeGeometry g, T fill = T{})
      : geometry(std::move(g)), data(geometry.voxel_count(), fill) {}

  std::size_t size() const { return data.size(); }
  const Extents& extents() const { return geometry.extents; }

  T& at(std::size_t x, std::size_t y, std::size_t z) { return data[geometry.index(x, y, z)]; }
  const T& at(std::size_t x, std::size_t y, std::size_t z) const {
    return data[geometry.index(x, y, z)];
  }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  std::span<T> span() { return data; }
  std::span<const T> span() const { return data; }

  bool operator==(const Volume&) const = default;
};

using IntensityVolume = Volume<float>;
using LabelVolume = Volume<std::uint8_t>;
/// One byte per voxel holding 0 or 1.
using BinaryMask = Volume<std::uint8_t>;
using DistanceMap = Volume<double>;

template <typename A, typename B>
void require_same_grid(const Volume<A>& a, const Volume<B>& b, const std::string& what) {
  if (!a.geometry.same_grid(b.geometry)) {
    throw ContractError(what + ": geometry mismatch (" + std::to_string(a.extents()[0]) + "x" +
                        std::to_string(a.extents()[1]) + "x" + std::to_string(a.extents()[2]) +
                        " vs " + std::to_string(b.extents()[0]) + "x" +
                        std::to_string(b.extents()[1]) + "x" + std::to_string(b.extents()[2]) +
                        ")");
  }
}

inline std::size_t popcount(const BinaryMask& m) {
  std::size_t n = 0;
  for (auto v : m.data) n += (v != 0);
  return n;
}

/// Inclusive-exclusive voxel box [lo, hi).
struct Box {
  std::array<std::size_t, 3> lo{0, 0, 0};
  std::array<std::size_t, 3> hi{0, 0, 0};
  bool empty() const { return hi[0] <= lo[0] || hi[1] <= lo[1] || hi[2] <= lo[2]; }
  Extents extents() const {
    return empty() ? Extents{0, 0, 0} : Extents{hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]};
  }
};

}  // namespace btk
