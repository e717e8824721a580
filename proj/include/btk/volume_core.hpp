#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "btk/volume.hpp"

namespace btk {

/// Connected components of a binary mask. Ids are dense 1..K, ordered by
/// each component's smallest linear voxel index; 0 is background.
struct ComponentSet {
  Volume<std::uint32_t> labels;
  std::vector<std::size_t> voxel_counts;  // voxel_counts[id - 1]
  int connectivity = 26;

  std::size_t count() const { return voxel_counts.size(); }
  std::size_t voxel_count(std::uint32_t id) const { return voxel_counts.at(id - 1); }
  double volume_mm3(std::uint32_t id) const {
    return static_cast<double>(voxel_count(id)) * labels.geometry.voxel_volume_mm3();
  }
  /// Tight bounding boxes, boxes()[id - 1].
  std::vector<Box> boxes() const;
};

struct ZScoreResult {
  IntensityVolume volume;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<std::string> warnings;
};

/// (v - mean) / std over the mask (population std); exactly 0 outside it.
ZScoreResult zscore_normalize(const IntensityVolume& volume, const BinaryMask& mask);

/// Otsu threshold over a `bins`-bin histogram spanning [min, max].
///
/// The cut maximising between-class variance is chosen; when several
/// adjacent cuts tie (empty bins between two modes) the threshold is placed
/// midway between the bin centres that bound the tied run, and among
/// separate maxima the lowest wins.
double otsu_threshold(const IntensityVolume& volume, std::size_t bins = 256);

/// Head mask: voxels above the Otsu threshold, largest 26-connected
/// component, then 2D hole filling in every axial slice.
BinaryMask foreground_mask(const IntensityVolume& volume);

/// Voxels where any of `volumes` is nonzero.
BinaryMask nonzero_mask(std::span<const IntensityVolume> volumes);

ComponentSet connected_components(const BinaryMask& mask, int connectivity = 26);

/// Mask of the largest component (lowest id on size ties); empty in, empty out.
BinaryMask largest_component(const BinaryMask& mask, int connectivity = 26);

/// Fills background regions of each axial (z) slice that are not 4-connected
/// to the slice border.
BinaryMask fill_holes_per_slice(const BinaryMask& mask);

/// Exact anisotropic distance (mm) from every voxel centre to the nearest
/// foreground voxel centre; +inf everywhere when the mask is empty.
DistanceMap euclidean_distance_transform(const BinaryMask& mask);

/// Chebyshev dilation; radius 0 is the identity.
BinaryMask dilate(const BinaryMask& mask, int radius_voxels);

Box bounding_box(const BinaryMask& mask);
/// Grows `box` by `margin` voxels on every side, clamped to `extents`.
Box expand_box(const Box& box, std::size_t margin, const Extents& extents);

template <typename T>
Volume<T> crop(const Volume<T>& v, const Box& box) {
  VolumeGeometry g = v.geometry;
  g.extents = box.extents();
  for (int r = 0; r < 3; ++r) {
    for (int a = 0; a < 3; ++a) g.affine[r][3] += g.affine[r][a] * static_cast<double>(box.lo[a]);
  }
  Volume<T> out(g);
  for (std::size_t z = box.lo[2]; z < box.hi[2]; ++z) {
    for (std::size_t y = box.lo[1]; y < box.hi[1]; ++y) {
      for (std::size_t x = box.lo[0]; x < box.hi[0]; ++x) {
        out.at(x - box.lo[0], y - box.lo[1], z - box.lo[2]) = v.at(x, y, z);
      }
    }
  }
  return out;
}

}  // namespace btk
