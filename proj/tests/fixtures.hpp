#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "btk/augment.hpp"
#include "btk/regions.hpp"
#include "btk/rng.hpp"
#include "btk/volume.hpp"

namespace fixture {

using btk::BinaryMask;
using btk::Extents;

inline Extents random_extents(btk::Rng& rng, std::size_t max_side) {
  return {1 + rng.below(max_side), 1 + rng.below(max_side), 1 + rng.below(max_side)};
}

inline BinaryMask random_mask(const btk::VolumeGeometry& g, double density, btk::Rng& rng) {
  BinaryMask m(g, 0);
  for (auto& v : m.data) v = rng.uniform() < density;
  return m;
}

/// A few random boxes; gives blob-like components rather than salt noise.
inline BinaryMask random_blobs(const btk::VolumeGeometry& g, int count, btk::Rng& rng) {
  BinaryMask m(g, 0);
  const auto& e = g.extents;
  for (int k = 0; k < count; ++k) {
    std::array<std::size_t, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = rng.below(e[a]);
      hi[a] = std::min(e[a], lo[a] + 1 + rng.below(std::max<std::size_t>(1, e[a] / 2)));
    }
    for (std::size_t z = lo[2]; z < hi[2]; ++z)
      for (std::size_t y = lo[1]; y < hi[1]; ++y)
        for (std::size_t x = lo[0]; x < hi[0]; ++x) m.at(x, y, z) = 1;
  }
  return m;
}

inline void fill_box(btk::LabelVolume& v, std::array<std::size_t, 3> lo, std::array<std::size_t, 3> hi,
                     std::uint8_t label) {
  for (std::size_t z = lo[2]; z < hi[2]; ++z)
    for (std::size_t y = lo[1]; y < hi[1]; ++y)
      for (std::size_t x = lo[0]; x < hi[0]; ++x) v.at(x, y, z) = label;
}

/// Ellipsoidal "head" with smooth texture, background exactly 0, and an
/// optional nested tumour in one hemisphere.
inline btk::CaseRecord synthetic_case(const std::string& id, const btk::LabelScheme& scheme, Extents e,
                                      std::uint64_t seed, bool with_tumour = true) {
  btk::Rng rng(seed);
  btk::CaseRecord c;
  c.id = id;
  c.scheme = scheme;
  c.modality_names = scheme.modalities;
  const auto g = btk::make_geometry(e);
  c.labels = btk::LabelVolume(g, 0);
  const double cx = (static_cast<double>(e[0]) - 1) / 2, cy = (static_cast<double>(e[1]) - 1) / 2,
               cz = (static_cast<double>(e[2]) - 1) / 2;
  const double rx = 0.45 * static_cast<double>(e[0]), ry = 0.45 * static_cast<double>(e[1]),
               rz = 0.45 * static_cast<double>(e[2]);
  for (std::size_t m = 0; m < scheme.modalities.size(); ++m) {
    btk::IntensityVolume v(g, 0.0f);
    const double base = 100.0 + 40.0 * static_cast<double>(m);
    for (std::size_t z = 0; z < e[2]; ++z)
      for (std::size_t y = 0; y < e[1]; ++y)
        for (std::size_t x = 0; x < e[0]; ++x) {
          const double r = std::pow((static_cast<double>(x) - cx) / rx, 2) +
                           std::pow((static_cast<double>(y) - cy) / ry, 2) +
                           std::pow((static_cast<double>(z) - cz) / rz, 2);
          if (r <= 1.0) {
            v.at(x, y, z) = static_cast<float>(base + 10.0 * std::sin(0.3 * static_cast<double>(x + 2 * y + 3 * z)) +
                                               5.0 * rng.normal());
          }
        }
    c.modalities.push_back(std::move(v));
  }
  if (with_tumour) {
    const std::size_t s = std::max<std::size_t>(2, e[0] / 8);
    const std::size_t x0 = static_cast<std::size_t>(cx) - s - rng.below(s), y0 = static_cast<std::size_t>(cy) - s / 2,
                      z0 = static_cast<std::size_t>(cz) - s / 2;
    if (scheme.kind == btk::SchemeKind::GliomaPostTreatment) {
      fill_box(c.labels, {x0, y0, z0}, {x0 + 2 * s, y0 + 2 * s, z0 + 2 * s}, 2);
      fill_box(c.labels, {x0 + 1, y0 + 1, z0 + 1}, {x0 + 2 * s - 1, y0 + 2 * s - 1, z0 + 2 * s - 1}, 3);
      fill_box(c.labels, {x0 + s - 1, y0 + s - 1, z0 + s - 1}, {x0 + s + 1, y0 + s + 1, z0 + s + 1}, 1);
    } else {
      fill_box(c.labels, {x0, y0, z0}, {x0 + 2 * s, y0 + 2 * s, z0 + 2 * s}, 1);
    }
  }
  return c;
}

/// Directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("btk-" + tag + "-" + std::to_string(gen()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
