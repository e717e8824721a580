#pragma once

// Data-parallel voxel kernels. Every kernel in btk::kernels has a serial
// twin in btk::kernels::serial with the same signature; the OpenMP versions
// must produce bit-identical output for any thread count, and the test suite
// holds them to it.

#include <cstddef>
#include <cstdint>
#include <span>

#include "btk/volume.hpp"

namespace btk::kernels {

/// In-place squared Euclidean distance transform. On entry `f` is 0 at site
/// voxels and +inf elsewhere; on exit it holds the squared physical distance
/// to the nearest site (+inf when there are no sites).
void squared_edt(std::span<double> f, const Extents& extents, const Spacing& spacing);

/// Labels foreground components 1..K in ascending order of each component's
/// minimum linear index. Returns K.
std::uint32_t label_components(std::span<const std::uint8_t> mask, const Extents& extents, int connectivity,
                               std::span<std::uint32_t> labels);

/// Chebyshev (box) dilation by `radius` voxels.
void box_dilate(std::span<const std::uint8_t> in, const Extents& extents, std::size_t radius,
                std::span<std::uint8_t> out);

/// Foreground voxels with at least one face neighbour outside the mask; the
/// grid border counts as outside.
void surface(std::span<const std::uint8_t> mask, const Extents& extents, std::span<std::uint8_t> out);

/// Fixed-point scale used by accumulate_fixed: one unit is 2^-60, which
/// represents every double in [2^-8, 1] exactly.
inline constexpr int kFixedPointBits = 60;

/// acc[i] += round(weight * values[i] * 2^60). Integer accumulation keeps the
/// sum independent of member order and chunking.
void accumulate_fixed(std::span<const double> values, double weight, std::span<std::int64_t> acc);

namespace serial {
void squared_edt(std::span<double> f, const Extents& extents, const Spacing& spacing);
std::uint32_t label_components(std::span<const std::uint8_t> mask, const Extents& extents, int connectivity,
                               std::span<std::uint32_t> labels);
void box_dilate(std::span<const std::uint8_t> in, const Extents& extents, std::size_t radius,
                std::span<std::uint8_t> out);
void surface(std::span<const std::uint8_t> mask, const Extents& extents, std::span<std::uint8_t> out);
void accumulate_fixed(std::span<const double> values, double weight, std::span<std::int64_t> acc);
}  // namespace serial

namespace detail {
/// 1D lower envelope of parabolas (Felzenszwalb & Huttenlocher) over a line
/// of `n` samples spaced `step` mm apart. `v` and `z` are scratch of size n
/// and n + 1.
void edt_line(const double* f, double* out, std::size_t n, double step, std::size_t* v, double* z);

/// Backward neighbour offsets (dx, dy, dz) for the given connectivity.
std::span<const std::array<int, 3>> backward_offsets(int connectivity);
void check_connectivity(int connectivity);
}  // namespace detail

}  // namespace btk::kernels
