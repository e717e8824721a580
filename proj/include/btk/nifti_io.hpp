#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "btk/volume.hpp"

namespace btk {

enum class DataType : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Int32 = 8,
  Float32 = 16,
  Float64 = 64,
};

bool is_supported_datatype(std::int16_t code);
std::size_t datatype_size(DataType t);
const char* datatype_name(DataType t);

inline constexpr std::int32_t kNifti1HeaderSize = 348;
inline constexpr std::size_t kNifti1MinVoxOffset = 352;

/// The full 348-byte NIfTI-1 header, field for field, plus the 4 extension
/// flag bytes and any extension payload that precedes the voxel data.
struct NiftiHeader {
  std::int32_t sizeof_hdr = kNifti1HeaderSize;
  std::array<char, 10> data_type{};
  std::array<char, 18> db_name{};
  std::int32_t extents = 0;
  std::int16_t session_error = 0;
  char regular = 'r';
  char dim_info = 0;
  std::array<std::int16_t, 8> dim{};
  float intent_p1 = 0, intent_p2 = 0, intent_p3 = 0;
  std::int16_t intent_code = 0;
  std::int16_t datatype = 0;
  std::int16_t bitpix = 0;
  std::int16_t slice_start = 0;
  std::array<float, 8> pixdim{};
  float vox_offset = static_cast<float>(kNifti1MinVoxOffset);
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
  std::int16_t slice_end = 0;
  char slice_code = 0;
  char xyzt_units = 0;
  float cal_max = 0, cal_min = 0, slice_duration = 0, toffset = 0;
  std::int32_t glmax = 0, glmin = 0;
  std::array<char, 80> descrip{};
  std::array<char, 24> aux_file{};
  std::int16_t qform_code = 0;
  std::int16_t sform_code = 0;
  float quatern_b = 0, quatern_c = 0, quatern_d = 0;
  float qoffset_x = 0, qoffset_y = 0, qoffset_z = 0;
  std::array<float, 4> srow_x{}, srow_y{}, srow_z{};
  std::array<char, 16> intent_name{};
  std::array<char, 4> magic{'n', '+', '1', '\0'};

  std::array<char, 4> extension{};
  std::vector<std::byte> extension_data;
  bool big_endian = false;

  DataType type() const { return static_cast<DataType>(datatype); }
  /// Product of dims 4..dim[0]; 1 for a plain 3D volume.
  std::size_t channels() const;
  std::size_t voxel_count() const;
  std::size_t payload_bytes() const;
  /// slope != 0 and (slope, inter) != (1, 0).
  bool has_scaling() const;
};

/// A decoded NIfTI-1 image. `voxels` holds the payload in host byte order.
struct NiftiImage {
  NiftiHeader header;
  VolumeGeometry geometry;
  std::vector<std::byte> voxels;
};

NiftiImage read_nifti(const std::filesystem::path& path);
/// Decodes an in-memory file image, gzip-compressed or not.
NiftiImage parse_nifti(std::span<const std::byte> bytes);

void write_nifti(const std::filesystem::path& path, const NiftiImage& image);
void write_nifti(const std::filesystem::path& path, const NiftiHeader& header,
                 const VolumeGeometry& geometry, std::span<const std::byte> voxels);
std::vector<std::byte> encode_nifti(const NiftiImage& image, bool gzip);

bool has_gzip_suffix(const std::filesystem::path& path);
bool has_gzip_magic(std::span<const std::byte> bytes);

std::vector<std::byte> gzip_compress(std::span<const std::byte> raw);
std::vector<std::byte> gzip_decompress(std::span<const std::byte> gz);

/// Voxel-to-world transform: sform if set, else qform, else pixdim scaling.
Affine header_affine(const NiftiHeader& h);
VolumeGeometry header_geometry(const NiftiHeader& h);

/// Real-valued voxel values (scl_slope/scl_inter applied when active), all
/// channels, channel-major.
std::vector<double> real_values(const NiftiImage& image);

IntensityVolume to_intensity(const NiftiImage& image);
/// Requires integral values in 0..255 after scaling.
LabelVolume to_labels(const NiftiImage& image);

/// Builds an image around `values` (channel-major, `channels` blocks of the
/// grid). Header fields other than size/type/scaling come from `like` when
/// given, otherwise from the geometry.
NiftiImage make_nifti(const VolumeGeometry& geometry, std::size_t channels, DataType type,
                      std::span<const double> values, const NiftiHeader* like = nullptr);
NiftiImage make_nifti(const LabelVolume& labels, DataType type = DataType::UInt8,
                      const NiftiHeader* like = nullptr);
NiftiImage make_nifti(const IntensityVolume& volume, DataType type = DataType::Float32,
                      const NiftiHeader* like = nullptr);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace btk
