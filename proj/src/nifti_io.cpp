#include "btk/nifti_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/format.h>

namespace btk {

namespace {

constexpr std::int32_t kNifti2HeaderSize = 540;

std::int32_t byteswap32(std::int32_t v) {
  auto u = static_cast<std::uint32_t>(v);
  u = ((u & 0x000000FFu) << 24) | ((u & 0x0000FF00u) << 8) | ((u & 0x00FF0000u) >> 8) |
      ((u & 0xFF000000u) >> 24);
  return static_cast<std::int32_t>(u);
}

void swap_bytes_inplace(std::byte* p, std::size_t width) { std::reverse(p, p + width); }

void swap_payload(std::span<std::byte> payload, std::size_t width) {
  if (width <= 1) return;
  for (std::size_t i = 0; i + width <= payload.size(); i += width) swap_bytes_inplace(&payload[i], width);
}

// Field-level codec over a 348-byte block. `swap` is true when the file
// order differs from the host order.
class FieldReader {
 public:
  FieldReader(std::span<const std::byte> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t off) const {
    T v;
    std::array<std::byte, sizeof(T)> tmp;
    std::memcpy(tmp.data(), bytes_.data() + off, sizeof(T));
    if (swap_) std::reverse(tmp.begin(), tmp.end());
    std::memcpy(&v, tmp.data(), sizeof(T));
    return v;
  }
  template <typename T, std::size_t N>
  std::array<T, N> get_array(std::size_t off) const {
    std::array<T, N> out;
    for (std::size_t i = 0; i < N; ++i) out[i] = get<T>(off + i * sizeof(T));
    return out;
  }
  template <std::size_t N>
  std::array<char, N> chars(std::size_t off) const {
    std::array<char, N> out;
    std::memcpy(out.data(), bytes_.data() + off, N);
    return out;
  }

 private:
  std::span<const std::byte> bytes_;
  bool swap_;
};

class FieldWriter {
 public:
  FieldWriter(std::span<std::byte> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  void put(std::size_t off, T v) {
    std::array<std::byte, sizeof(T)> tmp;
    std::memcpy(tmp.data(), &v, sizeof(T));
    if (swap_) std::reverse(tmp.begin(), tmp.end());
    std::memcpy(bytes_.data() + off, tmp.data(), sizeof(T));
  }
  template <typename T, std::size_t N>
  void put_array(std::size_t off, const std::array<T, N>& a) {
    for (std::size_t i = 0; i < N; ++i) put<T>(off + i * sizeof(T), a[i]);
  }
  template <std::size_t N>
  void chars(std::size_t off, const std::array<char, N>& a) {
    std::memcpy(bytes_.data() + off, a.data(), N);
  }

 private:
  std::span<std::byte> bytes_;
  bool swap_;
};

constexpr bool host_is_big_endian() { return std::endian::native == std::endian::big; }

NiftiHeader decode_header(std::span<const std::byte> b, bool file_big_endian) {
  const FieldReader r(b, file_big_endian != host_is_big_endian());
  NiftiHeader h;
  h.big_endian = file_big_endian;
  h.sizeof_hdr = r.get<std::int32_t>(0);
  h.data_type = r.chars<10>(4);
  h.db_name = r.chars<18>(14);
  h.extents = r.get<std::int32_t>(32);
  h.session_error = r.get<std::int16_t>(36);
  h.regular = r.chars<1>(38)[0];
  h.dim_info = r.chars<1>(39)[0];
  h.dim = r.get_array<std::int16_t, 8>(40);
  h.intent_p1 = r.get<float>(56);
  h.intent_p2 = r.get<float>(60);
  h.intent_p3 = r.get<float>(64);
  h.intent_code = r.get<std::int16_t>(68);
  h.datatype = r.get<std::int16_t>(70);
  h.bitpix = r.get<std::int16_t>(72);
  h.slice_start = r.get<std::int16_t>(74);
  h.pixdim = r.get_array<float, 8>(76);
  h.vox_offset = r.get<float>(108);
  h.scl_slope = r.get<float>(112);
  h.scl_inter = r.get<float>(116);
  h.slice_end = r.get<std::int16_t>(120);
  h.slice_code = r.chars<1>(122)[0];
  h.xyzt_units = r.chars<1>(123)[0];
  h.cal_max = r.get<float>(124);
  h.cal_min = r.get<float>(128);
  h.slice_duration = r.get<float>(132);
  h.toffset = r.get<float>(136);
  h.glmax = r.get<std::int32_t>(140);
  h.glmin = r.get<std::int32_t>(144);
  h.descrip = r.chars<80>(148);
  h.aux_file = r.chars<24>(228);
  h.qform_code = r.get<std::int16_t>(252);
  h.sform_code = r.get<std::int16_t>(254);
  h.quatern_b = r.get<float>(256);
  h.quatern_c = r.get<float>(260);
  h.quatern_d = r.get<float>(264);
  h.qoffset_x = r.get<float>(268);
  h.qoffset_y = r.get<float>(272);
  h.qoffset_z = r.get<float>(276);
  h.srow_x = r.get_array<float, 4>(280);
  h.srow_y = r.get_array<float, 4>(296);
  h.srow_z = r.get_array<float, 4>(312);
  h.intent_name = r.chars<16>(328);
  h.magic = r.chars<4>(344);
  return h;
}

void encode_header(const NiftiHeader& h, std::span<std::byte> b) {
  FieldWriter w(b, h.big_endian != host_is_big_endian());
  w.put<std::int32_t>(0, h.sizeof_hdr);
  w.chars(4, h.data_type);
  w.chars(14, h.db_name);
  w.put<std::int32_t>(32, h.extents);
  w.put<std::int16_t>(36, h.session_error);
  w.chars<1>(38, {h.regular});
  w.chars<1>(39, {h.dim_info});
  w.put_array(40, h.dim);
  w.put<float>(56, h.intent_p1);
  w.put<float>(60, h.intent_p2);
  w.put<float>(64, h.intent_p3);
  w.put<std::int16_t>(68, h.intent_code);
  w.put<std::int16_t>(70, h.datatype);
  w.put<std::int16_t>(72, h.bitpix);
  w.put<std::int16_t>(74, h.slice_start);
  w.put_array(76, h.pixdim);
  w.put<float>(108, h.vox_offset);
  w.put<float>(112, h.scl_slope);
  w.put<float>(116, h.scl_inter);
  w.put<std::int16_t>(120, h.slice_end);
  w.chars<1>(122, {h.slice_code});
  w.chars<1>(123, {h.xyzt_units});
  w.put<float>(124, h.cal_max);
  w.put<float>(128, h.cal_min);
  w.put<float>(132, h.slice_duration);
  w.put<float>(136, h.toffset);
  w.put<std::int32_t>(140, h.glmax);
  w.put<std::int32_t>(144, h.glmin);
  w.chars(148, h.descrip);
  w.chars(228, h.aux_file);
  w.put<std::int16_t>(252, h.qform_code);
  w.put<std::int16_t>(254, h.sform_code);
  w.put<float>(256, h.quatern_b);
  w.put<float>(260, h.quatern_c);
  w.put<float>(264, h.quatern_d);
  w.put<float>(268, h.qoffset_x);
  w.put<float>(272, h.qoffset_y);
  w.put<float>(276, h.qoffset_z);
  w.put_array(280, h.srow_x);
  w.put_array(296, h.srow_y);
  w.put_array(312, h.srow_z);
  w.chars(328, h.intent_name);
  w.chars(344, h.magic);
}

bool checked_mul(std::size_t a, std::size_t b, std::size_t& out) {
  return !__builtin_mul_overflow(a, b, &out);
}

void validate_header(const NiftiHeader& h) {
  if (h.magic[0] == 'n' && h.magic[1] == 'i' && h.magic[2] == '1' && h.magic[3] == '\0') {
    throw UnsupportedFormatError(
        "NIfTI magic 'ni1' (separate .hdr/.img pair) is not supported; convert to single-file .nii");
  }
  if (!(h.magic[0] == 'n' && h.magic[1] == '+' && h.magic[2] == '1' && h.magic[3] == '\0')) {
    throw ParseError("NIfTI header field 'magic' is not \"n+1\"");
  }
  if (h.dim[0] < 1 || h.dim[0] > 7) {
    throw ParseError(fmt::format("NIfTI header field 'dim[0]' = {} is outside 1..7", h.dim[0]));
  }
  for (int i = 1; i <= h.dim[0]; ++i) {
    if (h.dim[i] < 1) {
      throw ParseError(fmt::format("NIfTI header field 'dim[{}]' = {} must be >= 1", i, h.dim[i]));
    }
  }
  if (!is_supported_datatype(h.datatype)) {
    throw UnsupportedFormatError(
        fmt::format("NIfTI datatype code {} is not supported (uint8, int16, int32, float32, float64)",
                    h.datatype));
  }
  if (static_cast<std::size_t>(h.bitpix) != 8 * datatype_size(h.type())) {
    throw ParseError(fmt::format("NIfTI header field 'bitpix' = {} disagrees with datatype {}",
                                 h.bitpix, datatype_name(h.type())));
  }
  for (int a = 1; a <= 3; ++a) {
    if (a <= h.dim[0] && !(std::isfinite(h.pixdim[a]) && h.pixdim[a] != 0.0f)) {
      throw ParseError(fmt::format("NIfTI header field 'pixdim[{}]' = {} is not a positive spacing",
                                   a, h.pixdim[a]));
    }
  }
  if (!std::isfinite(h.vox_offset) || h.vox_offset < static_cast<float>(kNifti1HeaderSize) ||
      h.vox_offset != std::floor(h.vox_offset) || h.vox_offset > 1.0e9f) {
    throw ParseError(fmt::format("NIfTI header field 'vox_offset' = {} is invalid", h.vox_offset));
  }
  std::size_t n = 1;
  for (int i = 1; i <= h.dim[0]; ++i) {
    if (!checked_mul(n, static_cast<std::size_t>(h.dim[i]), n)) {
      throw ParseError("NIfTI header field 'dim' describes an image too large to address");
    }
  }
  std::size_t bytes = 0;
  if (!checked_mul(n, datatype_size(h.type()), bytes)) {
    throw ParseError("NIfTI header field 'dim' describes an image too large to address");
  }
}

template <typename T>
T load_native(const std::byte* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename F>
void for_each_raw_value(const NiftiImage& img, F&& f) {
  const std::byte* p = img.voxels.data();
  const std::size_t n = img.voxels.size() / datatype_size(img.header.type());
  switch (img.header.type()) {
    case DataType::UInt8:
      for (std::size_t i = 0; i < n; ++i) f(i, static_cast<double>(load_native<std::uint8_t>(p + i)));
      break;
    case DataType::Int16:
      for (std::size_t i = 0; i < n; ++i) f(i, static_cast<double>(load_native<std::int16_t>(p + 2 * i)));
      break;
    case DataType::Int32:
      for (std::size_t i = 0; i < n; ++i) f(i, static_cast<double>(load_native<std::int32_t>(p + 4 * i)));
      break;
    case DataType::Float32:
      for (std::size_t i = 0; i < n; ++i) f(i, static_cast<double>(load_native<float>(p + 4 * i)));
      break;
    case DataType::Float64:
      for (std::size_t i = 0; i < n; ++i) f(i, load_native<double>(p + 8 * i));
      break;
  }
}

template <typename T>
void store_native(std::byte* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}

template <typename I>
I checked_integer(double v, std::size_t index) {
  if (!std::isfinite(v) || v != std::nearbyint(v) || v < static_cast<double>(std::numeric_limits<I>::min()) ||
      v > static_cast<double>(std::numeric_limits<I>::max())) {
    throw ContractError(fmt::format("value {} at voxel {} is not representable as an integer datatype", v, index));
  }
  return static_cast<I>(v);
}

}  // namespace

bool is_supported_datatype(std::int16_t code) {
  switch (code) {
    case 2: case 4: case 8: case 16: case 64:
      return true;
    default:
      return false;
  }
}

std::size_t datatype_size(DataType t) {
  switch (t) {
    case DataType::UInt8: return 1;
    case DataType::Int16: return 2;
    case DataType::Int32: return 4;
    case DataType::Float32: return 4;
    case DataType::Float64: return 8;
  }
  throw UnsupportedFormatError("unsupported datatype");
}

const char* datatype_name(DataType t) {
  switch (t) {
    case DataType::UInt8: return "uint8";
    case DataType::Int16: return "int16";
    case DataType::Int32: return "int32";
    case DataType::Float32: return "float32";
    case DataType::Float64: return "float64";
  }
  return "unknown";
}

std::size_t NiftiHeader::channels() const {
  std::size_t c = 1;
  for (int i = 4; i <= dim[0] && i < 8; ++i) c *= static_cast<std::size_t>(std::max<std::int16_t>(dim[i], 1));
  return c;
}

std::size_t NiftiHeader::voxel_count() const {
  std::size_t n = 1;
  for (int i = 1; i <= dim[0] && i < 8; ++i) n *= static_cast<std::size_t>(std::max<std::int16_t>(dim[i], 1));
  return n;
}

std::size_t NiftiHeader::payload_bytes() const { return voxel_count() * datatype_size(type()); }

bool NiftiHeader::has_scaling() const {
  return scl_slope != 0.0f && !(scl_slope == 1.0f && scl_inter == 0.0f);
}

bool has_gzip_magic(std::span<const std::byte> bytes) {
  return bytes.size() >= 2 && bytes[0] == std::byte{0x1F} && bytes[1] == std::byte{0x8B};
}

bool has_gzip_suffix(const std::filesystem::path& path) {
  return path.extension() == ".gz";
}

std::vector<std::byte> gzip_compress(std::span<const std::byte> raw) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw IoError("gzip: deflateInit2 failed");
  }
  std::vector<std::byte> out(deflateBound(&zs, static_cast<uLong>(raw.size())) + 32);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<std::byte*>(raw.data()));
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  const std::size_t produced = zs.total_out;
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw IoError("gzip: deflate did not complete");
  out.resize(produced);
  return out;
}

std::vector<std::byte> gzip_decompress(std::span<const std::byte> gz) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("gzip: inflateInit2 failed");
  std::vector<std::byte> out;
  std::array<std::byte, 1 << 16> chunk;
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<std::byte*>(gz.data()));
  zs.avail_in = static_cast<uInt>(gz.size());
  int rc = Z_OK;
  while (true) {
    zs.next_out = reinterpret_cast<Bytef*>(chunk.data());
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + (chunk.size() - zs.avail_out));
    if (rc == Z_STREAM_END) {
      // Concatenated members are legal gzip.
      if (zs.avail_in > 0 && has_gzip_magic({reinterpret_cast<const std::byte*>(zs.next_in), zs.avail_in})) {
        if (inflateReset(&zs) != Z_OK) break;
        continue;
      }
      break;
    }
    if (zs.avail_in == 0 && zs.avail_out != 0) {
      rc = Z_BUF_ERROR;
      break;
    }
  }
  inflateEnd(&zs);
  if (rc != Z_STREAM_END) throw IoError("gzip: compressed stream is corrupt or truncated");
  return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> bytes(size);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError(fmt::format("failed reading '{}'", path.string()));
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

Affine header_affine(const NiftiHeader& h) {
  Affine a = identity_affine();
  if (h.sform_code > 0) {
    for (int c = 0; c < 4; ++c) {
      a[0][c] = h.srow_x[c];
      a[1][c] = h.srow_y[c];
      a[2][c] = h.srow_z[c];
    }
    return a;
  }
  const double dx = std::abs(h.pixdim[1]), dy = std::abs(h.pixdim[2]), dz = std::abs(h.pixdim[3]);
  if (h.qform_code > 0) {
    const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
    double aa = 1.0 - (b * b + c * c + d * d);
    if (aa < 1.0e-7) aa = 0.0;
    aa = std::sqrt(aa);
    const double qfac = h.pixdim[0] < 0 ? -1.0 : 1.0;
    const double r[3][3] = {
        {aa * aa + b * b - c * c - d * d, 2 * (b * c - aa * d), 2 * (b * d + aa * c)},
        {2 * (b * c + aa * d), aa * aa + c * c - b * b - d * d, 2 * (c * d - aa * b)},
        {2 * (b * d - aa * c), 2 * (c * d + aa * b), aa * aa + d * d - c * c - b * b}};
    const double s[3] = {dx, dy, dz * qfac};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a[i][j] = r[i][j] * s[j];
    a[0][3] = h.qoffset_x;
    a[1][3] = h.qoffset_y;
    a[2][3] = h.qoffset_z;
    return a;
  }
  a[0][0] = dx;
  a[1][1] = dy;
  a[2][2] = dz;
  return a;
}

VolumeGeometry header_geometry(const NiftiHeader& h) {
  VolumeGeometry g;
  for (int a = 0; a < 3; ++a) {
    const bool used = a + 1 <= h.dim[0];
    g.extents[a] = used ? static_cast<std::size_t>(h.dim[a + 1]) : 1;
    g.spacing_mm[a] = used ? std::abs(static_cast<double>(h.pixdim[a + 1])) : 1.0;
  }
  g.affine = header_affine(h);
  return g;
}

NiftiImage parse_nifti(std::span<const std::byte> bytes) {
  std::vector<std::byte> inflated;
  if (has_gzip_magic(bytes)) {
    inflated = gzip_decompress(bytes);
    bytes = inflated;
  }
  if (bytes.size() < static_cast<std::size_t>(kNifti1HeaderSize)) {
    throw IoError(fmt::format("truncated NIfTI header: expected {} bytes, got {}", kNifti1HeaderSize,
                              bytes.size()));
  }
  std::int32_t raw_size;
  std::memcpy(&raw_size, bytes.data(), 4);
  bool big;
  if (raw_size == kNifti1HeaderSize) {
    big = host_is_big_endian();
  } else if (byteswap32(raw_size) == kNifti1HeaderSize) {
    big = !host_is_big_endian();
  } else if (raw_size == kNifti2HeaderSize || byteswap32(raw_size) == kNifti2HeaderSize) {
    throw UnsupportedFormatError("NIfTI-2 files (sizeof_hdr = 540) are not supported");
  } else {
    throw ParseError(fmt::format("NIfTI header field 'sizeof_hdr' = {} (expected 348)", raw_size));
  }

  NiftiImage img;
  img.header = decode_header(bytes.first(kNifti1HeaderSize), big);
  validate_header(img.header);
  NiftiHeader& h = img.header;

  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (bytes.size() >= kNifti1MinVoxOffset) {
    std::memcpy(h.extension.data(), bytes.data() + kNifti1HeaderSize, 4);
  }
  if (offset > kNifti1MinVoxOffset && bytes.size() >= offset) {
    h.extension_data.assign(bytes.begin() + kNifti1MinVoxOffset, bytes.begin() + offset);
  }

  const std::size_t payload = h.payload_bytes();
  const std::size_t available = bytes.size() > offset ? bytes.size() - offset : 0;
  if (available < payload) {
    throw IoError(fmt::format("truncated NIfTI payload: expected {} bytes, got {}", payload, available));
  }
  img.voxels.assign(bytes.begin() + offset, bytes.begin() + offset + payload);
  if (big != host_is_big_endian()) swap_payload(img.voxels, datatype_size(h.type()));
  img.geometry = header_geometry(h);
  return img;
}

NiftiImage read_nifti(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_nifti(bytes);
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const IoError& e) {
    throw IoError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<std::byte> encode_nifti(const NiftiImage& image, bool gzip) {
  const NiftiHeader& h0 = image.header;
  validate_header(h0);
  if (h0.sizeof_hdr != kNifti1HeaderSize) throw ContractError("header sizeof_hdr must be 348");
  const Extents header_extents{h0.dim[0] >= 1 ? std::size_t(h0.dim[1]) : 1, h0.dim[0] >= 2 ? std::size_t(h0.dim[2]) : 1,
                               h0.dim[0] >= 3 ? std::size_t(h0.dim[3]) : 1};
  if (header_extents != image.geometry.extents) {
    throw ContractError("NIfTI header dims disagree with geometry extents");
  }
  if (image.voxels.size() != h0.payload_bytes()) {
    throw ContractError(fmt::format("voxel buffer has {} bytes but header describes {}", image.voxels.size(),
                                    h0.payload_bytes()));
  }

  NiftiHeader h = h0;
  const bool keep_ext = h.extension[0] != 0;
  const std::size_t offset = kNifti1MinVoxOffset + (keep_ext ? h.extension_data.size() : 0);
  h.vox_offset = static_cast<float>(offset);

  std::vector<std::byte> out(offset + image.voxels.size());
  encode_header(h, std::span(out).first(kNifti1HeaderSize));
  std::memcpy(out.data() + kNifti1HeaderSize, h.extension.data(), 4);
  if (keep_ext && !h.extension_data.empty()) {
    std::memcpy(out.data() + kNifti1MinVoxOffset, h.extension_data.data(), h.extension_data.size());
  }
  std::memcpy(out.data() + offset, image.voxels.data(), image.voxels.size());
  if (h.big_endian != host_is_big_endian()) {
    swap_payload(std::span(out).subspan(offset), datatype_size(h.type()));
  }
  return gzip ? gzip_compress(out) : out;
}

void write_nifti(const std::filesystem::path& path, const NiftiImage& image) {
  write_file_bytes(path, encode_nifti(image, has_gzip_suffix(path)));
}

void write_nifti(const std::filesystem::path& path, const NiftiHeader& header, const VolumeGeometry& geometry,
                 std::span<const std::byte> voxels) {
  NiftiImage img{header, geometry, {voxels.begin(), voxels.end()}};
  write_nifti(path, img);
}

std::vector<double> real_values(const NiftiImage& image) {
  const std::size_t n = image.voxels.size() / datatype_size(image.header.type());
  std::vector<double> out(n);
  const bool scale = image.header.has_scaling();
  const double slope = image.header.scl_slope, inter = image.header.scl_inter;
  for_each_raw_value(image, [&](std::size_t i, double v) { out[i] = scale ? slope * v + inter : v; });
  return out;
}

IntensityVolume to_intensity(const NiftiImage& image) {
  if (image.header.channels() != 1) {
    throw ContractError(fmt::format("expected a 3D intensity volume, got {} channels", image.header.channels()));
  }
  IntensityVolume v(image.geometry);
  const bool scale = image.header.has_scaling();
  const double slope = image.header.scl_slope, inter = image.header.scl_inter;
  for_each_raw_value(image, [&](std::size_t i, double x) {
    v.data[i] = static_cast<float>(scale ? slope * x + inter : x);
  });
  return v;
}

LabelVolume to_labels(const NiftiImage& image) {
  if (image.header.channels() != 1) {
    throw ContractError(fmt::format("expected a 3D label volume, got {} channels", image.header.channels()));
  }
  LabelVolume v(image.geometry);
  const bool scale = image.header.has_scaling();
  const double slope = image.header.scl_slope, inter = image.header.scl_inter;
  for_each_raw_value(image, [&](std::size_t i, double x) {
    const double y = scale ? slope * x + inter : x;
    if (!(y >= 0.0 && y <= 255.0) || y != std::floor(y)) {
      const auto c = image.geometry.coords(i);
      throw DataError(fmt::format("label value {} at voxel ({}, {}, {}) is not an integer in 0..255", y, c[0],
                                  c[1], c[2]));
    }
    v.data[i] = static_cast<std::uint8_t>(y);
  });
  return v;
}

NiftiImage make_nifti(const VolumeGeometry& geometry, std::size_t channels, DataType type,
                      std::span<const double> values, const NiftiHeader* like) {
  if (channels == 0 || values.size() != geometry.voxel_count() * channels) {
    throw ContractError(fmt::format("make_nifti: {} values do not fill {} channel(s) of {} voxels", values.size(),
                                    channels, geometry.voxel_count()));
  }
  for (int a = 0; a < 3; ++a) {
    if (geometry.extents[a] < 1 || geometry.extents[a] > 32767) {
      throw ContractError("make_nifti: extent outside the NIfTI-1 range 1..32767");
    }
  }
  if (channels > 32767) throw ContractError("make_nifti: too many channels for NIfTI-1");

  NiftiImage img;
  NiftiHeader& h = img.header;
  if (like != nullptr) {
    h = *like;
  } else {
    h.xyzt_units = 2;  // mm
    h.sform_code = 2;
    h.qform_code = 0;
    for (int c = 0; c < 4; ++c) {
      h.srow_x[c] = static_cast<float>(geometry.affine[0][c]);
      h.srow_y[c] = static_cast<float>(geometry.affine[1][c]);
      h.srow_z[c] = static_cast<float>(geometry.affine[2][c]);
    }
  }
  h.sizeof_hdr = kNifti1HeaderSize;
  h.magic = {'n', '+', '1', '\0'};
  h.dim = {};
  h.dim[0] = channels > 1 ? 4 : 3;
  for (int a = 0; a < 3; ++a) h.dim[a + 1] = static_cast<std::int16_t>(geometry.extents[a]);
  h.dim[4] = static_cast<std::int16_t>(channels);
  for (int i = 5; i < 8; ++i) h.dim[i] = 1;
  if (channels == 1) h.dim[4] = 1;
  if (like == nullptr || h.pixdim[0] == 0.0f) h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(geometry.spacing_mm[a]);
  for (int i = 4; i < 8; ++i) h.pixdim[i] = like != nullptr ? h.pixdim[i] : 0.0f;
  if (channels > 1 && h.intent_code == 0) h.intent_code = 1001;  // vector-valued
  if (channels == 1 && h.intent_code == 1001) h.intent_code = 0;
  h.datatype = static_cast<std::int16_t>(type);
  h.bitpix = static_cast<std::int16_t>(8 * datatype_size(type));
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.vox_offset = static_cast<float>(kNifti1MinVoxOffset);
  h.extension = {};
  h.extension_data.clear();

  img.geometry = geometry;
  img.voxels.resize(values.size() * datatype_size(type));
  std::byte* p = img.voxels.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    switch (type) {
      case DataType::UInt8: store_native(p + i, checked_integer<std::uint8_t>(v, i)); break;
      case DataType::Int16: store_native(p + 2 * i, checked_integer<std::int16_t>(v, i)); break;
      case DataType::Int32: store_native(p + 4 * i, checked_integer<std::int32_t>(v, i)); break;
      case DataType::Float32: store_native(p + 4 * i, static_cast<float>(v)); break;
      case DataType::Float64: store_native(p + 8 * i, v); break;
    }
  }
  return img;
}

NiftiImage make_nifti(const LabelVolume& labels, DataType type, const NiftiHeader* like) {
  std::vector<double> values(labels.data.begin(), labels.data.end());
  return make_nifti(labels.geometry, 1, type, values, like);
}

NiftiImage make_nifti(const IntensityVolume& volume, DataType type, const NiftiHeader* like) {
  std::vector<double> values(volume.data.begin(), volume.data.end());
  return make_nifti(volume.geometry, 1, type, values, like);
}

}  // namespace btk
