#include <algorithm>
#include <cstring>

#include "btk/nifti_io.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace btk;

namespace {

std::vector<double> sample_values(DataType t, std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) {
    switch (t) {
      case DataType::UInt8: x = static_cast<double>(rng.below(256)); break;
      case DataType::Int16: x = static_cast<double>(rng.below(65536)) - 32768.0; break;
      case DataType::Int32: x = static_cast<double>(rng.below(1ull << 32)) - 2147483648.0; break;
      case DataType::Float32: x = static_cast<float>(rng.normal() * 1e3); break;
      case DataType::Float64: x = rng.normal() * 1e6; break;
    }
  }
  return v;
}

constexpr DataType kAllTypes[] = {DataType::UInt8, DataType::Int16, DataType::Int32, DataType::Float32,
                                  DataType::Float64};

std::vector<std::byte> bytes_of(std::string_view s) {
  std::vector<std::byte> b(s.size());
  std::memcpy(b.data(), s.data(), s.size());
  return b;
}

}  // namespace

TEST_CASE("round trip across datatypes, compression and byte order") {
  Rng rng(7);
  for (DataType t : kAllTypes) {
    for (bool gz : {false, true}) {
      for (bool big : {false, true}) {
        const auto g = make_geometry({5, 4, 3}, {0.5, 1.0, 2.5});
        const auto values = sample_values(t, g.voxel_count() * 2, rng);
        NiftiImage img = make_nifti(g, 2, t, values);
        img.header.big_endian = big;
        const auto encoded = encode_nifti(img, gz);
        CHECK(has_gzip_magic(encoded) == gz);
        const NiftiImage back = parse_nifti(encoded);
        CHECK(back.header.big_endian == big);
        CHECK(back.header.type() == t);
        CHECK(back.header.channels() == 2);
        CHECK(back.voxels == img.voxels);
        CHECK(real_values(back) == values);
        CHECK(back.geometry.spacing_mm == g.spacing_mm);
        CHECK(encode_nifti(back, gz) == encoded);
      }
    }
  }
}

TEST_CASE("file round trip keeps extension bytes") {
  fixture::TempDir dir("nifti");
  const auto g = make_geometry({3, 3, 3});
  NiftiImage img = make_nifti(LabelVolume(g, 2));
  img.header.extension = {1, 0, 0, 0};
  img.header.extension_data.assign(16, std::byte{0x5a});
  for (const char* name : {"a.nii", "a.nii.gz"}) {
    write_nifti(dir.path() / name, img);
    const NiftiImage back = read_nifti(dir.path() / name);
    CHECK(back.header.extension_data == img.header.extension_data);
    CHECK(back.header.vox_offset == doctest::Approx(352 + 16));
    CHECK(back.voxels == img.voxels);
  }
  CHECK(has_gzip_magic(read_file_bytes(dir.path() / "a.nii.gz")));
  CHECK_FALSE(has_gzip_magic(read_file_bytes(dir.path() / "a.nii")));
}

TEST_CASE("scaling is applied on read") {
  const auto g = make_geometry({2, 1, 1});
  NiftiImage img = make_nifti(g, 1, DataType::Int16, std::vector<double>{10, 20});
  img.header.scl_slope = 0.5f;
  img.header.scl_inter = 1.0f;
  const auto back = parse_nifti(encode_nifti(img, false));
  CHECK(real_values(back) == std::vector<double>{6.0, 11.0});
  CHECK(back.header.has_scaling());
}

TEST_CASE("labels must be integral bytes") {
  const auto g = make_geometry({2, 1, 1});
  CHECK_THROWS_AS(to_labels(make_nifti(g, 1, DataType::Float32, std::vector<double>{0.5, 1})), DataError);
  CHECK_THROWS_AS(to_labels(make_nifti(g, 1, DataType::Int16, std::vector<double>{300, 1})), DataError);
  CHECK(to_labels(make_nifti(g, 1, DataType::Float32, std::vector<double>{4, 1})).data ==
        std::vector<std::uint8_t>{4, 1});
  CHECK_THROWS_AS(make_nifti(g, 1, DataType::UInt8, std::vector<double>{256, 1}), ContractError);
}

TEST_CASE("malformed inputs name the offending field") {
  const auto g = make_geometry({4, 4, 4});
  const auto good = encode_nifti(make_nifti(LabelVolume(g, 1)), false);

  auto corrupt = [&](std::size_t offset, std::vector<std::byte> patch) {
    auto b = good;
    std::copy(patch.begin(), patch.end(), b.begin() + static_cast<std::ptrdiff_t>(offset));
    return b;
  };
  auto message = [](const std::vector<std::byte>& b) {
    try {
      parse_nifti(b);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message(corrupt(0, {std::byte{0}, std::byte{1}, std::byte{0}, std::byte{0}})).find("sizeof_hdr") !=
        std::string::npos);
  CHECK(message(corrupt(40, {std::byte{9}, std::byte{0}})).find("dim") != std::string::npos);
  CHECK(message(corrupt(72, {std::byte{7}, std::byte{0}})).find("bitpix") != std::string::npos);
  CHECK(message(corrupt(344, bytes_of("xx1"))).find("magic") != std::string::npos);
  CHECK_THROWS_AS(parse_nifti(corrupt(344, bytes_of("ni1"))), UnsupportedFormatError);

  auto truncated = good;
  truncated.resize(truncated.size() - 5);
  CHECK_THROWS_AS(parse_nifti(truncated), IoError);
  CHECK_THROWS_AS(parse_nifti(std::span(good).first(100)), Error);
  CHECK_THROWS_AS(read_nifti("/nonexistent/file.nii"), IoError);
}

TEST_CASE("NIfTI-2 headers are rejected") {
  std::vector<std::byte> b(600, std::byte{0});
  const std::int32_t n2 = 540;
  std::memcpy(b.data(), &n2, 4);
  CHECK_THROWS_AS(parse_nifti(b), UnsupportedFormatError);
}

TEST_CASE("fuzzed headers raise library errors only") {
  const auto g = make_geometry({6, 5, 4});
  Rng rng(99);
  const auto good = encode_nifti(make_nifti(g, 1, DataType::Float32, std::vector<double>(120, 1.5)), false);
  for (int trial = 0; trial < 2000; ++trial) {
    auto b = good;
    const int flips = 1 + static_cast<int>(rng.below(8));
    for (int k = 0; k < flips; ++k) b[rng.below(352)] = static_cast<std::byte>(rng.below(256));
    if (rng.below(4) == 0) b.resize(rng.below(b.size()));
    try {
      const auto img = parse_nifti(b);
      (void)real_values(img);
    } catch (const Error&) {
    }
  }
  CHECK(true);
}

TEST_CASE("all-zero bytes volume is header plus payload") {
  fixture::TempDir dir("nifti");
  write_nifti(dir.path() / "z.nii", make_nifti(LabelVolume(make_geometry({2, 2, 2}), 0)));
  const auto raw = read_file_bytes(dir.path() / "z.nii");
  REQUIRE(raw.size() == 360);
  CHECK(std::all_of(raw.begin() + 352, raw.end(), [](std::byte b) { return b == std::byte{0}; }));
  write_nifti(dir.path() / "x.nii.gz", make_nifti(LabelVolume(make_geometry({2, 2, 2}), 0)));
  const auto gz = read_file_bytes(dir.path() / "x.nii.gz");
  CHECK(gz[0] == std::byte{0x1f});
  CHECK(gz[1] == std::byte{0x8b});
}

TEST_CASE("label histogram survives a uint8 round trip") {
  Rng rng(3);
  LabelVolume labels(make_geometry({9, 8, 7}), 0);
  std::array<std::size_t, 5> before{};
  for (auto& l : labels.data) ++before[l = static_cast<std::uint8_t>(rng.below(5))];
  const LabelVolume back = to_labels(parse_nifti(encode_nifti(make_nifti(labels), true)));
  std::array<std::size_t, 5> after{};
  for (auto l : back.data) ++after[l];
  CHECK(after == before);
}
