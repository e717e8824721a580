#include "btk/regions.hpp"
#include "btk/volume_core.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace btk;

namespace {

LabelVolume line_of(std::vector<std::uint8_t> v) {
  LabelVolume l(make_geometry({v.size(), 1, 1}));
  l.data = std::move(v);
  return l;
}

}  // namespace

TEST_CASE("schemes and region masks") {
  const auto s = glioma_scheme();
  CHECK(s.max_label() == 4);
  const auto l = line_of({0, 1, 2, 3, 4});
  CHECK(region_mask(l, s.region("WT")).data == std::vector<std::uint8_t>{0, 1, 1, 1, 0});
  CHECK(region_mask(l, s.region("TC")).data == std::vector<std::uint8_t>{0, 1, 0, 1, 0});
  CHECK(popcount(region_mask(line_of({0, 0}), s.region("ET"))) == 0);
  CHECK_THROWS_AS(region_mask(line_of({0, 5}), s.region("WT"), s), ContractError);

  const auto m = meningioma_scheme();
  CHECK(region_mask(line_of({0, 1, 1}), m.region("GTV"), m).data == std::vector<std::uint8_t>{0, 1, 1});
  CHECK_THROWS_AS(check_alphabet(line_of({2}), m), ContractError);
  CHECK(scheme_by_name("meningioma").name == "meningioma-rt");
  CHECK_THROWS_AS(scheme_by_name("nope"), ContractError);

  for (const auto* sc : {&s, &m}) {
    for (const auto& r : sc->threshold_regions) CHECK_FALSE(r.contains(r.removal_replacement));
    for (const auto& [label, _] : sc->base_labels) {
      bool covered = false;
      for (const auto& r : sc->evaluation_regions) covered = covered || r.contains(label);
      CHECK(covered);
    }
  }
}

TEST_CASE("threshold policy parsing") {
  CHECK(parse_threshold_policy("50,0,0,50").min_voxels == std::vector<std::size_t>{50, 0, 0, 50});
  CHECK_THROWS_AS(parse_threshold_policy("50,-1"), ParseError);
  CHECK_THROWS_AS(parse_threshold_policy("a,b"), ParseError);
  const auto l = line_of({0});
  CHECK_THROWS_AS(apply_threshold_policy(l, glioma_scheme(), parse_threshold_policy("1,2")), ContractError);
}

TEST_CASE("strictly-below removal of WT blobs") {
  const auto s = glioma_scheme();
  LabelVolume l(make_geometry({40, 10, 10}), 0);
  // 49 voxels: 7x7x1; 50 voxels: 5x5x2.
  fixture::fill_box(l, {0, 0, 0}, {7, 7, 1}, 2);
  fixture::fill_box(l, {20, 0, 0}, {25, 5, 2}, 3);
  const auto r = apply_threshold_policy(l, s, parse_threshold_policy("50,0,0,50"));
  REQUIRE(r.removals.size() == 1);
  CHECK(r.removals[0].region == "WT");
  CHECK(r.removals[0].voxel_count == 49);
  CHECK(r.removals[0].centroid[0] == doctest::Approx(3.0));
  CHECK(r.labels.at(3, 3, 0) == 0);
  CHECK(r.labels.at(22, 2, 1) == 3);
  CHECK(removal_log_jsonl(r.removals).find("\"WT\"") != std::string::npos);
}

TEST_CASE("ET removal becomes core so TC and WT keep their extent") {
  const auto s = glioma_scheme();
  LabelVolume l(make_geometry({10, 10, 10}), 0);
  fixture::fill_box(l, {0, 0, 0}, {6, 6, 6}, 2);
  fixture::fill_box(l, {1, 1, 1}, {3, 3, 3}, 3);
  const auto r = apply_threshold_policy(l, s, parse_threshold_policy("0,0,10,0"));
  CHECK(r.labels.at(1, 1, 1) == 1);
  CHECK(popcount(region_mask(r.labels, s.region("WT"))) == popcount(region_mask(l, s.region("WT"))));
  CHECK(popcount(region_mask(r.labels, s.region("TC"))) == popcount(region_mask(l, s.region("TC"))));
}

TEST_CASE("policy properties on random label volumes") {
  const auto s = glioma_scheme();
  Rng rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = make_geometry(fixture::random_extents(rng, 14));
    LabelVolume l(g, 0);
    for (auto& v : l.data) v = rng.uniform() < 0.3 ? static_cast<std::uint8_t>(1 + rng.below(4)) : 0;
    const ThresholdPolicy p{{rng.below(8), rng.below(8), rng.below(8), rng.below(8)}};

    const auto once = apply_threshold_policy(l, s, p);
    CHECK(apply_threshold_policy(once.labels, s, p).labels == once.labels);
    CHECK(apply_threshold_policy(l, s, ThresholdPolicy{{0, 0, 0, 0}}).labels == l);

    // Every surviving WT component meets the WT threshold when WT is the only rule.
    const ThresholdPolicy wt_only{{p.min_voxels[0], 0, 0, 0}};
    const auto w = apply_threshold_policy(l, s, wt_only);
    const BinaryMask wt = region_mask(w.labels, s.region("WT"));
    std::uint32_t k = 0;
    const auto ids = oracle::components(wt, 26, &k);
    std::vector<std::size_t> sizes(k, 0);
    for (auto id : ids) if (id) ++sizes[id - 1];
    for (auto n : sizes) CHECK(n >= p.min_voxels[0]);

    // Raising a threshold never grows the region.
    const ThresholdPolicy higher{{p.min_voxels[0] + 5, 0, 0, 0}};
    CHECK(popcount(region_mask(apply_threshold_policy(l, s, higher).labels, s.region("WT"))) <= popcount(wt));
  }
}
