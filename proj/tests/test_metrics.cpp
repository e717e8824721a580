#include "btk/metrics.hpp"
#include "btk/volume_core.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace btk;

namespace {

BinaryMask box_mask(const VolumeGeometry& g, std::array<std::size_t, 3> lo, std::array<std::size_t, 3> hi) {
  LabelVolume l(g, 0);
  fixture::fill_box(l, lo, hi, 1);
  return l;
}

BinaryMask union_of(BinaryMask a, const BinaryMask& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] |= b[i];
  return a;
}

}  // namespace

TEST_CASE("dice edge cases") {
  const auto g = make_geometry({4, 4, 4});
  const BinaryMask empty(g, 0);
  const BinaryMask a = box_mask(g, {0, 0, 0}, {2, 2, 2});
  CHECK(dice(empty, empty) == 1.0);
  CHECK(dice(a, empty) == 0.0);
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, box_mask(g, {0, 0, 0}, {2, 2, 1})) == doctest::Approx(2.0 * 4 / 12));
}

TEST_CASE("hd95 empty handling and a shifted cube") {
  const auto g = make_geometry({10, 10, 10});
  const BinaryMask empty(g, 0);
  const BinaryMask a = box_mask(g, {2, 2, 2}, {5, 5, 5});
  CHECK(hd95(empty, empty) == 0.0);
  CHECK(hd95(a, empty) == kDefaultPenaltyMm);
  CHECK(hd95(empty, a, 10.0) == 10.0);
  CHECK(hd95(a, a) == 0.0);
  CHECK(hd95(a, box_mask(g, {3, 2, 2}, {6, 5, 5})) == oracle::hd95(a, box_mask(g, {3, 2, 2}, {6, 5, 5}), 374));
}

TEST_CASE("nearest-rank percentile") {
  CHECK(percentile_nearest_rank({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 95) == 10);
  std::vector<double> v(20);
  for (int i = 0; i < 20; ++i) v[static_cast<std::size_t>(i)] = i + 1;
  CHECK(percentile_nearest_rank(v, 95) == 19);
  CHECK_THROWS_AS(percentile_nearest_rank({}, 95), ContractError);
}

TEST_CASE("metrics agree with brute force on random masks") {
  Rng rng(31);
  for (int trial = 0; trial < 150; ++trial) {
    const Spacing s = {0.5 * static_cast<double>(1 + rng.below(3)), 1.0, 0.25 * static_cast<double>(2 + rng.below(6))};
    const auto g = make_geometry(fixture::random_extents(rng, 10), s);
    const BinaryMask a = fixture::random_mask(g, rng.uniform(0, 0.5), rng);
    const BinaryMask b = fixture::random_mask(g, rng.uniform(0, 0.5), rng);
    CHECK(dice(a, b) == oracle::dice(a, b));
    CHECK(std::abs(hd95(a, b) - oracle::hd95(a, b, kDefaultPenaltyMm)) <= 1e-9);
  }
}

TEST_CASE("lesion matching with and without dilation") {
  const auto g = make_geometry({20, 8, 8});
  const BinaryMask gt = union_of(box_mask(g, {0, 0, 0}, {3, 3, 3}), box_mask(g, {10, 0, 0}, {13, 3, 3}));
  const BinaryMask pred = union_of(box_mask(g, {1, 1, 1}, {3, 3, 3}), box_mask(g, {14, 0, 0}, {15, 3, 3}));
  const auto m = match_lesions(pred, gt);
  CHECK(m.tp() == 1);
  CHECK(m.fn() == 1);
  CHECK(m.fp() == 1);
  const auto md = match_lesions(pred, gt, 26, 2);
  CHECK(md.tp() == 2);
  CHECK(md.fp() == 0);
  CHECK_THROWS_AS(match_lesions(pred, gt, 26, -1), ContractError);
}

TEST_CASE("lesion-wise and semi-lesion-wise aggregation") {
  const auto g = make_geometry({30, 8, 8});
  const BinaryMask gt = union_of(box_mask(g, {0, 0, 0}, {4, 4, 4}), box_mask(g, {10, 0, 0}, {12, 2, 2}));
  const BinaryMask fp_blob = box_mask(g, {25, 5, 5}, {27, 7, 7});
  const BinaryMask pred = union_of(box_mask(g, {0, 0, 0}, {4, 4, 4}), fp_blob);

  LesionOptions semi;
  semi.mode = MetricMode::SemiLesionWise;
  const auto s = lesion_wise_scores(pred, gt, semi);
  CHECK(s.tp == 1);
  CHECK(s.fn == 1);
  CHECK(s.fp == 1);
  CHECK(s.dsc == doctest::Approx(0.5));
  CHECK(s.hd95 == doctest::Approx(kDefaultPenaltyMm / 2));

  LesionOptions full = semi;
  full.mode = MetricMode::LesionWise;
  const auto f = lesion_wise_scores(pred, gt, full);
  CHECK(f.dsc == doctest::Approx(1.0 / 3.0));
  CHECK(f.hd95 == doctest::Approx(2 * kDefaultPenaltyMm / 3));

  const BinaryMask empty(g, 0);
  CHECK(lesion_wise_scores(empty, empty, full).dsc == 1.0);
  CHECK(lesion_wise_scores(empty, empty, full).hd95 == 0.0);
  CHECK(lesion_wise_scores(fp_blob, empty, semi).dsc == 1.0);
  CHECK(lesion_wise_scores(fp_blob, empty, full).dsc == 0.0);
  LesionOptions vol;
  vol.mode = MetricMode::Volumetric;
  CHECK_THROWS_AS(lesion_wise_scores(pred, gt, vol), ContractError);
}

TEST_CASE("case evaluation, aggregation and CSV round trip") {
  const auto s = glioma_scheme();
  const auto c = fixture::synthetic_case("c1", s, {24, 24, 16}, 1);
  LesionOptions o;
  o.mode = MetricMode::Volumetric;
  const auto r = evaluate_case("c1", c.labels, c.labels, s, o);
  REQUIRE(r.regions.size() == 6);
  CHECK(r.regions[0].region == "ET");
  CHECK(r.regions[5].region == "WT");
  CHECK(r.regions[2].dsc == 1.0);  // RC absent on both sides
  for (const auto& row : r.regions) {
    CHECK(row.dsc == 1.0);
    CHECK(row.hd95 == 0.0);
  }
  auto r2 = r;
  r2.case_id = "c0";
  r2.regions[0].dsc = 0.5;
  const std::vector<MetricsReport> reports{r, r2};
  const auto text = reports_csv(reports);
  const auto parsed = parse_reports_csv(text);
  CHECK(reports_csv(parsed) == text);
  const auto agg = aggregate_reports(parsed);
  CHECK(agg.regions[0].dsc_mean == doctest::Approx(0.75));
  CHECK(agg.regions[0].dsc_std == doctest::Approx(0.25));
  CHECK(agg.regions[0].cases == 2);
  CHECK(summary_csv(agg).rfind("Region,DSC (Mean),DSC (Std),HD95 (Mean),HD95 (Std)", 0) == 0);
  CHECK(summary_table(agg).find("WT") != std::string::npos);
  CHECK(parse_mode("semi-lesion-wise") == MetricMode::SemiLesionWise);
  CHECK_THROWS_AS(parse_mode("other"), ParseError);
  CHECK_THROWS_AS(parse_reports_csv("case_id,mode\n"), ParseError);
}
