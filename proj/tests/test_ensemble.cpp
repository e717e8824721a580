#include <algorithm>
#include <fstream>

#include "btk/ensemble.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace btk;

namespace {

ProbabilityVolume random_probs(const VolumeGeometry& g, std::size_t channels, Rng& rng) {
  ProbabilityVolume p{g, channels, std::vector<double>(g.voxel_count() * channels)};
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) sum += (p.at(c, i) = rng.uniform() + 1e-3);
    for (std::size_t c = 0; c < channels; ++c) p.at(c, i) /= sum;
  }
  return p;
}

ProbabilityVolume single_voxel(std::vector<double> v) {
  return ProbabilityVolume{make_geometry({1, 1, 1}), v.size(), std::move(v)};
}

}  // namespace

TEST_CASE("weighted means") {
  const std::vector<ProbabilityVolume> two{single_voxel({0.6, 0.4}), single_voxel({0.2, 0.8})};
  const auto m = average_probabilities(two, {});
  CHECK(m.values[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(m.values[1] == doctest::Approx(0.6).epsilon(1e-15));

  const std::vector<ProbabilityVolume> onehot{single_voxel({1, 0}), single_voxel({0, 1})};
  const std::vector<double> w{2, 1};
  const auto wm = average_probabilities(onehot, w);
  CHECK(wm.values[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(wm.values[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("argmax with ties to the lower class") {
  CHECK(labels_from_probabilities(single_voxel({0.1, 0.7, 0.2}))[0] == 1);
  CHECK(labels_from_probabilities(single_voxel({0.5, 0.5}))[0] == 0);
  Rng rng(8);
  const auto p = random_probs(make_geometry({8, 8, 8}), 5, rng);
  const auto l = labels_from_probabilities(p);
  for (std::size_t i = 0; i < p.voxel_count(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 0; c < 5; ++c) if (p.at(c, i) > p.at(best, i)) best = c;
    CHECK(l[i] == best);
  }
}

TEST_CASE("streamed mean matches an in-memory long double mean") {
  Rng rng(12);
  const auto g = make_geometry({6, 5, 4});
  std::vector<ProbabilityVolume> folds;
  for (int k = 0; k < 5; ++k) folds.push_back(random_probs(g, 4, rng));
  const auto m = average_probabilities(folds, {});
  for (std::size_t j = 0; j < m.values.size(); ++j) {
    long double ref = 0;
    for (const auto& f : folds) ref += f.values[j];
    ref /= 5;
    CHECK(std::abs(static_cast<long double>(m.values[j]) - ref) <= 1e-12L);
  }
}

TEST_CASE("invalid members are rejected") {
  auto bad = single_voxel({0.7, 0.7});
  CHECK_THROWS_AS(validate_probabilities(bad, "m"), DataError);
  auto nan = single_voxel({std::nan(""), 1.0});
  CHECK_THROWS_AS(validate_probabilities(nan, "m"), DataError);
  const std::vector<ProbabilityVolume> mixed{single_voxel({1, 0}), single_voxel({1, 0, 0})};
  CHECK_THROWS_AS(average_probabilities(mixed, {}), ContractError);
  const std::vector<double> zero{0, 0};
  const std::vector<ProbabilityVolume> two{single_voxel({1, 0}), single_voxel({0, 1})};
  CHECK_THROWS_AS(average_probabilities(two, zero), ContractError);
}

TEST_CASE("spec parsing") {
  const auto s = parse_ensemble_spec(
      R"({"members":[{"model":"a","fold":0,"path":"x.nii.gz"},{"model":"b","fold":1,"path":"/abs/y.nii"}],
          "weights":[1,2],"output":"out.nii.gz"})",
      "/base");
  CHECK(s.members.size() == 2);
  CHECK(s.members[0].path == "/base/x.nii.gz");
  CHECK(s.members[1].path == "/abs/y.nii");
  CHECK(s.output == "/base/out.nii.gz");
  CHECK_THROWS_AS(parse_ensemble_spec(R"({"members":[],"bogus":1})"), ParseError);
  CHECK_THROWS_AS(parse_ensemble_spec(R"({"members":[{"path":"a","colour":1}]})"), ParseError);
  CHECK_THROWS_AS(parse_ensemble_spec("{not json"), ParseError);
  CHECK_THROWS_AS(parse_ensemble_spec(R"({"members":[{"path":"a"}],"weights":[1,2]})"), ContractError);
}

TEST_CASE("run_ensemble streams members from disk") {
  fixture::TempDir dir("ens");
  Rng rng(2);
  const auto g = make_geometry({5, 4, 3});
  std::vector<ProbabilityVolume> members;
  std::string json = R"({"members":[)";
  for (int k = 0; k < 3; ++k) {
    members.push_back(random_probs(g, 3, rng));
    const auto name = "m" + std::to_string(k) + ".nii.gz";
    write_nifti(dir.path() / name, make_probability_nifti(members.back(), DataType::Float64));
    json += (k ? "," : "") + std::string(R"({"model":"net","fold":)") + std::to_string(k) + R"(,"path":")" + name +
            "\"}";
  }
  json += "]}";
  const auto spec = parse_ensemble_spec(json, dir.path());
  const auto r = run_ensemble(spec);
  CHECK(r.labels == labels_from_probabilities(average_probabilities(members, {})));
  CHECK(r.header.dim[0] == 3);

  auto broken = spec;
  broken.members[1].path = dir.path() / "missing.nii.gz";
  try {
    run_ensemble(broken);
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("net fold 1") != std::string::npos);
  }
}
