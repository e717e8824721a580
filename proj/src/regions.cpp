#include "btk/regions.hpp"

#include <algorithm>
#include <charconv>

#include <fmt/format.h>

#include "btk/volume_core.hpp"

namespace btk {

bool RegionSpec::contains(std::uint8_t label) const {
  return std::find(member_labels.begin(), member_labels.end(), label) != member_labels.end();
}

std::uint8_t LabelScheme::max_label() const {
  std::uint8_t m = 0;
  for (const auto& [label, _] : base_labels) m = std::max(m, label);
  return m;
}

const RegionSpec& LabelScheme::region(std::string_view n) const {
  for (const auto* list : {&evaluation_regions, &threshold_regions}) {
    for (const auto& r : *list) {
      if (r.name == n) return r;
    }
  }
  throw ContractError(fmt::format("scheme '{}' has no region '{}'", name, n));
}

LabelScheme glioma_scheme() {
  LabelScheme s;
  s.kind = SchemeKind::GliomaPostTreatment;
  s.name = "glioma-post-treatment";
  s.base_labels = {{1, "NETC"}, {2, "SNFH"}, {3, "ET"}, {4, "RC"}};
  // Replacements keep the nesting ET in TC in WT intact: a dropped ET blob
  // becomes core, a dropped core blob becomes oedema.
  const RegionSpec wt{"WT", {1, 2, 3}, 0};
  const RegionSpec tc{"TC", {1, 3}, 2};
  const RegionSpec et{"ET", {3}, 1};
  const RegionSpec rc{"RC", {4}, 0};
  s.threshold_regions = {wt, tc, et, rc};
  s.evaluation_regions = {et, RegionSpec{"NETC", {1}, 0}, rc, RegionSpec{"SNFH", {2}, 0}, tc, wt};
  s.modalities = {"t1n", "t1c", "t2w", "t2f"};
  return s;
}

LabelScheme meningioma_scheme() {
  LabelScheme s;
  s.kind = SchemeKind::MeningiomaRt;
  s.name = "meningioma-rt";
  s.base_labels = {{1, "GTV"}};
  const RegionSpec gtv{"GTV", {1}, 0};
  s.threshold_regions = {gtv};
  s.evaluation_regions = {gtv};
  s.modalities = {"t1c"};
  return s;
}

LabelScheme scheme_by_name(std::string_view name) {
  if (name == "glioma-post-treatment" || name == "glioma") return glioma_scheme();
  if (name == "meningioma-rt" || name == "meningioma") return meningioma_scheme();
  throw ContractError(fmt::format("unknown label scheme '{}' (expected glioma-post-treatment or meningioma-rt)", name));
}

void check_alphabet(const LabelVolume& labels, const LabelScheme& scheme) {
  const std::uint8_t top = scheme.max_label();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > top) {
      const auto c = labels.geometry.coords(i);
      throw ContractError(fmt::format("label {} at voxel ({}, {}, {}) is outside the {} alphabet 0..{}", labels[i],
                                      c[0], c[1], c[2], scheme.name, top));
    }
  }
}

BinaryMask region_mask(const LabelVolume& labels, const RegionSpec& region) {
  std::array<std::uint8_t, 256> lut{};
  for (auto l : region.member_labels) lut[l] = 1;
  BinaryMask m(labels.geometry, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) m[i] = lut[labels[i]];
  return m;
}

BinaryMask region_mask(const LabelVolume& labels, const RegionSpec& region, const LabelScheme& scheme) {
  check_alphabet(labels, scheme);
  return region_mask(labels, region);
}

ThresholdPolicy parse_threshold_policy(std::string_view csv) {
  ThresholdPolicy p;
  while (!csv.empty()) {
    const auto comma = csv.find(',');
    std::string_view tok = csv.substr(0, comma);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size()) {
      throw ParseError(fmt::format("threshold '{}' is not a non-negative integer", tok));
    }
    p.min_voxels.push_back(v);
    if (comma == std::string_view::npos) break;
    csv.remove_prefix(comma + 1);
  }
  return p;
}

ThresholdResult apply_threshold_policy(const LabelVolume& labels, const LabelScheme& scheme,
                                       const ThresholdPolicy& policy, int connectivity) {
  if (policy.min_voxels.size() != scheme.threshold_regions.size()) {
    throw ContractError(fmt::format("threshold policy has {} entries but scheme '{}' has {} regions",
                                    policy.min_voxels.size(), scheme.name, scheme.threshold_regions.size()));
  }
  check_alphabet(labels, scheme);
  ThresholdResult result{labels, {}};
  LabelVolume& out = result.labels;
  for (std::size_t r = 0; r < scheme.threshold_regions.size(); ++r) {
    const std::size_t threshold = policy.min_voxels[r];
    if (threshold == 0) continue;
    const RegionSpec& region = scheme.threshold_regions[r];
    const ComponentSet cs = connected_components(region_mask(out, region), connectivity);
    std::vector<std::uint8_t> drop(cs.count() + 1, 0);
    bool any = false;
    for (std::size_t id = 1; id <= cs.count(); ++id) {
      if (cs.voxel_counts[id - 1] < threshold) drop[id] = any = true;
    }
    if (!any) continue;
    std::vector<std::array<double, 3>> sums(cs.count() + 1, {0.0, 0.0, 0.0});
    for (std::size_t i = 0; i < out.size(); ++i) {
      const std::uint32_t id = cs.labels[i];
      if (id == 0 || !drop[id]) continue;
      const auto c = out.geometry.coords(i);
      for (int a = 0; a < 3; ++a) sums[id][a] += static_cast<double>(c[a]);
      out[i] = region.removal_replacement;
    }
    for (std::size_t id = 1; id <= cs.count(); ++id) {
      if (!drop[id]) continue;
      const auto n = static_cast<double>(cs.voxel_counts[id - 1]);
      result.removals.push_back({region.name, cs.voxel_counts[id - 1], {sums[id][0] / n, sums[id][1] / n, sums[id][2] / n}});
    }
  }
  return result;
}

std::string removal_log_jsonl(const std::vector<RemovalRecord>& removals) {
  std::string out;
  for (const auto& r : removals) {
    out += fmt::format("{{\"region\":\"{}\",\"voxels\":{},\"centroid\":[{:.3f},{:.3f},{:.3f}]}}\n", r.region,
                       r.voxel_count, r.centroid[0], r.centroid[1], r.centroid[2]);
  }
  return out;
}

}  // namespace btk
