#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "btk/volume.hpp"

namespace btk {

/// A named set of base labels. Voxels of a removed component are rewritten
/// to `removal_replacement`, which is never itself a member.
struct RegionSpec {
  std::string name;
  std::vector<std::uint8_t> member_labels;
  std::uint8_t removal_replacement = 0;

  bool contains(std::uint8_t label) const;
};

enum class SchemeKind { GliomaPostTreatment, MeningiomaRt };

struct LabelScheme {
  SchemeKind kind = SchemeKind::GliomaPostTreatment;
  std::string name;
  /// (label, name) pairs for the nonzero base labels.
  std::vector<std::pair<std::uint8_t, std::string>> base_labels;
  /// Regions the threshold policy runs over, in application order.
  std::vector<RegionSpec> threshold_regions;
  /// Regions reported by evaluation, in report order.
  std::vector<RegionSpec> evaluation_regions;
  /// Modality file suffixes expected for each case.
  std::vector<std::string> modalities;

  std::uint8_t max_label() const;
  const RegionSpec& region(std::string_view name) const;
};

/// Labels 1 NETC, 2 SNFH, 3 ET, 4 RC; thresholds over WT, TC, ET, RC;
/// reports ET, NETC, RC, SNFH, TC, WT.
LabelScheme glioma_scheme();
/// Label 1 GTV; single region.
LabelScheme meningioma_scheme();
/// Accepts "glioma-post-treatment" / "glioma" and "meningioma-rt" / "meningioma".
LabelScheme scheme_by_name(std::string_view name);

/// Throws ContractError naming the first voxel whose label exceeds the
/// scheme's alphabet.
void check_alphabet(const LabelVolume& labels, const LabelScheme& scheme);

BinaryMask region_mask(const LabelVolume& labels, const RegionSpec& region);
BinaryMask region_mask(const LabelVolume& labels, const RegionSpec& region, const LabelScheme& scheme);

/// Minimum component size in voxels per threshold region, in scheme order.
/// 0 disables removal for that region.
struct ThresholdPolicy {
  std::vector<std::size_t> min_voxels;
};

ThresholdPolicy parse_threshold_policy(std::string_view csv);

struct RemovalRecord {
  std::string region;
  std::size_t voxel_count = 0;
  std::array<double, 3> centroid{};  // voxel coordinates
};

struct ThresholdResult {
  LabelVolume labels;
  std::vector<RemovalRecord> removals;
};

/// Regions are processed in scheme order; every component whose size is
/// strictly below its region's threshold is rewritten to that region's
/// replacement label. Later regions see earlier removals.
ThresholdResult apply_threshold_policy(const LabelVolume& labels, const LabelScheme& scheme,
                                       const ThresholdPolicy& policy, int connectivity = 26);

/// One JSON object per line.
std::string removal_log_jsonl(const std::vector<RemovalRecord>& removals);

}  // namespace btk
