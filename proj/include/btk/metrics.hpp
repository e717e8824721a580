#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "btk/regions.hpp"
#include "btk/volume.hpp"
#include "btk/volume_core.hpp"

namespace btk {

enum class MetricMode { Volumetric, LesionWise, SemiLesionWise };

std::string_view mode_name(MetricMode mode);
/// "volumetric", "lesion-wise", "semi-lesion-wise".
MetricMode parse_mode(std::string_view name);

/// HD95 assigned to an empty-vs-nonempty comparison and to every penalised
/// lesion term.
inline constexpr double kDefaultPenaltyMm = 374.0;

/// 2|A∩B| / (|A| + |B|); 1 when both are empty.
double dice(const BinaryMask& pred, const BinaryMask& gt);

/// Directed surface-to-surface distances (mm). Surface voxels are mask voxels
/// with a face neighbour outside the mask or on the grid border.
struct SurfaceDistanceSet {
  std::vector<double> pred_to_gt;
  std::vector<double> gt_to_pred;
};

SurfaceDistanceSet surface_distances(const BinaryMask& pred, const BinaryMask& gt);

/// Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value.
double percentile_nearest_rank(std::vector<double> values, double pct);

/// 95th nearest-rank percentile of the pooled symmetric surface distances.
/// 0 when both masks are empty, `penalty_mm` when exactly one is.
double hd95(const BinaryMask& pred, const BinaryMask& gt, double penalty_mm = kDefaultPenaltyMm);

struct LesionMatch {
  ComponentSet gt;
  ComponentSet pred;
  std::vector<std::vector<std::uint32_t>> gt_matches;    // [gt id - 1] -> matched pred ids
  std::vector<std::vector<std::uint32_t>> pred_matches;  // [pred id - 1] -> matched gt ids
  int dilation_voxels = 0;

  std::size_t tp() const;          // matched GT lesions
  std::size_t fn() const;          // unmatched GT lesions
  std::size_t fp() const;          // unmatched predicted lesions
  std::size_t matched_pred() const;
};

/// A predicted component matches a GT component when it overlaps the GT
/// component (dilated by `dilation_voxels` for the test only) in >= 1 voxel.
/// Many-to-many matches are allowed.
LesionMatch match_lesions(const BinaryMask& pred, const BinaryMask& gt, int connectivity = 26,
                          int dilation_voxels = 0);

struct LesionOptions {
  MetricMode mode = MetricMode::SemiLesionWise;
  double penalty_mm = kDefaultPenaltyMm;
  int connectivity = 26;
  int dilation_voxels = 0;
};

struct LesionScores {
  double dsc = 1.0;
  double hd95 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Mean of per-lesion terms: each GT lesion scored against the union of its
/// matched predictions, FN lesions at (0, penalty), and in lesion-wise mode
/// FP lesions at (0, penalty) too. Semi-lesion-wise mode drops FP terms.
LesionScores lesion_wise_scores(const BinaryMask& pred, const BinaryMask& gt, const LesionOptions& options);

struct RegionScore {
  std::string region;
  double dsc = 1.0;
  double hd95 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct MetricsReport {
  std::string case_id;
  MetricMode mode = MetricMode::Volumetric;
  std::vector<RegionScore> regions;
};

/// Scores every evaluation region of the scheme. Lesion counts are filled in
/// every mode; dsc/hd95 are volumetric or lesion-wise according to the mode.
MetricsReport evaluate_case(const std::string& case_id, const LabelVolume& pred, const LabelVolume& gt,
                            const LabelScheme& scheme, const LesionOptions& options);

struct RegionSummary {
  std::string region;
  std::size_t cases = 0;
  double dsc_mean = 0, dsc_std = 0, hd95_mean = 0, hd95_std = 0;
  std::size_t tp = 0, fp = 0, fn = 0;
};

struct AggregateSummary {
  MetricMode mode = MetricMode::Volumetric;
  std::vector<RegionSummary> regions;
};

/// Per-region mean and population std; counts summed. Independent of the
/// order reports arrive in.
AggregateSummary aggregate_reports(std::span<const MetricsReport> reports);

// Report serialisation.
std::string reports_csv(std::span<const MetricsReport> reports);
std::string reports_json(std::span<const MetricsReport> reports);
std::vector<MetricsReport> parse_reports_csv(std::string_view text);
std::string summary_csv(const AggregateSummary& summary);
std::string summary_json(const AggregateSummary& summary);
/// Fixed-width text table for terminals.
std::string summary_table(const AggregateSummary& summary);

}  // namespace btk
