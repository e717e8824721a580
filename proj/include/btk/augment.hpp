#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "btk/nifti_io.hpp"
#include "btk/regions.hpp"
#include "btk/rng.hpp"
#include "btk/volume.hpp"

namespace btk {

/// One case: co-registered modalities plus the segmentation.
struct CaseRecord {
  std::string id;
  LabelScheme scheme;
  std::vector<std::string> modality_names;
  std::vector<IntensityVolume> modalities;
  LabelVolume labels;
  // Templates for writing; empty when the case was built in memory.
  std::vector<NiftiHeader> modality_headers;
  std::optional<NiftiHeader> label_header;
};

/// Shared geometry, modality count matching the scheme, labels in alphabet.
void validate_case(const CaseRecord& c);

/// Generator output: intensities per modality, labels and an alpha field,
/// all on the same small grid.
struct LesionPatch {
  LabelVolume labels;
  std::vector<IntensityVolume> intensities;
  Volume<float> blend;

  const Extents& extents() const { return labels.extents(); }
};

enum class HeadMaskSource { Nonzero, Otsu };

struct SizeRange {
  double min_radius = 4.0;  // voxels
  double max_radius = 10.0;
};

struct InsertionSpec {
  std::uint64_t seed = 0;
  std::size_t copies = 1;
  std::size_t max_retries = 200;
  double use_generated_label = 0.5;
  std::size_t min_distance = 0;  // voxels (Chebyshev) from existing lesion
  double blend_sigma = 1.0;      // voxels
  HeadMaskSource head_mask = HeadMaskSource::Nonzero;
  SizeRange size;
  int connectivity = 26;
};

void validate_spec(const InsertionSpec& spec);

struct TissueStats {
  double mean = 0.0;
  double stddev = 1.0;
};

/// Nested randomized superellipsoid blobs: oedema(2) ⊇ enhancing(3) ⊇ core(1)
/// for glioma, one GTV(1) blob for meningioma. The outermost voxel shell of
/// the patch is always 0.
LabelVolume generate_random_label(const LabelScheme& scheme, const SizeRange& size, Rng& rng);

/// Class-conditioned intensities with spatially correlated noise and a
/// Gaussian-smoothed support indicator as blend weight. The patch is padded
/// so the smoothed weight fits and stays 0 on the border shell.
LesionPatch procedural_lesion(const LabelVolume& label_patch, const LabelScheme& scheme,
                              std::span<const TissueStats> modality_stats, double blend_sigma, Rng& rng);

/// Pluggable lesion source; a learned generator can replace the procedural one.
class LesionGenerator {
 public:
  virtual ~LesionGenerator() = default;
  virtual LesionPatch generate(const LabelVolume& label_patch, const LabelScheme& scheme,
                               std::span<const TissueStats> modality_stats, double blend_sigma, Rng& rng) const = 0;
};

class ProceduralGenerator final : public LesionGenerator {
 public:
  LesionPatch generate(const LabelVolume& label_patch, const LabelScheme& scheme,
                       std::span<const TissueStats> modality_stats, double blend_sigma, Rng& rng) const override {
    return procedural_lesion(label_patch, scheme, modality_stats, blend_sigma, rng);
  }
};

/// Per-case data every placement attempt needs.
struct PlacementContext {
  BinaryMask head;
  BinaryMask forbidden;  // existing lesion grown by min_distance
  BinaryMask rim;        // head voxels within 2 voxels of non-head
  std::vector<std::uint32_t> candidates;  // head voxels, ascending
};

PlacementContext make_placement_context(const CaseRecord& c, const InsertionSpec& spec);
std::vector<TissueStats> healthy_tissue_stats(const CaseRecord& c, const BinaryMask& head);

struct Placement {
  std::array<std::size_t, 3> center{};
  std::size_t attempts = 0;
  bool near_head_boundary = false;
};

/// Window origin for a patch of `extents` centred on `center`.
std::array<std::ptrdiff_t, 3> window_origin(const std::array<std::size_t, 3>& center, const Extents& extents);

/// Draws centres uniformly from head voxels until the patch's label support
/// lies inside the head, avoids existing (grown) lesions and the window fits
/// the volume. Throws PlacementError after `max_retries` draws.
Placement sample_center(const PlacementContext& ctx, const LabelVolume& patch_labels, const InsertionSpec& spec,
                        Rng& rng);

/// Alpha-blends the patch into every modality and writes its nonzero labels.
/// Voxels outside the window are untouched. The result id is "<id>-<copy>".
CaseRecord insert_lesion(const CaseRecord& c, const LesionPatch& patch, const std::array<std::size_t, 3>& center,
                         std::size_t copy_index);

/// Bounding-box crop of one random lesion component of `donor`, padded with
/// a zero shell. nullopt when the donor has no lesion.
std::optional<LabelVolume> crop_donor_lesion(const LabelVolume& donor, int connectivity, Rng& rng);

struct ManifestEntry {
  std::string case_id;
  std::size_t copy = 0;
  std::string new_id;
  std::uint64_t seed = 0;
  std::string label_source;  // "generated", "real" or "generated-fallback"
  std::string donor;
  std::array<std::size_t, 3> center{};
  std::array<std::size_t, 3> window_origin{};  // patch window, voxels
  Extents window_extents{};
  std::size_t attempts = 0;
  bool near_head_boundary = false;
  bool ok = false;
  std::string error;
  bool placement_failure = false;
};

struct ManifestSummary {
  std::size_t original_cases = 0;
  std::size_t new_cases = 0;
  std::size_t skipped = 0;
  std::size_t total() const { return original_cases + new_cases; }
};

ManifestSummary summarize(std::span<const ManifestEntry> entries, std::size_t original_cases);
/// One JSON object per entry, then a summary line.
std::string manifest_jsonl(std::span<const ManifestEntry> entries, const ManifestSummary& summary);

/// Supplies the labels of another case for the real-label option.
using DonorSource = std::function<std::optional<std::pair<std::string, LabelVolume>>(Rng&)>;

struct CopyResult {
  ManifestEntry entry;
  std::optional<CaseRecord> record;
};

/// Runs every copy for one case. Failures are recorded, not thrown.
std::vector<CopyResult> augment_case(const CaseRecord& c, const InsertionSpec& spec, const DonorSource& donors,
                                     const LesionGenerator& generator);

struct AugmentResult {
  std::vector<CaseRecord> new_cases;
  std::vector<ManifestEntry> manifest;
  ManifestSummary summary;
};

/// In-memory dataset augmentation; donors are the other cases.
AugmentResult augment_cases(std::span<const CaseRecord> cases, const InsertionSpec& spec,
                            const LesionGenerator& generator = ProceduralGenerator{});

// Dataset layout: <root>/<id>/<id>_<modality>.nii[.gz] and <id>_seg.nii[.gz].
std::vector<std::string> list_cases(const std::filesystem::path& root);
CaseRecord load_case(const std::filesystem::path& root, const std::string& id, const LabelScheme& scheme);
LabelVolume load_case_labels(const std::filesystem::path& root, const std::string& id);
void save_case(const std::filesystem::path& root, const CaseRecord& c);

struct DatasetAugmentResult {
  std::vector<ManifestEntry> manifest;
  ManifestSummary summary;
};

/// Streams cases from `in_root`, writes new cases and manifest.jsonl under
/// `out_root`. Output is identical for any worker count.
DatasetAugmentResult augment_dataset(const std::filesystem::path& in_root, const std::filesystem::path& out_root,
                                     const LabelScheme& scheme, const InsertionSpec& spec,
                                     const LesionGenerator& generator = ProceduralGenerator{});

}  // namespace btk
