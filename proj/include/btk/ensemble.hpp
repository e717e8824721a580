#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "btk/nifti_io.hpp"
#include "btk/volume.hpp"

namespace btk {

/// Per-class probabilities over a grid, channel-major: values[c * n + i].
/// Channel k is scheme label k, channel 0 is background.
struct ProbabilityVolume {
  VolumeGeometry geometry;
  std::size_t channels = 0;
  std::vector<double> values;

  std::size_t voxel_count() const { return geometry.voxel_count(); }
  double at(std::size_t channel, std::size_t voxel) const { return values[channel * voxel_count() + voxel]; }
  double& at(std::size_t channel, std::size_t voxel) { return values[channel * voxel_count() + voxel]; }
};

inline constexpr double kProbabilitySumTolerance = 1e-3;

/// Finite values in [0, 1] whose per-voxel sum is within 1e-3 of 1.
void validate_probabilities(const ProbabilityVolume& p, const std::string& who);

/// Channels on the 4th dimension; float32 or float64 expected.
ProbabilityVolume to_probabilities(const NiftiImage& image);
ProbabilityVolume load_probabilities(const std::filesystem::path& path);
NiftiImage make_probability_nifti(const ProbabilityVolume& p, DataType type = DataType::Float32,
                                  const NiftiHeader* like = nullptr);

/// Normalised weights w_i / sum(w); the sum is taken over sorted weights so
/// it does not depend on member order.
std::vector<double> normalized_weights(std::span<const double> weights);

/// Streaming voxelwise weighted mean with order-independent fixed-point
/// accumulation.
class ProbabilityAccumulator {
 public:
  ProbabilityAccumulator(VolumeGeometry geometry, std::size_t channels);

  /// `normalized_weight` is the member's share of the total weight.
  void add(const ProbabilityVolume& member, double normalized_weight, const std::string& who = "member");

  /// Mean, renormalised to sum 1 per voxel.
  ProbabilityVolume mean() const;
  /// Argmax of the accumulated sums, ties to the lowest channel.
  LabelVolume argmax() const;
  std::size_t members() const { return members_; }

 private:
  VolumeGeometry geometry_;
  std::size_t channels_;
  std::size_t members_ = 0;
  std::vector<std::int64_t> acc_;
};

ProbabilityVolume average_probabilities(std::span<const ProbabilityVolume> members, std::span<const double> weights);

/// Per-voxel argmax, ties broken toward the lowest class index.
LabelVolume labels_from_probabilities(const ProbabilityVolume& prob);

struct EnsembleMember {
  std::string model;
  int fold = 0;
  std::filesystem::path path;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;
  std::vector<double> weights;  // empty: all 1
  std::filesystem::path output;
};

/// JSON: {"members": [{"model", "fold", "path"}...], "weights": [...], "output": "..."}.
/// Relative paths resolve against `base_dir`. Unknown keys are rejected.
EnsembleSpec parse_ensemble_spec(const std::string& json_text, const std::filesystem::path& base_dir = {});
EnsembleSpec load_ensemble_spec(const std::filesystem::path& path);

struct EnsembleResult {
  LabelVolume labels;
  NiftiHeader header;  // first member's header, reduced to 3D
};

/// Loads members one at a time in spec order, averages, decodes labels.
EnsembleResult run_ensemble(const EnsembleSpec& spec);

}  // namespace btk
