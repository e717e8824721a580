#include "btk/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <fmt/format.h>

#include "btk/kernels.hpp"
#include "json.hpp"

namespace btk {

void validate_probabilities(const ProbabilityVolume& p, const std::string& who) {
  const std::size_t n = p.voxel_count();
  if (p.channels < 1 || p.values.size() != n * p.channels) {
    throw ContractError(fmt::format("{}: probability buffer does not match {} channel(s) x {} voxels", who,
                                    p.channels, n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < p.channels; ++c) {
      const double v = p.at(c, i);
      if (std::isnan(v)) {
        const auto xyz = p.geometry.coords(i);
        throw DataError(fmt::format("{}: NaN probability at voxel ({}, {}, {}) channel {}", who, xyz[0], xyz[1],
                                    xyz[2], c));
      }
      if (!(v >= 0.0 && v <= 1.0)) {
        const auto xyz = p.geometry.coords(i);
        throw DataError(fmt::format("{}: probability {} outside [0, 1] at voxel ({}, {}, {}) channel {}", who, v,
                                    xyz[0], xyz[1], xyz[2], c));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
      const auto xyz = p.geometry.coords(i);
      throw DataError(fmt::format("{}: channel sum {} at voxel ({}, {}, {}) is not 1 within {}", who, sum, xyz[0],
                                  xyz[1], xyz[2], kProbabilitySumTolerance));
    }
  }
}

ProbabilityVolume to_probabilities(const NiftiImage& image) {
  ProbabilityVolume p;
  p.geometry = image.geometry;
  p.channels = image.header.channels();
  p.values = real_values(image);
  return p;
}

ProbabilityVolume load_probabilities(const std::filesystem::path& path) {
  ProbabilityVolume p = to_probabilities(read_nifti(path));
  validate_probabilities(p, path.string());
  return p;
}

NiftiImage make_probability_nifti(const ProbabilityVolume& p, DataType type, const NiftiHeader* like) {
  return make_nifti(p.geometry, p.channels, type, p.values, like);
}

std::vector<double> normalized_weights(std::span<const double> weights) {
  if (weights.empty()) throw ContractError("ensemble: no members");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError(fmt::format("ensemble: weight {} is not >= 0", w));
  }
  std::vector<double> sorted(weights.begin(), weights.end());
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double w : sorted) total += w;
  if (!(total > 0.0)) throw ContractError("ensemble: weights sum to zero");
  std::vector<double> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] / total;
  return out;
}

ProbabilityAccumulator::ProbabilityAccumulator(VolumeGeometry geometry, std::size_t channels)
    : geometry_(std::move(geometry)), channels_(channels), acc_(geometry_.voxel_count() * channels, 0) {
  if (channels_ < 1) throw ContractError("ensemble: probability volumes need at least one channel");
}

void ProbabilityAccumulator::add(const ProbabilityVolume& member, double normalized_weight, const std::string& who) {
  if (!member.geometry.same_grid(geometry_) || member.channels != channels_) {
    throw ContractError(fmt::format("ensemble: member '{}' has grid {}x{}x{} with {} channel(s), expected {}x{}x{} "
                                    "with {}",
                                    who, member.geometry.extents[0], member.geometry.extents[1],
                                    member.geometry.extents[2], member.channels, geometry_.extents[0],
                                    geometry_.extents[1], geometry_.extents[2], channels_));
  }
  if (member.values.size() != acc_.size()) throw ContractError(fmt::format("ensemble: member '{}' buffer size", who));
  for (double v : member.values) {
    if (std::isnan(v)) throw DataError(fmt::format("ensemble: member '{}' contains NaN", who));
  }
  kernels::accumulate_fixed(member.values, normalized_weight, acc_);
  ++members_;
}

ProbabilityVolume ProbabilityAccumulator::mean() const {
  ProbabilityVolume p;
  p.geometry = geometry_;
  p.channels = channels_;
  p.values.assign(acc_.size(), 0.0);
  const std::size_t n = geometry_.voxel_count();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::int64_t total = 0;
    for (std::size_t c = 0; c < channels_; ++c) total += acc_[c * n + i];
    for (std::size_t c = 0; c < channels_; ++c) {
      p.values[c * n + i] = total > 0 ? static_cast<double>(acc_[c * n + i]) / static_cast<double>(total) : 0.0;
    }
  }
  return p;
}

LabelVolume ProbabilityAccumulator::argmax() const {
  if (channels_ > 256) throw ContractError("ensemble: more than 256 classes cannot be stored as labels");
  LabelVolume labels(geometry_, 0);
  const std::size_t n = geometry_.voxel_count();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::size_t best = 0;
    for (std::size_t c = 1; c < channels_; ++c) {
      if (acc_[c * n + i] > acc_[best * n + i]) best = c;
    }
    labels[i] = static_cast<std::uint8_t>(best);
  }
  return labels;
}

ProbabilityVolume average_probabilities(std::span<const ProbabilityVolume> members, std::span<const double> weights) {
  if (members.empty()) throw ContractError("average_probabilities: no members");
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(members.size(), 1.0);
  if (w.size() != members.size()) {
    throw ContractError(fmt::format("average_probabilities: {} weights for {} members", w.size(), members.size()));
  }
  const auto u = normalized_weights(w);
  ProbabilityAccumulator acc(members[0].geometry, members[0].channels);
  for (std::size_t m = 0; m < members.size(); ++m) acc.add(members[m], u[m], fmt::format("#{}", m));
  return acc.mean();
}

LabelVolume labels_from_probabilities(const ProbabilityVolume& prob) {
  if (prob.channels < 1 || prob.channels > 256) throw ContractError("labels_from_probabilities: bad channel count");
  LabelVolume labels(prob.geometry, 0);
  const std::size_t n = prob.voxel_count();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    std::size_t best = 0;
    for (std::size_t c = 1; c < prob.channels; ++c) {
      if (prob.at(c, i) > prob.at(best, i)) best = c;
    }
    labels[i] = static_cast<std::uint8_t>(best);
  }
  return labels;
}

EnsembleSpec parse_ensemble_spec(const std::string& json_text, const std::filesystem::path& base_dir) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("ensemble spec: {}", e.what()));
  }
  if (!doc.is_object()) throw ParseError("ensemble spec: top level must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "members" && key != "weights" && key != "output") {
      throw ParseError(fmt::format("ensemble spec: unknown key '{}'", key));
    }
  }
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  EnsembleSpec spec;
  try {
    if (!doc.contains("members") || !doc["members"].is_array() || doc["members"].empty()) {
      throw ParseError("ensemble spec: 'members' must be a non-empty array");
    }
    for (const auto& m : doc["members"]) {
      if (!m.is_object()) throw ParseError("ensemble spec: each member must be an object");
      for (const auto& [key, _] : m.items()) {
        if (key != "model" && key != "fold" && key != "path") {
          throw ParseError(fmt::format("ensemble spec: unknown member key '{}'", key));
        }
      }
      EnsembleMember em;
      em.model = m.value("model", std::string{});
      em.fold = m.value("fold", 0);
      if (!m.contains("path")) throw ParseError("ensemble spec: member without 'path'");
      em.path = resolve(m.at("path").get<std::string>());
      spec.members.push_back(std::move(em));
    }
    if (doc.contains("weights")) spec.weights = doc["weights"].get<std::vector<double>>();
    if (doc.contains("output")) spec.output = resolve(doc["output"].get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("ensemble spec: {}", e.what()));
  }
  if (!spec.weights.empty() && spec.weights.size() != spec.members.size()) {
    throw ContractError(fmt::format("ensemble spec: {} weights for {} members", spec.weights.size(),
                                    spec.members.size()));
  }
  return spec;
}

EnsembleSpec load_ensemble_spec(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_ensemble_spec(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                             path.parent_path());
}

EnsembleResult run_ensemble(const EnsembleSpec& spec) {
  if (spec.members.empty()) throw ContractError("run_ensemble: spec has no members");
  std::vector<double> w = spec.weights;
  if (w.empty()) w.assign(spec.members.size(), 1.0);
  const auto u = normalized_weights(w);

  std::optional<ProbabilityAccumulator> acc;
  EnsembleResult result;
  for (std::size_t m = 0; m < spec.members.size(); ++m) {
    const auto& member = spec.members[m];
    const std::string who = fmt::format("{} fold {} ({})", member.model, member.fold, member.path.string());
    try {
      NiftiImage img = read_nifti(member.path);
      ProbabilityVolume p = to_probabilities(img);
      validate_probabilities(p, who);
      if (!acc) {
        acc.emplace(p.geometry, p.channels);
        result.header = img.header;
      }
      acc->add(p, u[m], who);
    } catch (const Error& e) {
      if (std::string_view(e.what()).find(who) != std::string_view::npos) throw;
      // Keep the original category so exit codes survive the annotation.
      const std::string msg = fmt::format("ensemble member {}: {}", who, e.what());
      if (dynamic_cast<const ParseError*>(&e)) throw ParseError(msg);
      if (dynamic_cast<const IoError*>(&e)) throw IoError(msg);
      if (dynamic_cast<const DataError*>(&e)) throw DataError(msg);
      throw ContractError(msg);
    }
  }
  result.labels = acc->argmax();
  NiftiHeader& h = result.header;
  h.dim[0] = 3;
  for (int i = 4; i < 8; ++i) h.dim[i] = 1;
  h.intent_code = 0;
  return result;
}

}  // namespace btk
