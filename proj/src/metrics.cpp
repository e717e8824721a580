#include "btk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "btk/kernels.hpp"

namespace btk {

namespace {

Box union_box(const Box& a, const Box& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  Box u;
  for (int i = 0; i < 3; ++i) {
    u.lo[i] = std::min(a.lo[i], b.lo[i]);
    u.hi[i] = std::max(a.hi[i], b.hi[i]);
  }
  return u;
}

// Distances from every surface voxel of `from` to the nearest surface voxel
// of `to`. Both masks live on the same (possibly cropped) grid.
std::vector<double> directed_surface_distances(std::span<const std::uint8_t> from_surface,
                                               std::span<const std::uint8_t> to_surface, const Extents& e,
                                               const Spacing& s) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> f(to_surface.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = to_surface[i] ? 0.0 : inf;
  kernels::squared_edt(f, e, s);
  std::vector<double> out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (from_surface[i]) out.push_back(std::sqrt(f[i]));
  }
  return out;
}

// Both masks nonempty, and every crop-border voxel that is not on the true
// volume border is background in both.
SurfaceDistanceSet surface_distances_on_grid(const BinaryMask& pred, const BinaryMask& gt) {
  const auto& e = pred.extents();
  std::vector<std::uint8_t> sp(pred.size()), sg(gt.size());
  kernels::surface(pred.span(), e, sp);
  kernels::surface(gt.span(), e, sg);
  SurfaceDistanceSet d;
  d.pred_to_gt = directed_surface_distances(sp, sg, e, pred.geometry.spacing_mm);
  d.gt_to_pred = directed_surface_distances(sg, sp, e, pred.geometry.spacing_mm);
  return d;
}

double hd95_from_set(const SurfaceDistanceSet& d) {
  std::vector<double> pooled;
  pooled.reserve(d.pred_to_gt.size() + d.gt_to_pred.size());
  pooled.insert(pooled.end(), d.pred_to_gt.begin(), d.pred_to_gt.end());
  pooled.insert(pooled.end(), d.gt_to_pred.begin(), d.gt_to_pred.end());
  return percentile_nearest_rank(std::move(pooled), 95.0);
}

std::pair<std::size_t, std::size_t> counts(const BinaryMask& a, const BinaryMask& b, std::size_t& both) {
  std::size_t na = 0, nb = 0;
  both = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += a[i] != 0;
    nb += b[i] != 0;
    both += (a[i] != 0) & (b[i] != 0);
  }
  return {na, nb};
}

double dice_unchecked(const BinaryMask& pred, const BinaryMask& gt) {
  std::size_t both = 0;
  const auto [np, ng] = counts(pred, gt, both);
  if (np + ng == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(np + ng);
}

}  // namespace

std::string_view mode_name(MetricMode mode) {
  switch (mode) {
    case MetricMode::Volumetric: return "volumetric";
    case MetricMode::LesionWise: return "lesion-wise";
    case MetricMode::SemiLesionWise: return "semi-lesion-wise";
  }
  return "volumetric";
}

MetricMode parse_mode(std::string_view name) {
  if (name == "volumetric") return MetricMode::Volumetric;
  if (name == "lesion-wise" || name == "lesion") return MetricMode::LesionWise;
  if (name == "semi-lesion-wise" || name == "semi") return MetricMode::SemiLesionWise;
  throw ParseError(fmt::format("unknown metric mode '{}' (volumetric, lesion-wise, semi-lesion-wise)", name));
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_grid(pred, gt, "dice");
  return dice_unchecked(pred, gt);
}

double percentile_nearest_rank(std::vector<double> values, double pct) {
  if (values.empty()) throw ContractError("percentile of an empty set");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(n) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
  return values[rank - 1];
}

SurfaceDistanceSet surface_distances(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_grid(pred, gt, "surface_distances");
  const Box box = union_box(bounding_box(pred), bounding_box(gt));
  if (box.empty()) return {};
  const Box grown = expand_box(box, 1, pred.extents());
  const BinaryMask p = crop(pred, grown), g = crop(gt, grown);
  if (popcount(p) == 0 || popcount(g) == 0) {
    // One side empty: only the nonempty side has surface voxels and nothing
    // to measure against.
    SurfaceDistanceSet d;
    return d;
  }
  return surface_distances_on_grid(p, g);
}

double hd95(const BinaryMask& pred, const BinaryMask& gt, double penalty_mm) {
  require_same_grid(pred, gt, "hd95");
  const Box bp = bounding_box(pred), bg = bounding_box(gt);
  if (bp.empty() && bg.empty()) return 0.0;
  if (bp.empty() || bg.empty()) return penalty_mm;
  const Box grown = expand_box(union_box(bp, bg), 1, pred.extents());
  return hd95_from_set(surface_distances_on_grid(crop(pred, grown), crop(gt, grown)));
}

std::size_t LesionMatch::tp() const {
  return static_cast<std::size_t>(
      std::count_if(gt_matches.begin(), gt_matches.end(), [](const auto& m) { return !m.empty(); }));
}
std::size_t LesionMatch::fn() const { return gt_matches.size() - tp(); }
std::size_t LesionMatch::matched_pred() const {
  return static_cast<std::size_t>(
      std::count_if(pred_matches.begin(), pred_matches.end(), [](const auto& m) { return !m.empty(); }));
}
std::size_t LesionMatch::fp() const { return pred_matches.size() - matched_pred(); }

LesionMatch match_lesions(const BinaryMask& pred, const BinaryMask& gt, int connectivity, int dilation_voxels) {
  require_same_grid(pred, gt, "match_lesions");
  if (dilation_voxels < 0) throw ContractError("match_lesions: dilation must be >= 0");
  LesionMatch m;
  m.dilation_voxels = dilation_voxels;
  m.gt = connected_components(gt, connectivity);
  m.pred = connected_components(pred, connectivity);
  m.gt_matches.assign(m.gt.count(), {});
  m.pred_matches.assign(m.pred.count(), {});

  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  if (dilation_voxels == 0) {
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const std::uint32_t g = m.gt.labels[i], p = m.pred.labels[i];
      if (g != 0 && p != 0) pairs.emplace_back(g, p);
    }
  } else {
    const auto boxes = m.gt.boxes();
    for (std::uint32_t g = 1; g <= m.gt.count(); ++g) {
      const Box box = expand_box(boxes[g - 1], static_cast<std::size_t>(dilation_voxels), gt.extents());
      const auto gl = crop(m.gt.labels, box);
      const auto pl = crop(m.pred.labels, box);
      std::vector<std::uint8_t> own(gl.size()), grown(gl.size());
      for (std::size_t i = 0; i < gl.size(); ++i) own[i] = gl[i] == g;
      kernels::box_dilate(own, gl.extents(), static_cast<std::size_t>(dilation_voxels), grown);
      for (std::size_t i = 0; i < gl.size(); ++i) {
        if (grown[i] && pl[i] != 0) pairs.emplace_back(g, pl[i]);
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  for (const auto& [g, p] : pairs) {
    m.gt_matches[g - 1].push_back(p);
    m.pred_matches[p - 1].push_back(g);
  }
  for (auto& v : m.pred_matches) std::sort(v.begin(), v.end());
  return m;
}

LesionScores lesion_wise_scores(const BinaryMask& pred, const BinaryMask& gt, const LesionOptions& options) {
  require_same_grid(pred, gt, "lesion_wise_scores");
  if (options.mode == MetricMode::Volumetric) {
    throw ContractError("lesion_wise_scores: mode must be lesion-wise or semi-lesion-wise");
  }
  const LesionMatch m = match_lesions(pred, gt, options.connectivity, options.dilation_voxels);
  const auto gt_boxes = m.gt.boxes();
  const auto pred_boxes = m.pred.boxes();

  double dsc_sum = 0.0, hd_sum = 0.0;
  std::size_t terms = 0;
  for (std::uint32_t g = 1; g <= m.gt.count(); ++g) {
    const auto& matched = m.gt_matches[g - 1];
    ++terms;
    if (matched.empty()) {
      hd_sum += options.penalty_mm;
      continue;
    }
    Box box = gt_boxes[g - 1];
    for (auto p : matched) box = union_box(box, pred_boxes[p - 1]);
    box = expand_box(box, 1, gt.extents());
    const auto gl = crop(m.gt.labels, box);
    const auto pl = crop(m.pred.labels, box);
    BinaryMask a(gl.geometry, 0), b(gl.geometry, 0);
    for (std::size_t i = 0; i < gl.size(); ++i) {
      a[i] = gl[i] == g;
      b[i] = pl[i] != 0 && std::binary_search(matched.begin(), matched.end(), pl[i]);
    }
    dsc_sum += dice_unchecked(b, a);
    hd_sum += hd95_from_set(surface_distances_on_grid(b, a));
  }
  LesionScores s;
  s.tp = m.tp();
  s.fn = m.fn();
  s.fp = m.fp();
  if (options.mode == MetricMode::LesionWise) {
    terms += s.fp;
    hd_sum += static_cast<double>(s.fp) * options.penalty_mm;
  }
  if (terms == 0) {
    s.dsc = 1.0;
    s.hd95 = 0.0;
  } else {
    s.dsc = dsc_sum / static_cast<double>(terms);
    s.hd95 = hd_sum / static_cast<double>(terms);
  }
  return s;
}

MetricsReport evaluate_case(const std::string& case_id, const LabelVolume& pred, const LabelVolume& gt,
                            const LabelScheme& scheme, const LesionOptions& options) {
  require_same_grid(pred, gt, "evaluate_case " + case_id);
  check_alphabet(pred, scheme);
  check_alphabet(gt, scheme);
  MetricsReport report;
  report.case_id = case_id;
  report.mode = options.mode;
  for (const auto& region : scheme.evaluation_regions) {
    const BinaryMask p = region_mask(pred, region);
    const BinaryMask g = region_mask(gt, region);
    RegionScore row;
    row.region = region.name;
    if (options.mode == MetricMode::Volumetric) {
      row.dsc = dice_unchecked(p, g);
      row.hd95 = hd95(p, g, options.penalty_mm);
      const LesionMatch m = match_lesions(p, g, options.connectivity, options.dilation_voxels);
      row.tp = m.tp();
      row.fp = m.fp();
      row.fn = m.fn();
    } else {
      const LesionScores s = lesion_wise_scores(p, g, options);
      row.dsc = s.dsc;
      row.hd95 = s.hd95;
      row.tp = s.tp;
      row.fp = s.fp;
      row.fn = s.fn;
    }
    report.regions.push_back(std::move(row));
  }
  return report;
}

AggregateSummary aggregate_reports(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ContractError("aggregate_reports: no reports");
  std::vector<const MetricsReport*> ordered;
  for (const auto& r : reports) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const MetricsReport* a, const MetricsReport* b) { return a->case_id < b->case_id; });

  AggregateSummary s;
  s.mode = ordered.front()->mode;
  for (const auto& row : ordered.front()->regions) s.regions.push_back(RegionSummary{row.region});

  for (std::size_t k = 0; k < s.regions.size(); ++k) {
    RegionSummary& out = s.regions[k];
    std::vector<double> dsc, hd;
    for (const MetricsReport* r : ordered) {
      if (r->mode != s.mode) throw ContractError("aggregate_reports: reports mix metric modes");
      if (r->regions.size() != s.regions.size() || r->regions[k].region != out.region) {
        throw ContractError(fmt::format("aggregate_reports: case '{}' has inconsistent regions", r->case_id));
      }
      const RegionScore& row = r->regions[k];
      dsc.push_back(row.dsc);
      hd.push_back(row.hd95);
      out.tp += row.tp;
      out.fp += row.fp;
      out.fn += row.fn;
    }
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
      double sum = 0.0;
      for (double x : v) sum += x;
      mean = sum / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = std::sqrt(ss / static_cast<double>(v.size()));
    };
    out.cases = dsc.size();
    mean_std(dsc, out.dsc_mean, out.dsc_std);
    mean_std(hd, out.hd95_mean, out.hd95_std);
  }
  return s;
}

}  // namespace btk
