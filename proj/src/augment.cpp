#include "btk/augment.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>

#include <fmt/format.h>

#include "btk/kernels.hpp"
#include "btk/volume_core.hpp"
#include "json.hpp"

namespace btk {

namespace {

// Smooth multiplicative perturbation of a blob's radius as a function of
// direction.
struct RadialPerturbation {
  struct Term {
    double amplitude, m, n, alpha, beta;
  };
  std::array<Term, 3> terms{};

  static RadialPerturbation random(Rng& rng, double max_total) {
    RadialPerturbation p;
    for (auto& t : p.terms) {
      t.amplitude = rng.uniform(0.0, max_total / 3.0);
      t.m = static_cast<double>(1 + rng.below(4));
      t.n = static_cast<double>(1 + rng.below(3));
      t.alpha = rng.uniform(0.0, 2.0 * std::numbers::pi);
      t.beta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    return p;
  }
  double operator()(double theta, double phi) const {
    double f = 1.0;
    for (const auto& t : terms) f += t.amplitude * std::sin(t.m * theta + t.alpha) * std::sin(t.n * phi + t.beta);
    return f;
  }
};

constexpr double kMaxPerturbation = 0.24;
constexpr double kMaxRadiusJitter = 1.2;

// Rows: modality index; columns: class 1..4. Units of healthy-tissue std.
constexpr double kGliomaContrast[4][4] = {
    {-1.0, -0.5, -0.3, -1.5},  // t1n: NETC, SNFH, ET, RC
    {-0.8, -0.3, 2.0, -1.5},   // t1c
    {1.5, 1.2, 0.8, 2.5},      // t2w
    {1.0, 2.0, 1.0, -1.0},     // t2f
};
constexpr double kMeningiomaContrast = 1.5;

double class_contrast(const LabelScheme& scheme, std::size_t modality, std::uint8_t label) {
  if (label == 0) return 0.0;
  if (scheme.kind == SchemeKind::MeningiomaRt) return kMeningiomaContrast;
  return kGliomaContrast[modality % 4][std::min<std::uint8_t>(label, 4) - 1];
}

// Separable Gaussian blur, zero boundary.
void gaussian_blur(Volume<float>& v, double sigma) {
  if (sigma <= 0.0) return;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = w;
    norm += w;
  }
  for (double& w : kernel) w /= norm;
  const auto& e = v.extents();
  std::vector<float> tmp(v.size());
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? e[0] : e[0] * e[1];
    const auto n = static_cast<std::ptrdiff_t>(e[axis]);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto c = v.geometry.coords(i);
      const auto pos = static_cast<std::ptrdiff_t>(c[axis]);
      double acc = 0.0;
      for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
        const std::ptrdiff_t q = pos + k;
        if (q < 0 || q >= n) continue;
        acc += kernel[static_cast<std::size_t>(k + radius)] *
               v.data[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(i) + k * static_cast<std::ptrdiff_t>(stride))];
      }
      tmp[i] = static_cast<float>(acc);
    }
    std::copy(tmp.begin(), tmp.end(), v.data.begin());
  }
}

void box_blur(std::vector<double>& f, const Extents& e) {
  std::vector<double> tmp(f.size());
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? e[0] : e[0] * e[1];
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::size_t c = (i / stride) % e[axis];
      double acc = f[i];
      if (c > 0) acc += f[i - stride];
      if (c + 1 < e[axis]) acc += f[i + stride];
      tmp[i] = acc / 3.0;
    }
    f.swap(tmp);
  }
}

template <typename T>
void zero_border_shell(Volume<T>& v) {
  const auto& e = v.extents();
  for (std::size_t z = 0; z < e[2]; ++z)
    for (std::size_t y = 0; y < e[1]; ++y)
      for (std::size_t x = 0; x < e[0]; ++x)
        if (x == 0 || y == 0 || z == 0 || x + 1 == e[0] || y + 1 == e[1] || z + 1 == e[2]) v.at(x, y, z) = T{};
}

template <typename T>
Volume<T> pad(const Volume<T>& v, std::size_t p) {
  Volume<T> out(make_geometry({v.extents()[0] + 2 * p, v.extents()[1] + 2 * p, v.extents()[2] + 2 * p}));
  const auto& e = v.extents();
  for (std::size_t z = 0; z < e[2]; ++z)
    for (std::size_t y = 0; y < e[1]; ++y)
      for (std::size_t x = 0; x < e[0]; ++x) out.at(x + p, y + p, z + p) = v.at(x, y, z);
  return out;
}

}  // namespace

void validate_case(const CaseRecord& c) {
  if (c.modalities.size() != c.scheme.modalities.size()) {
    throw ContractError(fmt::format("case '{}': {} modalities but scheme '{}' expects {}", c.id, c.modalities.size(),
                                    c.scheme.name, c.scheme.modalities.size()));
  }
  for (const auto& m : c.modalities) require_same_grid(m, c.labels, "case " + c.id);
  check_alphabet(c.labels, c.scheme);
}

void validate_spec(const InsertionSpec& spec) {
  if (spec.copies < 1) throw ContractError("augment: copies must be >= 1");
  if (spec.max_retries < 1) throw ContractError("augment: max_retries must be >= 1");
  if (!(spec.use_generated_label >= 0.0 && spec.use_generated_label <= 1.0)) {
    throw ContractError("augment: use_generated_label must lie in [0, 1]");
  }
  if (!(spec.blend_sigma >= 0.0) || spec.blend_sigma > 16.0) throw ContractError("augment: blend_sigma must lie in [0, 16]");
}

LabelVolume generate_random_label(const LabelScheme& scheme, const SizeRange& size, Rng& rng) {
  if (!(size.min_radius >= 3.0) || !(size.max_radius >= size.min_radius) || size.max_radius > 64.0) {
    throw ContractError(fmt::format("generate_random_label: size range [{}, {}] must satisfy 3 <= min <= max <= 64",
                                    size.min_radius, size.max_radius));
  }
  const bool glioma = scheme.kind == SchemeKind::GliomaPostTreatment;
  for (int attempt = 0; attempt < 64; ++attempt) {
    const double r = rng.uniform(size.min_radius, size.max_radius);
    const std::array<double, 3> radii = {r * rng.uniform(1.0 / kMaxRadiusJitter, kMaxRadiusJitter),
                                         r * rng.uniform(1.0 / kMaxRadiusJitter, kMaxRadiusJitter),
                                         r * rng.uniform(1.0 / kMaxRadiusJitter, kMaxRadiusJitter)};
    const double exponent = rng.uniform(1.6, 2.6);
    const double rot = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const auto outer = RadialPerturbation::random(rng, kMaxPerturbation);
    const auto inner = RadialPerturbation::random(rng, kMaxPerturbation);
    const auto core = RadialPerturbation::random(rng, kMaxPerturbation);
    const double inner_scale = rng.uniform(0.55, 0.75);
    const double core_scale = rng.uniform(0.35, 0.6);

    // |d_axis| <= radius * norm, and norm <= 1 + kMaxPerturbation inside.
    const double reach = *std::max_element(radii.begin(), radii.end()) * (1.0 + kMaxPerturbation);
    const auto half = static_cast<std::size_t>(std::ceil(reach)) + 1;
    const std::size_t n = 2 * half + 1;
    LabelVolume patch(make_geometry({n, n, n}), 0);
    const double c = std::cos(rot), s = std::sin(rot);
    bool has[5] = {};
    for (std::size_t z = 0; z < n; ++z) {
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double dx0 = static_cast<double>(x) - static_cast<double>(half);
          const double dy0 = static_cast<double>(y) - static_cast<double>(half);
          const double dz = static_cast<double>(z) - static_cast<double>(half);
          const double dx = c * dx0 - s * dy0, dy = s * dx0 + c * dy0;
          const double norm = std::pow(std::pow(std::abs(dx) / radii[0], exponent) +
                                           std::pow(std::abs(dy) / radii[1], exponent) +
                                           std::pow(std::abs(dz) / radii[2], exponent),
                                       1.0 / exponent);
          const double theta = std::atan2(dy, dx);
          const double phi = std::atan2(std::hypot(dx, dy), dz);
          const double r_outer = outer(theta, phi);
          if (norm > r_outer) continue;
          std::uint8_t label = glioma ? 2 : 1;
          const double r_inner = inner_scale * r_outer * inner(theta, phi) / (1.0 + kMaxPerturbation);
          if (glioma && norm <= r_inner) {
            label = norm <= core_scale * r_inner * core(theta, phi) / (1.0 + kMaxPerturbation) ? 1 : 3;
          }
          patch.at(x, y, z) = label;
        }
      }
    }
    for (auto v : patch.data) has[v] = true;
    if (!(glioma ? (has[2] && has[3]) : has[1])) continue;
    BinaryMask support(patch.geometry, 0);
    for (std::size_t i = 0; i < patch.size(); ++i) support[i] = patch[i] != 0;
    LabelVolume tight = pad(crop(patch, bounding_box(support)), 1);
    tight.geometry = make_geometry(tight.extents());
    return tight;
  }
  throw DataError("generate_random_label: could not produce the required classes for this size range");
}

LesionPatch procedural_lesion(const LabelVolume& label_patch, const LabelScheme& scheme,
                              std::span<const TissueStats> modality_stats, double blend_sigma, Rng& rng) {
  if (std::all_of(label_patch.data.begin(), label_patch.data.end(), [](auto v) { return v == 0; })) {
    throw ContractError("procedural_lesion: label patch has no lesion voxels");
  }
  if (modality_stats.empty()) throw ContractError("procedural_lesion: no modalities");
  if (!(blend_sigma >= 0.0)) throw ContractError("procedural_lesion: blend sigma must be >= 0");
  check_alphabet(label_patch, scheme);

  const auto margin = static_cast<std::size_t>(std::ceil(3.0 * blend_sigma)) + 1;
  LesionPatch out;
  out.labels = pad(label_patch, margin);
  const auto& e = out.labels.extents();

  out.blend = Volume<float>(out.labels.geometry, 0.0f);
  for (std::size_t i = 0; i < out.blend.size(); ++i) out.blend[i] = out.labels[i] != 0 ? 1.0f : 0.0f;
  gaussian_blur(out.blend, blend_sigma);
  for (auto& w : out.blend.data) w = std::clamp(w, 0.0f, 1.0f);
  zero_border_shell(out.blend);

  for (std::size_t m = 0; m < modality_stats.size(); ++m) {
    const TissueStats& st = modality_stats[m];
    std::array<double, 256> class_mean{};
    for (std::uint8_t l = 0; l <= scheme.max_label(); ++l) {
      class_mean[l] = st.mean + class_contrast(scheme, m, l) * st.stddev * (1.0 + 0.2 * rng.normal());
    }
    std::vector<double> noise(out.labels.size());
    for (double& x : noise) x = rng.normal();
    box_blur(noise, e);
    box_blur(noise, e);
    double ss = 0.0;
    for (double x : noise) ss += x * x;
    const double scale = ss > 0.0 ? 1.0 / std::sqrt(ss / static_cast<double>(noise.size())) : 0.0;

    IntensityVolume v(out.labels.geometry, 0.0f);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<float>(class_mean[out.labels[i]] + 0.15 * st.stddev * noise[i] * scale);
    }
    out.intensities.push_back(std::move(v));
  }
  return out;
}

std::vector<TissueStats> healthy_tissue_stats(const CaseRecord& c, const BinaryMask& head) {
  std::vector<TissueStats> stats;
  for (const auto& vol : c.modalities) {
    double sum = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (int pass = 0; pass < 2 && n == 0; ++pass) {
      for (std::size_t i = 0; i < vol.size(); ++i) {
        if (!head[i] || (pass == 0 && c.labels[i] != 0)) continue;
        sum += vol[i];
        ++n;
      }
    }
    TissueStats st;
    if (n > 0) {
      st.mean = sum / static_cast<double>(n);
      for (std::size_t i = 0; i < vol.size(); ++i) {
        if (head[i] && c.labels[i] == 0) ss += (vol[i] - st.mean) * (vol[i] - st.mean);
      }
      st.stddev = std::sqrt(ss / static_cast<double>(n));
    }
    if (!(st.stddev > 0.0)) st.stddev = std::max(1.0, 0.1 * std::abs(st.mean));
    stats.push_back(st);
  }
  return stats;
}

PlacementContext make_placement_context(const CaseRecord& c, const InsertionSpec& spec) {
  PlacementContext ctx;
  ctx.head = spec.head_mask == HeadMaskSource::Otsu ? foreground_mask(c.modalities.at(0))
                                                    : nonzero_mask(c.modalities);
  BinaryMask lesion(c.labels.geometry, 0);
  for (std::size_t i = 0; i < lesion.size(); ++i) lesion[i] = c.labels[i] != 0;
  ctx.forbidden = dilate(lesion, static_cast<int>(spec.min_distance));
  BinaryMask outside(c.labels.geometry, 0);
  for (std::size_t i = 0; i < outside.size(); ++i) outside[i] = !ctx.head[i];
  ctx.rim = dilate(outside, 2);
  for (std::size_t i = 0; i < ctx.rim.size(); ++i) ctx.rim[i] &= ctx.head[i];
  for (std::size_t i = 0; i < ctx.head.size(); ++i) {
    if (ctx.head[i]) ctx.candidates.push_back(static_cast<std::uint32_t>(i));
  }
  return ctx;
}

std::array<std::ptrdiff_t, 3> window_origin(const std::array<std::size_t, 3>& center, const Extents& extents) {
  return {static_cast<std::ptrdiff_t>(center[0]) - static_cast<std::ptrdiff_t>(extents[0] / 2),
          static_cast<std::ptrdiff_t>(center[1]) - static_cast<std::ptrdiff_t>(extents[1] / 2),
          static_cast<std::ptrdiff_t>(center[2]) - static_cast<std::ptrdiff_t>(extents[2] / 2)};
}

Placement sample_center(const PlacementContext& ctx, const LabelVolume& patch_labels, const InsertionSpec& spec,
                        Rng& rng) {
  const auto& vol = ctx.head.geometry;
  const auto& pe = patch_labels.extents();
  std::vector<std::array<std::size_t, 3>> support;
  for (std::size_t i = 0; i < patch_labels.size(); ++i) {
    if (patch_labels[i] != 0) support.push_back(patch_labels.geometry.coords(i));
  }
  if (support.empty()) throw ContractError("sample_center: patch has no lesion voxels");
  if (ctx.candidates.empty()) throw PlacementError("sample_center: head mask is empty");

  for (std::size_t attempt = 1; attempt <= spec.max_retries; ++attempt) {
    const std::uint32_t pick = ctx.candidates[rng.below(ctx.candidates.size())];
    const auto center = vol.coords(pick);
    const auto origin = window_origin(center, pe);
    bool fits = true;
    for (int a = 0; a < 3; ++a) {
      if (origin[a] < 0 || static_cast<std::size_t>(origin[a]) + pe[a] > vol.extents[a]) fits = false;
    }
    if (!fits) continue;
    bool ok = true;
    bool near = false;
    for (const auto& p : support) {
      const std::size_t i = vol.index(static_cast<std::size_t>(origin[0]) + p[0], static_cast<std::size_t>(origin[1]) + p[1],
                                      static_cast<std::size_t>(origin[2]) + p[2]);
      if (!ctx.head[i] || ctx.forbidden[i]) {
        ok = false;
        break;
      }
      near = near || ctx.rim[i];
    }
    if (ok) return Placement{center, attempt, near};
  }
  throw PlacementError(fmt::format("no feasible lesion site after {} attempts", spec.max_retries));
}

CaseRecord insert_lesion(const CaseRecord& c, const LesionPatch& patch, const std::array<std::size_t, 3>& center,
                         std::size_t copy_index) {
  if (patch.intensities.size() != c.modalities.size()) {
    throw ContractError(fmt::format("insert_lesion: patch has {} modalities, case '{}' has {}",
                                    patch.intensities.size(), c.id, c.modalities.size()));
  }
  const auto& pe = patch.extents();
  const auto& ve = c.labels.extents();
  const auto origin = window_origin(center, pe);
  for (int a = 0; a < 3; ++a) {
    if (origin[a] < 0 || static_cast<std::size_t>(origin[a]) + pe[a] > ve[a]) {
      throw ContractError(fmt::format("insert_lesion: patch window at centre ({}, {}, {}) exceeds the volume",
                                      center[0], center[1], center[2]));
    }
  }
  CaseRecord out = c;
  out.id = fmt::format("{}-{}", c.id, copy_index);
  const std::size_t ox = static_cast<std::size_t>(origin[0]), oy = static_cast<std::size_t>(origin[1]),
                    oz = static_cast<std::size_t>(origin[2]);
  for (std::size_t z = 0; z < pe[2]; ++z) {
    for (std::size_t y = 0; y < pe[1]; ++y) {
      for (std::size_t x = 0; x < pe[0]; ++x) {
        const std::size_t vi = c.labels.geometry.index(ox + x, oy + y, oz + z);
        const std::size_t pi = patch.labels.geometry.index(x, y, z);
        const double w = patch.blend[pi];
        if (w != 0.0) {
          for (std::size_t m = 0; m < out.modalities.size(); ++m) {
            const double orig = c.modalities[m][vi];
            out.modalities[m][vi] = static_cast<float>((1.0 - w) * orig + w * patch.intensities[m][pi]);
          }
        }
        if (patch.labels[pi] != 0) {
          if (c.labels[vi] != 0) {
            throw ContractError(fmt::format("insert_lesion: patch overlaps an existing lesion at ({}, {}, {})",
                                            ox + x, oy + y, oz + z));
          }
          out.labels[vi] = patch.labels[pi];
        }
      }
    }
  }
  return out;
}

std::optional<LabelVolume> crop_donor_lesion(const LabelVolume& donor, int connectivity, Rng& rng) {
  BinaryMask lesion(donor.geometry, 0);
  for (std::size_t i = 0; i < donor.size(); ++i) lesion[i] = donor[i] != 0;
  const ComponentSet cs = connected_components(lesion, connectivity);
  if (cs.count() == 0) return std::nullopt;
  const auto id = static_cast<std::uint32_t>(1 + rng.below(cs.count()));
  const Box box = cs.boxes()[id - 1];
  LabelVolume cropped = crop(donor, box);
  const auto ids = crop(cs.labels, box);
  for (std::size_t i = 0; i < cropped.size(); ++i) {
    if (ids[i] != id) cropped[i] = 0;
  }
  cropped.geometry = make_geometry(cropped.extents());
  return pad(cropped, 1);
}

ManifestSummary summarize(std::span<const ManifestEntry> entries, std::size_t original_cases) {
  ManifestSummary s;
  s.original_cases = original_cases;
  for (const auto& e : entries) (e.ok ? s.new_cases : s.skipped) += 1;
  return s;
}

std::string manifest_jsonl(std::span<const ManifestEntry> entries, const ManifestSummary& summary) {
  std::string out;
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["case"] = e.case_id;
    j["copy"] = e.copy;
    j["new_id"] = e.new_id;
    j["seed"] = e.seed;
    j["status"] = e.ok ? "ok" : "skipped";
    j["label_source"] = e.label_source;
    if (!e.donor.empty()) j["donor"] = e.donor;
    if (e.ok) {
      j["center"] = e.center;
      j["window"] = {{"origin", e.window_origin}, {"extents", e.window_extents}};
      j["attempts"] = e.attempts;
      j["near_head_boundary"] = e.near_head_boundary;
    } else {
      j["error"] = e.error;
    }
    out += j.dump() + "\n";
  }
  nlohmann::ordered_json s;
  s["summary"] = {{"original", summary.original_cases},
                  {"new", summary.new_cases},
                  {"skipped", summary.skipped},
                  {"total", summary.total()}};
  out += s.dump() + "\n";
  return out;
}

std::vector<CopyResult> augment_case(const CaseRecord& c, const InsertionSpec& spec, const DonorSource& donors,
                                     const LesionGenerator& generator) {
  validate_spec(spec);
  std::vector<CopyResult> results;
  std::optional<PlacementContext> ctx;
  std::vector<TissueStats> stats;
  std::string setup_error;
  bool setup_placement = false;
  try {
    validate_case(c);
    ctx = make_placement_context(c, spec);
    stats = healthy_tissue_stats(c, ctx->head);
  } catch (const Error& e) {
    setup_error = e.what();
    setup_placement = dynamic_cast<const PlacementError*>(&e) != nullptr;
  }

  for (std::size_t copy = 1; copy <= spec.copies; ++copy) {
    CopyResult r;
    ManifestEntry& e = r.entry;
    e.case_id = c.id;
    e.copy = copy;
    e.new_id = fmt::format("{}-{}", c.id, copy);
    e.seed = derive_seed(spec.seed, c.id, copy);
    if (!ctx) {
      e.error = setup_error;
      e.placement_failure = setup_placement;
      results.push_back(std::move(r));
      continue;
    }
    Rng rng(e.seed);
    try {
      std::optional<LabelVolume> labels;
      if (rng.uniform() < spec.use_generated_label) {
        e.label_source = "generated";
      } else {
        e.label_source = "real";
        if (donors) {
          if (auto d = donors(rng)) {
            e.donor = d->first;
            labels = crop_donor_lesion(d->second, spec.connectivity, rng);
          }
        }
        if (!labels) e.label_source = "generated-fallback";
      }
      if (!labels) labels = generate_random_label(c.scheme, spec.size, rng);
      const LesionPatch patch = generator.generate(*labels, c.scheme, stats, spec.blend_sigma, rng);
      const Placement placed = sample_center(*ctx, patch.labels, spec, rng);
      r.record = insert_lesion(c, patch, placed.center, copy);
      e.center = placed.center;
      const auto origin = window_origin(placed.center, patch.extents());
      for (int a = 0; a < 3; ++a) e.window_origin[a] = static_cast<std::size_t>(origin[a]);
      e.window_extents = patch.extents();
      e.attempts = placed.attempts;
      e.near_head_boundary = placed.near_head_boundary;
      e.ok = true;
    } catch (const PlacementError& err) {
      e.error = err.what();
      e.placement_failure = true;
    } catch (const Error& err) {
      e.error = err.what();
    }
    results.push_back(std::move(r));
  }
  return results;
}

namespace {

std::vector<std::size_t> order_by_id(std::span<const std::string> ids) {
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  return order;
}

// Uniform choice among the other cases.
std::size_t pick_other(std::size_t self, std::size_t n, Rng& rng) {
  std::size_t j = rng.below(n - 1);
  return j >= self ? j + 1 : j;
}

}  // namespace

AugmentResult augment_cases(std::span<const CaseRecord> cases, const InsertionSpec& spec,
                            const LesionGenerator& generator) {
  validate_spec(spec);
  std::vector<std::string> ids;
  for (const auto& c : cases) ids.push_back(c.id);
  const auto order = order_by_id(ids);

  std::vector<std::vector<CopyResult>> per_case(cases.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(order.size()); ++k) {
    const std::size_t pos = static_cast<std::size_t>(k);
    const std::size_t i = order[pos];
    try {
      DonorSource donors;
      if (cases.size() > 1) {
        donors = [&, pos](Rng& rng) -> std::optional<std::pair<std::string, LabelVolume>> {
          const std::size_t j = order[pick_other(pos, order.size(), rng)];
          return std::make_pair(cases[j].id, cases[j].labels);
        };
      }
      per_case[i] = augment_case(cases[i], spec, donors, generator);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  AugmentResult result;
  for (std::size_t i : order) {
    for (auto& r : per_case[i]) {
      result.manifest.push_back(r.entry);
      if (r.record) result.new_cases.push_back(std::move(*r.record));
    }
  }
  result.summary = summarize(result.manifest, cases.size());
  return result;
}

namespace {

std::filesystem::path find_volume(const std::filesystem::path& dir, const std::string& stem) {
  for (const char* ext : {".nii.gz", ".nii"}) {
    auto p = dir / (stem + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw IoError(fmt::format("missing volume '{}' (.nii.gz or .nii) in '{}'", stem, dir.string()));
}

}  // namespace

std::vector<std::string> list_cases(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw IoError(fmt::format("'{}' is not a directory", root.string()));
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const std::string id = entry.path().filename().string();
    const auto seg = entry.path() / (id + "_seg.nii.gz");
    const auto seg_plain = entry.path() / (id + "_seg.nii");
    if (std::filesystem::exists(seg) || std::filesystem::exists(seg_plain)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

LabelVolume load_case_labels(const std::filesystem::path& root, const std::string& id) {
  return to_labels(read_nifti(find_volume(root / id, id + "_seg")));
}

CaseRecord load_case(const std::filesystem::path& root, const std::string& id, const LabelScheme& scheme) {
  CaseRecord c;
  c.id = id;
  c.scheme = scheme;
  const auto dir = root / id;
  for (const auto& m : scheme.modalities) {
    NiftiImage img = read_nifti(find_volume(dir, id + "_" + m));
    c.modality_names.push_back(m);
    c.modalities.push_back(to_intensity(img));
    c.modality_headers.push_back(img.header);
  }
  NiftiImage seg = read_nifti(find_volume(dir, id + "_seg"));
  c.labels = to_labels(seg);
  c.label_header = seg.header;
  validate_case(c);
  return c;
}

void save_case(const std::filesystem::path& root, const CaseRecord& c) {
  const auto dir = root / c.id;
  std::filesystem::create_directories(dir);
  for (std::size_t m = 0; m < c.modalities.size(); ++m) {
    const std::string name = m < c.modality_names.size() ? c.modality_names[m] : c.scheme.modalities.at(m);
    const NiftiHeader* like = m < c.modality_headers.size() ? &c.modality_headers[m] : nullptr;
    write_nifti(dir / fmt::format("{}_{}.nii.gz", c.id, name), make_nifti(c.modalities[m], DataType::Float32, like));
  }
  DataType label_type = DataType::UInt8;
  if (c.label_header) {
    const auto t = c.label_header->type();
    if (t == DataType::UInt8 || t == DataType::Int16 || t == DataType::Int32) label_type = t;
  }
  write_nifti(dir / fmt::format("{}_seg.nii.gz", c.id),
              make_nifti(c.labels, label_type, c.label_header ? &*c.label_header : nullptr));
}

DatasetAugmentResult augment_dataset(const std::filesystem::path& in_root, const std::filesystem::path& out_root,
                                     const LabelScheme& scheme, const InsertionSpec& spec,
                                     const LesionGenerator& generator) {
  validate_spec(spec);
  const auto ids = list_cases(in_root);
  std::filesystem::create_directories(out_root);
  std::vector<std::vector<ManifestEntry>> per_case(ids.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(ids.size()); ++k) {
    const auto i = static_cast<std::size_t>(k);
    try {
      DonorSource donors;
      if (ids.size() > 1) {
        donors = [&, i](Rng& rng) -> std::optional<std::pair<std::string, LabelVolume>> {
          const std::string& donor = ids[pick_other(i, ids.size(), rng)];
          return std::make_pair(donor, load_case_labels(in_root, donor));
        };
      }
      std::vector<CopyResult> results;
      try {
        results = augment_case(load_case(in_root, ids[i], scheme), spec, donors, generator);
      } catch (const Error& e) {
        for (std::size_t copy = 1; copy <= spec.copies; ++copy) {
          CopyResult r;
          r.entry.case_id = ids[i];
          r.entry.copy = copy;
          r.entry.new_id = fmt::format("{}-{}", ids[i], copy);
          r.entry.seed = derive_seed(spec.seed, ids[i], copy);
          r.entry.error = e.what();
          results.push_back(std::move(r));
        }
      }
      for (auto& r : results) {
        if (r.record) {
          try {
            save_case(out_root, *r.record);
          } catch (const Error& e) {
            r.entry.ok = false;
            r.entry.error = e.what();
          }
        }
        per_case[i].push_back(std::move(r.entry));
      }
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  DatasetAugmentResult result;
  for (auto& entries : per_case) {
    for (auto& e : entries) result.manifest.push_back(std::move(e));
  }
  result.summary = summarize(result.manifest, ids.size());
  const std::string manifest = manifest_jsonl(result.manifest, result.summary);
  write_file_bytes(out_root / "manifest.jsonl", std::as_bytes(std::span(manifest.data(), manifest.size())));
  return result;
}

}  // namespace btk
