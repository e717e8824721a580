// btk: batch front end for ingestion, augmentation, ensembling,
// post-processing and evaluation of brain tumour segmentations.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <omp.h>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "btk/augment.hpp"
#include "btk/ensemble.hpp"
#include "btk/metrics.hpp"
#include "btk/nifti_io.hpp"
#include "btk/regions.hpp"

namespace fs = std::filesystem;

namespace {

template <typename... Args>
void log(fmt::format_string<Args...> f, Args&&... args) {
  fmt::print(stderr, "[btk] {}\n", fmt::format(f, std::forward<Args>(args)...));
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
    return;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  btk::write_file_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

std::string read_text(const fs::path& path) {
  const auto bytes = btk::read_file_bytes(path);
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

bool is_nifti(const fs::path& p) {
  const std::string name = p.filename().string();
  return name.ends_with(".nii") || name.ends_with(".nii.gz");
}

std::string nifti_stem(const fs::path& p) {
  std::string name = p.filename().string();
  for (std::string_view ext : {".nii.gz", ".nii"}) {
    if (name.ends_with(ext)) {
      name.resize(name.size() - ext.size());
      break;
    }
  }
  return name;
}

std::string case_id_of(const fs::path& p) {
  std::string stem = nifti_stem(p);
  if (stem.ends_with("_seg")) stem.resize(stem.size() - 4);
  return stem;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string path;
};

int run_inspect(const InspectArgs& a) {
  const btk::NiftiImage img = btk::read_nifti(a.path);
  const auto& h = img.header;
  const auto& g = img.geometry;
  std::string out;
  out += fmt::format("file: {}\n", a.path);
  out += fmt::format("dims: {}x{}x{}\n", g.extents[0], g.extents[1], g.extents[2]);
  if (h.channels() > 1) out += fmt::format("channels: {}\n", h.channels());
  out += fmt::format("spacing_mm: {} {} {}\n", g.spacing_mm[0], g.spacing_mm[1], g.spacing_mm[2]);
  out += fmt::format("datatype: {} ({} bits)\n", btk::datatype_name(h.type()), h.bitpix);
  out += fmt::format("byte_order: {}\n", h.big_endian ? "big-endian" : "little-endian");
  if (h.has_scaling()) out += fmt::format("scaling: slope {} inter {}\n", h.scl_slope, h.scl_inter);
  out += fmt::format("qform_code: {} sform_code: {}\n", h.qform_code, h.sform_code);

  const auto values = btk::real_values(img);
  const bool integral = std::all_of(values.begin(), values.end(),
                                    [](double v) { return v >= 0 && v <= 255 && v == std::floor(v); });
  if (integral && h.channels() == 1) {
    std::map<int, std::size_t> hist;
    for (double v : values) ++hist[static_cast<int>(v)];
    out += "labels:\n";
    for (const auto& [label, count] : hist) out += fmt::format("  {}: {}\n", label, count);
  } else if (!values.empty()) {
    double lo = values[0], hi = values[0], sum = 0.0;
    for (double v : values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    out += fmt::format("range: {} .. {}\nmean: {}\n", lo, hi, sum / static_cast<double>(values.size()));
  }
  write_text("-", out);
  return 0;
}

// ------------------------------------------------------------ postprocess

struct PostprocessArgs {
  std::string in, out;
  std::string scheme = "glioma";
  std::string thresholds = "50,0,0,50";
  int connectivity = 26;
  std::string log_path;
};

int run_postprocess(const PostprocessArgs& a) {
  const btk::LabelScheme scheme = btk::scheme_by_name(a.scheme);
  const btk::ThresholdPolicy policy = btk::parse_threshold_policy(a.thresholds);
  const auto in_bytes = btk::read_file_bytes(a.in);
  const btk::NiftiImage img = btk::parse_nifti(in_bytes);
  const btk::LabelVolume labels = btk::to_labels(img);
  const btk::ThresholdResult r = btk::apply_threshold_policy(labels, scheme, policy, a.connectivity);

  for (const auto& rec : r.removals) {
    log("removed {} component of {} voxels at ({:.1f}, {:.1f}, {:.1f})", rec.region, rec.voxel_count,
        rec.centroid[0], rec.centroid[1], rec.centroid[2]);
  }
  if (!a.log_path.empty()) write_text(a.log_path, btk::removal_log_jsonl(r.removals));

  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  if (r.labels == labels && btk::has_gzip_suffix(a.in) == btk::has_gzip_suffix(a.out)) {
    btk::write_file_bytes(a.out, in_bytes);
  } else {
    btk::write_nifti(a.out, btk::make_nifti(r.labels, img.header.type(), &img.header));
  }
  log("postprocess: {} component(s) removed, wrote {}", r.removals.size(), a.out);
  return 0;
}

// --------------------------------------------------------------- ensemble

struct EnsembleArgs {
  std::string spec;
  std::string out;
};

int run_ensemble(const EnsembleArgs& a) {
  btk::EnsembleSpec spec = btk::load_ensemble_spec(a.spec);
  if (!a.out.empty()) spec.output = a.out;
  if (spec.output.empty()) throw btk::ContractError("ensemble: no output path (spec 'output' or --out)");
  log("ensemble: {} member(s)", spec.members.size());
  const btk::EnsembleResult r = btk::run_ensemble(spec);
  if (spec.output.has_parent_path()) fs::create_directories(spec.output.parent_path());
  btk::write_nifti(spec.output, btk::make_nifti(r.labels, btk::DataType::UInt8, &r.header));
  log("ensemble: wrote {}", spec.output.string());
  return 0;
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string pred_dir, gt_dir;
  std::string mode = "semi-lesion-wise";
  std::string scheme = "glioma";
  double penalty = btk::kDefaultPenaltyMm;
  int dilation = 0;
  int connectivity = 26;
  std::string out_csv, out_json;
};

std::map<std::string, fs::path> index_niftis(const fs::path& root, bool seg_only) {
  if (!fs::is_directory(root)) throw btk::IoError(fmt::format("'{}' is not a directory", root.string()));
  std::map<std::string, fs::path> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && is_nifti(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  const bool any_seg = std::any_of(files.begin(), files.end(),
                                   [](const fs::path& p) { return nifti_stem(p).ends_with("_seg"); });
  for (const auto& p : files) {
    if (seg_only && any_seg && !nifti_stem(p).ends_with("_seg")) continue;
    const std::string id = case_id_of(p);
    auto [it, inserted] = out.emplace(id, p);
    if (!inserted && nifti_stem(p).ends_with("_seg") && !nifti_stem(it->second).ends_with("_seg")) it->second = p;
  }
  return out;
}

int run_evaluate(const EvaluateArgs& a) {
  const btk::LabelScheme scheme = btk::scheme_by_name(a.scheme);
  btk::LesionOptions opt;
  opt.mode = btk::parse_mode(a.mode);
  opt.penalty_mm = a.penalty;
  opt.dilation_voxels = a.dilation;
  opt.connectivity = a.connectivity;

  const auto gt = index_niftis(a.gt_dir, true);
  const auto pred = index_niftis(a.pred_dir, false);
  if (gt.empty()) throw btk::IoError(fmt::format("no ground-truth volumes under '{}'", a.gt_dir));
  std::vector<std::pair<std::string, fs::path>> cases(gt.begin(), gt.end());
  for (const auto& [id, _] : cases) {
    if (!pred.count(id)) throw btk::IoError(fmt::format("no prediction for case '{}' under '{}'", id, a.pred_dir));
  }

  std::vector<btk::MetricsReport> reports(cases.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(cases.size()); ++k) {
    const auto& [id, gt_path] = cases[static_cast<std::size_t>(k)];
    try {
      const btk::LabelVolume g = btk::to_labels(btk::read_nifti(gt_path));
      const btk::LabelVolume p = btk::to_labels(btk::read_nifti(pred.at(id)));
      reports[static_cast<std::size_t>(k)] = btk::evaluate_case(id, p, g, scheme, opt);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  log("evaluate: {} case(s), mode {}", reports.size(), btk::mode_name(opt.mode));
  if (a.out_csv.empty() && a.out_json.empty()) {
    write_text("-", btk::reports_csv(reports));
  } else {
    if (!a.out_csv.empty()) write_text(a.out_csv, btk::reports_csv(reports));
    if (!a.out_json.empty()) write_text(a.out_json, btk::reports_json(reports));
  }
  return 0;
}

// -------------------------------------------------------------- aggregate

struct AggregateArgs {
  std::vector<std::string> inputs;
  std::string out_csv, out_json;
};

int run_aggregate(const AggregateArgs& a) {
  std::vector<btk::MetricsReport> all;
  for (const auto& path : a.inputs) {
    auto reports = btk::parse_reports_csv(read_text(path));
    for (auto& r : reports) all.push_back(std::move(r));
  }
  const btk::AggregateSummary s = btk::aggregate_reports(all);
  if (!a.out_csv.empty()) write_text(a.out_csv, btk::summary_csv(s));
  if (!a.out_json.empty()) write_text(a.out_json, btk::summary_json(s));
  write_text("-", btk::summary_table(s));
  return 0;
}

// ---------------------------------------------------------------- augment

struct AugmentArgs {
  std::string dataset, out;
  std::string scheme = "glioma";
  std::string head_mask = "nonzero";
  btk::InsertionSpec spec;
};

int run_augment(const AugmentArgs& a) {
  const btk::LabelScheme scheme = btk::scheme_by_name(a.scheme);
  btk::InsertionSpec spec = a.spec;
  if (a.head_mask == "nonzero") {
    spec.head_mask = btk::HeadMaskSource::Nonzero;
  } else if (a.head_mask == "otsu") {
    spec.head_mask = btk::HeadMaskSource::Otsu;
  } else {
    throw btk::ParseError(fmt::format("unknown head mask '{}' (nonzero, otsu)", a.head_mask));
  }
  const auto r = btk::augment_dataset(a.dataset, a.out, scheme, spec);
  std::size_t placement_failures = 0;
  for (const auto& e : r.manifest) {
    if (e.ok) continue;
    placement_failures += e.placement_failure;
    log("skipped {} copy {}: {}", e.case_id, e.copy, e.error);
  }
  for (const auto& e : r.manifest) {
    if (e.ok && e.near_head_boundary) log("note: {} placed within 2 voxels of the head boundary", e.new_id);
  }
  log("augment: {} original, {} new, {} skipped, total {}", r.summary.original_cases, r.summary.new_cases,
      r.summary.skipped, r.summary.total());
  if (r.summary.new_cases > 0) return 0;
  if (r.summary.skipped > 0 && placement_failures == r.summary.skipped) return 3;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"btk: brain tumour segmentation toolkit"};
  app.require_subcommand(1);
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "TOML configuration file; command-line flags take precedence");
  int workers = 0;
  app.add_option("--workers", workers, "Worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  InspectArgs inspect;
  auto* c_inspect = app.add_subcommand("inspect", "Print header, geometry and label histogram");
  c_inspect->add_option("path", inspect.path, "NIfTI file")->required();

  PostprocessArgs post;
  auto* c_post = app.add_subcommand("postprocess", "Remove small components per region");
  c_post->add_option("input", post.in, "Label volume")->required();
  c_post->add_option("output", post.out, "Output label volume")->required();
  c_post->add_option("--scheme", post.scheme, "Label scheme")->capture_default_str();
  c_post->add_option("--thresholds", post.thresholds, "Minimum voxels per threshold region")->capture_default_str();
  c_post->add_option("--connectivity", post.connectivity)->check(CLI::IsMember({6, 18, 26}))->capture_default_str();
  c_post->add_option("--removal-log", post.log_path, "JSON-lines removal log");

  EnsembleArgs ens;
  auto* c_ens = app.add_subcommand("ensemble", "Average member probability maps and take argmax");
  c_ens->add_option("spec", ens.spec, "Ensemble spec (JSON)")->required();
  c_ens->add_option("-o,--out", ens.out, "Output label volume (overrides the spec)");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score predictions against ground truth");
  c_eval->add_option("pred_dir", ev.pred_dir)->required();
  c_eval->add_option("gt_dir", ev.gt_dir)->required();
  c_eval->add_option("--mode", ev.mode)
      ->check(CLI::IsMember({"volumetric", "lesion-wise", "semi-lesion-wise"}))
      ->capture_default_str();
  c_eval->add_option("--scheme", ev.scheme)->capture_default_str();
  c_eval->add_option("--penalty", ev.penalty, "HD95 for an unmatched lesion (mm)")->capture_default_str();
  c_eval->add_option("--dilation", ev.dilation, "GT dilation for lesion matching (voxels)")->capture_default_str();
  c_eval->add_option("--connectivity", ev.connectivity)->check(CLI::IsMember({6, 18, 26}))->capture_default_str();
  c_eval->add_option("--csv", ev.out_csv, "Per-case CSV");
  c_eval->add_option("--json", ev.out_json, "Per-case JSON");

  AggregateArgs agg;
  auto* c_agg = app.add_subcommand("aggregate", "Summarise per-case CSVs");
  c_agg->add_option("inputs", agg.inputs, "Per-case CSV files")->required();
  c_agg->add_option("--csv", agg.out_csv, "Summary CSV");
  c_agg->add_option("--json", agg.out_json, "Summary JSON");

  AugmentArgs aug;
  auto* c_aug = app.add_subcommand("augment", "Insert synthetic lesions into healthy tissue");
  c_aug->add_option("dataset", aug.dataset, "Dataset root")->required();
  c_aug->add_option("-o,--out", aug.out, "Output root for new cases")->required();
  c_aug->add_option("--scheme", aug.scheme)->capture_default_str();
  c_aug->add_option("--seed", aug.spec.seed)->capture_default_str();
  c_aug->add_option("--copies", aug.spec.copies, "Copies per case")->capture_default_str();
  c_aug->add_option("--max-retries", aug.spec.max_retries)->capture_default_str();
  c_aug->add_option("--p-generated", aug.spec.use_generated_label, "Probability of a generated label")
      ->capture_default_str();
  c_aug->add_option("--min-distance", aug.spec.min_distance, "Voxels from existing lesions")->capture_default_str();
  c_aug->add_option("--blend-sigma", aug.spec.blend_sigma)->capture_default_str();
  c_aug->add_option("--min-radius", aug.spec.size.min_radius)->capture_default_str();
  c_aug->add_option("--max-radius", aug.spec.size.max_radius)->capture_default_str();
  c_aug->add_option("--head-mask", aug.head_mask)->check(CLI::IsMember({"nonzero", "otsu"}))->capture_default_str();
  c_aug->add_option("--connectivity", aug.spec.connectivity)->check(CLI::IsMember({6, 18, 26}))
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (workers > 0) omp_set_num_threads(workers);
  std::string resolved = app.config_to_str(true, false);
  log("resolved config:\n{}", resolved);

  try {
    if (*c_inspect) return run_inspect(inspect);
    if (*c_post) return run_postprocess(post);
    if (*c_ens) return run_ensemble(ens);
    if (*c_eval) return run_evaluate(ev);
    if (*c_agg) return run_aggregate(agg);
    if (*c_aug) return run_augment(aug);
  } catch (const btk::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}
