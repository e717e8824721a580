#include <charconv>
#include <map>

#include <fmt/format.h>

#include "btk/metrics.hpp"
#include "json.hpp"

namespace btk {

namespace {

constexpr std::string_view kReportHeader = "case_id,mode,region,dsc,hd95,tp,fp,fn";

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto p = line.find(sep);
    out.push_back(line.substr(0, p));
    if (p == std::string_view::npos) break;
    line.remove_prefix(p + 1);
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, std::size_t line_no) {
  T v{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size()) {
    throw ParseError(fmt::format("report CSV line {}: '{}' is not a number", line_no, tok));
  }
  return v;
}

}  // namespace

std::string reports_csv(std::span<const MetricsReport> reports) {
  std::string out(kReportHeader);
  out += '\n';
  for (const auto& r : reports) {
    for (const auto& row : r.regions) {
      out += fmt::format("{},{},{},{},{},{},{},{}\n", r.case_id, mode_name(r.mode), row.region, row.dsc, row.hd95,
                         row.tp, row.fp, row.fn);
    }
  }
  return out;
}

std::string reports_json(std::span<const MetricsReport> reports) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["case_id"] = r.case_id;
    j["mode"] = std::string(mode_name(r.mode));
    j["regions"] = nlohmann::ordered_json::array();
    for (const auto& row : r.regions) {
      j["regions"].push_back({{"region", row.region},
                              {"dsc", row.dsc},
                              {"hd95", row.hd95},
                              {"tp", row.tp},
                              {"fp", row.fp},
                              {"fn", row.fn}});
    }
    doc.push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

std::vector<MetricsReport> parse_reports_csv(std::string_view text) {
  std::vector<MetricsReport> reports;
  std::map<std::string, std::size_t> index;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kReportHeader) {
        throw ParseError(fmt::format("report CSV: expected header '{}', got '{}'", kReportHeader, line));
      }
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 8) throw ParseError(fmt::format("report CSV line {}: expected 8 fields", line_no));
    const std::string id(f[0]);
    const MetricMode mode = parse_mode(f[1]);
    auto [it, inserted] = index.try_emplace(id, reports.size());
    if (inserted) reports.push_back(MetricsReport{id, mode, {}});
    MetricsReport& r = reports[it->second];
    if (r.mode != mode) throw ParseError(fmt::format("report CSV line {}: case '{}' mixes modes", line_no, id));
    RegionScore row;
    row.region = std::string(f[2]);
    row.dsc = parse_number<double>(f[3], line_no);
    row.hd95 = parse_number<double>(f[4], line_no);
    row.tp = parse_number<std::size_t>(f[5], line_no);
    row.fp = parse_number<std::size_t>(f[6], line_no);
    row.fn = parse_number<std::size_t>(f[7], line_no);
    r.regions.push_back(std::move(row));
  }
  if (!header_seen) throw ParseError("report CSV: empty input");
  return reports;
}

std::string summary_csv(const AggregateSummary& s) {
  std::string out = "Region,DSC (Mean),DSC (Std),HD95 (Mean),HD95 (Std),Cases,TP,FP,FN\n";
  for (const auto& r : s.regions) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.region, r.dsc_mean, r.dsc_std, r.hd95_mean, r.hd95_std,
                       r.cases, r.tp, r.fp, r.fn);
  }
  return out;
}

std::string summary_json(const AggregateSummary& s) {
  nlohmann::ordered_json doc;
  doc["mode"] = std::string(mode_name(s.mode));
  doc["regions"] = nlohmann::ordered_json::array();
  for (const auto& r : s.regions) {
    doc["regions"].push_back({{"region", r.region},
                              {"DSC (Mean)", r.dsc_mean},
                              {"DSC (Std)", r.dsc_std},
                              {"HD95 (Mean)", r.hd95_mean},
                              {"HD95 (Std)", r.hd95_std},
                              {"cases", r.cases},
                              {"tp", r.tp},
                              {"fp", r.fp},
                              {"fn", r.fn}});
  }
  return doc.dump(2) + "\n";
}

std::string summary_table(const AggregateSummary& s) {
  std::string out = fmt::format("{:<8}{:>12}{:>12}{:>13}{:>13}{:>8}{:>8}{:>8}\n", "Region", "DSC (Mean)", "DSC (Std)",
                                "HD95 (Mean)", "HD95 (Std)", "TP", "FP", "FN");
  for (const auto& r : s.regions) {
    out += fmt::format("{:<8}{:>12.4f}{:>12.4f}{:>13.2f}{:>13.2f}{:>8}{:>8}{:>8}\n", r.region, r.dsc_mean, r.dsc_std,
                       r.hd95_mean, r.hd95_std, r.tp, r.fp, r.fn);
  }
  return out;
}

}  // namespace btk
