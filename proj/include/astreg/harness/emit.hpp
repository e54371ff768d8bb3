#pragma once
// Result artifacts: results.csv, one scatter SVG per model, reports.json and
// run_manifest.json.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "astreg/harness/experiment.hpp"
#include "astreg/treedata/corpus_io.hpp"

namespace astreg::harness {

inline constexpr const char* kManifestSchema = "astreg-run-manifest/1.0.0";
inline constexpr const char* kCsvHeader =
    "model,dataset,protocol,fraction,mse_mean,mse_std,mae_mean,mae_std,pearson_mean,pearson_std";

inline std::string sha1_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha1(), nullptr)) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

/// Same digest as `git hash-object` over the given bytes.
inline std::string git_blob_hash(const std::string& content) {
  std::string blob = fmt::format("blob {}", content.size());
  blob.push_back('\0');
  blob += content;
  return sha1_hex(blob);
}

inline std::string corpus_hash(const std::vector<SampleRecord>& records) {
  return git_blob_hash(treedata::canonical_corpus_text(records));
}

inline std::vector<MetricsReport> sorted_reports(std::vector<MetricsReport> reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const MetricsReport& a, const MetricsReport& b) {
    return std::tie(a.model, a.dataset, a.protocol, a.fraction) < std::tie(b.model, b.dataset, b.protocol, b.fraction);
  });
  return reports;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string results_csv(const std::vector<MetricsReport>& reports) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : sorted_reports(reports)) {
    out += fmt::format("{},{},{},{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g}\n", csv_field(r.model), csv_field(r.dataset),
                       csv_field(r.protocol), r.fraction, r.mse.mean, r.mse.std, r.mae.mean, r.mae.std, r.pearson.mean,
                       r.pearson.std);
  }
  return out;
}

/// 800x800 scatter of predicted (x) against real (y) with the dashed
/// least-squares line y = slope * x + intercept.
inline std::string scatter_svg(const std::string& title, const std::vector<std::pair<double, double>>& truth_pred) {
  constexpr double size = 800, margin = 70;
  std::vector<double> xs, ys;
  for (auto [t, p] : truth_pred) {
    xs.push_back(p);
    ys.push_back(t);
  }
  double lo = 0, hi = 1;
  if (!xs.empty()) {
    lo = std::min(*std::min_element(xs.begin(), xs.end()), *std::min_element(ys.begin(), ys.end()));
    hi = std::max(*std::max_element(xs.begin(), xs.end()), *std::max_element(ys.begin(), ys.end()));
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = (hi - lo) * 0.05;
  lo -= pad;
  hi += pad;
  auto sx = [&](double v) { return margin + (v - lo) / (hi - lo) * (size - 2 * margin); };
  auto sy = [&](double v) { return size - margin - (v - lo) / (hi - lo) * (size - 2 * margin); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{0}\" viewBox=\"0 0 {0} {0}\">\n"
      "<rect width=\"{0}\" height=\"{0}\" fill=\"white\"/>\n"
      "<text x=\"{1}\" y=\"40\" font-family=\"sans-serif\" font-size=\"20\" text-anchor=\"middle\">{2}</text>\n"
      "<rect x=\"{3}\" y=\"{3}\" width=\"{4}\" height=\"{4}\" fill=\"none\" stroke=\"black\"/>\n"
      "<text x=\"{1}\" y=\"{5}\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">predicted</text>\n"
      "<text x=\"20\" y=\"{1}\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 20 {1})\">real</text>\n",
      size, size / 2, title, margin, size - 2 * margin, size - 20);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    svg += fmt::format("<circle cx=\"{:.3f}\" cy=\"{:.3f}\" r=\"4\" fill=\"steelblue\" fill-opacity=\"0.7\"/>\n", sx(xs[i]), sy(ys[i]));
  }
  if (!xs.empty()) {
    const LineFit fit = least_squares(xs, ys);
    svg += fmt::format(
        "<line class=\"fit\" data-slope=\"{:.12g}\" data-intercept=\"{:.12g}\" x1=\"{:.3f}\" y1=\"{:.3f}\" x2=\"{:.3f}\" "
        "y2=\"{:.3f}\" stroke=\"firebrick\" stroke-width=\"2\" stroke-dasharray=\"8 6\"/>\n",
        fit.slope, fit.intercept, sx(lo), sy(fit.slope * lo + fit.intercept), sx(hi), sy(fit.slope * hi + fit.intercept));
  }
  svg += "</svg>\n";
  return svg;
}

struct CorpusInfo {
  std::string name;
  std::size_t records = 0;
  std::string hash;
};

inline CorpusInfo describe_corpus(const std::string& name, const std::vector<SampleRecord>& records) {
  return {name, records.size(), corpus_hash(records)};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("failed writing {}", path.string()));
}

/// Writes results.csv, reports.json, scatter_<model>.svg and run_manifest.json.
inline void emit_results(const std::vector<MetricsReport>& reports, const std::filesystem::path& out_dir,
                         const nlohmann::json& effective_config, const std::vector<CorpusInfo>& corpora) {
  if (reports.empty()) throw std::invalid_argument("emit_results: no reports");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw std::runtime_error(fmt::format("cannot create output directory {}", out_dir.string()));
  }
  const auto sorted = sorted_reports(reports);
  write_text(out_dir / "results.csv", results_csv(sorted));

  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : sorted) all.push_back(r.to_json());
  write_text(out_dir / "reports.json", all.dump(2) + "\n");

  std::map<std::string, const MetricsReport*> first_per_model;
  for (const auto& r : sorted) first_per_model.emplace(r.model, &r);
  for (const auto& [model, r] : first_per_model) {
    const std::string title = fmt::format("{} on {} ({} {})", model, r->dataset, r->protocol, r->fraction);
    write_text(out_dir / fmt::format("scatter_{}.svg", model), scatter_svg(title, r->last_pairs()));
  }

  nlohmann::json corp = nlohmann::json::array();
  for (const auto& c : corpora) corp.push_back({{"name", c.name}, {"records", c.records}, {"sha1", c.hash}});
  std::vector<std::uint64_t> seeds;
  for (const auto& s : sorted.front().seeds) seeds.push_back(s.seed);
  nlohmann::json manifest = {{"schema", kManifestSchema},
                             {"config", effective_config},
                             {"seeds", seeds},
                             {"corpora", corp},
                             {"cells", sorted.size()}};
  write_text(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
}

inline std::vector<MetricsReport> load_reports(const std::filesystem::path& file) {
  const auto j = treedata::detail::parse_json_text(treedata::detail::read_file(file), file.string());
  std::vector<MetricsReport> out;
  for (const auto& r : j) out.push_back(MetricsReport::from_json(r));
  return out;
}

}  // namespace astreg::harness
