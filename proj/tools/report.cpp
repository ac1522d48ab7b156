#include "report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gcamo/error.hpp"

namespace gcamo::cli {

namespace {

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::size_t bin_of(double s) {
  const auto b = static_cast<std::size_t>(s * kHistogramBins);
  return std::min(b, kHistogramBins - 1);
}

Histogram make_histogram(std::string title, std::string file,
                         const std::vector<const ScoreRecord*>& records, double cutoff) {
  Histogram h;
  h.title = std::move(title);
  h.file = std::move(file);
  std::vector<ScoreRecord> copy;
  for (const auto* r : records) {
    ++h.counts[bin_of(r->score)];
    copy.push_back(*r);
  }
  h.stats = summarize(copy, cutoff).overall;
  return h;
}

void group_table(std::ostream& os, const std::string& key,
                 const std::map<std::string, GroupStats>& groups) {
  os << "| " << key << " | cells | mean | std | kept | degenerate |\n";
  os << "|---|---:|---:|---:|---:|---:|\n";
  for (const auto& [name, g] : groups) {
    os << "| " << name.substr(name.find('=') + 1) << " | " << g.count << " | " << fixed(g.mean)
       << " | " << fixed(g.stddev) << " | " << fixed(g.fraction_kept) << " | " << g.degenerate
       << " |\n";
  }
  os << '\n';
}

}  // namespace

Report build_report(std::vector<ScoreRecord> scores, const FeatureMatrix& features,
                    double cutoff) {
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < features.size(); ++i) row_of[features.cell_ids[i]] = i;
  for (auto& r : scores) {
    const auto it = row_of.find(r.cell_id);
    if (it == row_of.end()) {
      throw ValidationError("scored cell " + r.cell_id + " has no row in the feature table");
    }
    r.well = features.wells[it->second];
    r.site = features.sites[it->second];
    r.keep = r.score >= cutoff;
  }

  Report report;
  report.summary = summarize(scores, cutoff);
  report.feature_rows = features.size();
  report.feature_dim = features.values.cols;

  std::vector<const ScoreRecord*> all;
  std::map<std::pair<int, int>, std::vector<const ScoreRecord*>> groups;
  for (const auto& r : scores) {
    all.push_back(&r);
    groups[{r.label, r.site}].push_back(&r);
  }
  report.histograms.push_back(make_histogram("all cells", "hist_all.svg", all, cutoff));
  for (const auto& [key, records] : groups) {
    const auto [dose, site] = key;
    report.histograms.push_back(make_histogram(
        "dose " + std::to_string(dose) + ", site " + std::to_string(site),
        "hist_dose" + std::to_string(dose) + "_site" + std::to_string(site) + ".svg", records,
        cutoff));
  }
  return report;
}

std::string histogram_svg(const Histogram& h, double cutoff) {
  constexpr int kWidth = 320, kHeight = 200, kLeft = 40, kBottom = 30, kTop = 30;
  constexpr int kPlotW = kWidth - kLeft - 10, kPlotH = kHeight - kTop - kBottom;
  const std::size_t peak = std::max<std::size_t>(1, *std::max_element(h.counts.begin(), h.counts.end()));
  const double bar_w = static_cast<double>(kPlotW) / kHistogramBins;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  os << "<text x=\"" << kLeft << "\" y=\"14\" font-size=\"12\">" << h.title << " (n=" << h.stats.count
     << ", mean=" << fixed(h.stats.mean) << ")</text>\n";
  for (std::size_t b = 0; b < kHistogramBins; ++b) {
    const double bh = static_cast<double>(h.counts[b]) / static_cast<double>(peak) * kPlotH;
    os << "<rect x=\"" << fixed(kLeft + b * bar_w, 1) << "\" y=\""
       << fixed(kTop + kPlotH - bh, 1) << "\" width=\"" << fixed(bar_w - 1, 1) << "\" height=\""
       << fixed(bh, 1) << "\" fill=\"#4878a8\"><title>" << h.counts[b] << "</title></rect>\n";
  }
  const double cx = kLeft + cutoff * kPlotW;
  os << "<line x1=\"" << fixed(cx, 1) << "\" y1=\"" << kTop << "\" x2=\"" << fixed(cx, 1)
     << "\" y2=\"" << kTop + kPlotH << "\" stroke=\"#c03030\" stroke-dasharray=\"4 2\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + kPlotH << "\" x2=\"" << kLeft + kPlotW
     << "\" y2=\"" << kTop + kPlotH << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    os << "<text x=\"" << fixed(kLeft + t * kPlotW / 4.0, 1) << "\" y=\"" << kHeight - 12
       << "\" text-anchor=\"middle\">" << fixed(t / 4.0, 2) << "</text>\n";
  }
  os << "<text x=\"" << kLeft - 4 << "\" y=\"" << kTop + 4 << "\" text-anchor=\"end\">" << peak
     << "</text>\n";
  os << "<text x=\"" << kLeft + kPlotW / 2 << "\" y=\"" << kHeight - 1
     << "\" text-anchor=\"middle\">Grad-CAMO</text>\n";
  os << "</svg>\n";
  return os.str();
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& s = report.summary;
  std::ostringstream md;
  md << "# Grad-CAMO report\n\n";
  md << "- cells scored: " << s.overall.count << "\n";
  md << "- mean Grad-CAMO: " << fixed(s.overall.mean) << " +/- " << fixed(s.overall.stddev) << "\n";
  md << "- cutoff: " << fixed(s.cutoff, 2) << ", fraction kept: " << fixed(s.overall.fraction_kept)
     << "\n";
  md << "- degenerate maps: " << s.overall.degenerate << "\n";
  md << "- classification accuracy: " << fixed(s.accuracy) << "\n";
  md << "- feature table: " << report.feature_rows << " rows x " << report.feature_dim
     << " columns\n\n";
  md << "## By dose\n\n";
  group_table(md, "dose", s.by_dose);
  md << "## By site\n\n";
  group_table(md, "site", s.by_site);
  md << "## By well\n\n";
  group_table(md, "well", s.by_well);
  md << "## Histograms\n\n";
  for (const auto& h : report.histograms) {
    md << "### " << h.title << "\n\n![" << h.title << "](" << h.file << ")\n\n";
    std::ofstream svg(dir / h.file);
    if (!svg) throw IoError("cannot write " + (dir / h.file).string());
    svg << histogram_svg(h, s.cutoff);
  }
  std::ofstream out(dir / "report.md");
  if (!out) throw IoError("cannot write " + (dir / "report.md").string());
  out << md.str();
}

}  // namespace gcamo::cli
