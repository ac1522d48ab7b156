#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "gcamo/features.hpp"
#include "gcamo/gradcamo.hpp"

namespace gcamo::cli {

inline constexpr std::size_t kHistogramBins = 10;

struct Histogram {
  std::string title;
  std::string file;  // svg file name inside the report directory
  std::array<std::size_t, kHistogramBins> counts{};
  GroupStats stats;
};

struct Report {
  AuditSummary summary;
  std::vector<Histogram> histograms;  // overall first, then one per (dose, site)
  std::size_t feature_rows = 0;
  std::size_t feature_dim = 0;
};

/// Joins scores with the feature table's well/site metadata by cell id.
Report build_report(std::vector<ScoreRecord> scores, const FeatureMatrix& features,
                    double cutoff);

/// report.md plus one SVG per histogram.
void write_report(const Report& report, const std::filesystem::path& dir);

std::string histogram_svg(const Histogram& h, double cutoff);

}  // namespace gcamo::cli
