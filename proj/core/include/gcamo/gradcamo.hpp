#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gcamo/features.hpp"
#include "gcamo/gradcam.hpp"
#include "gcamo/model.hpp"
#include "gcamo/volume.hpp"

namespace gcamo {

inline constexpr double kDefaultCutoff = 0.25;
inline constexpr double kRatioFloor = 1e-8;
// Regularizer weight for the synthetic benchmark. At 1.0 the overlap term
// dominates cross-entropy early on and training collapses to chance.
inline constexpr double kRecommendedLambda = 0.1;

struct GradcamoScore {
  double score = 0.0;
  bool degenerate = false;
};

/// sum(G * M) / sum(G). An all-zero map scores 0 and is flagged degenerate.
/// G must be non-negative and M binary, with equal shapes.
template <typename T>
GradcamoScore gradcamo_score(const Tensor<T>& map, const Tensor<T>& mask);

struct ScoreRecord {
  std::string cell_id;
  int label = 0;
  int pred = 0;
  double prob = 0.0;
  double score = 0.0;
  bool degenerate = false;
  bool keep = false;
  // Grouping metadata; not part of the scores CSV.
  std::string well;
  int site = 0;
};

struct GroupStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
  double fraction_kept = 0.0;
  std::size_t degenerate = 0;
};

struct AuditSummary {
  double cutoff = kDefaultCutoff;
  GroupStats overall;
  std::map<std::string, GroupStats> by_dose;
  std::map<std::string, GroupStats> by_site;
  std::map<std::string, GroupStats> by_well;
  std::map<std::string, GroupStats> by_dose_site;  // key "dose=<d>,site=<s>"
  double accuracy = 0.0;
};

/// Aggregates records in cell-id order, so the result does not depend on the
/// order of `records`.
AuditSummary summarize(const std::vector<ScoreRecord>& records, double cutoff);

struct AuditResult {
  std::vector<ScoreRecord> records;
  AuditSummary summary;
};

/// Called once per cell with its index and map; may run on worker threads.
using MapSink = std::function<void(std::size_t, const LocalizationMap<float>&)>;

/// Grad-CAM + Grad-CAMO for every preprocessed crop (masks at model input
/// resolution). Records follow input order.
AuditResult audit(const MiniCNN3D<float>& model, const std::vector<CellCrop>& crops,
                  double cutoff = kDefaultCutoff, std::size_t workers = 0,
                  const MapSink& sink = {});

/// Keeps rows whose record has keep = (score >= cutoff), preserving order.
FeatureMatrix filter_features(const FeatureMatrix& features,
                              const std::vector<ScoreRecord>& records, double cutoff);

/// cell_id,label,pred,prob,gradcamo,degenerate,keep
void write_scores_csv(const std::vector<ScoreRecord>& records, const std::filesystem::path& path);
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);
std::string summary_to_json(const AuditSummary& summary);

template <typename T>
struct Example {
  Tensor<T> volume;  // preprocessed [C,X,Y,Z]
  Tensor<T> mask;    // [X,Y,Z] binary
  std::size_t label = 0;
};

template <typename T>
struct BatchLoss {
  T loss{0};            // mean cross entropy - lambda * mean Grad-CAMO
  T cross_entropy{0};   // mean over the batch
  T gradcamo{0};        // mean differentiable Grad-CAMO (0 when lambda == 0)
  std::size_t correct = 0;
  std::vector<Tensor<T>> grads;  // d loss / d params, empty unless requested
};

/// Batch objective for training. With lambda > 0 each example adds
/// -lambda * s, where s is Grad-CAMO of the predicted class with the channel
/// weights held constant; gradients flow through A, the ReLU, the upsampling,
/// and the overlap ratio (denominator floored at kRatioFloor).
template <typename T>
BatchLoss<T> regularized_loss(const MiniCNN3D<T>& model, std::span<const Example<T>> batch,
                              T lambda, bool compute_grads, std::size_t workers = 1);

}  // namespace gcamo
