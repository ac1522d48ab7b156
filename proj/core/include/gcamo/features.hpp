#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "gcamo/model.hpp"
#include "gcamo/volume.hpp"

namespace gcamo {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// One row per cell: pooled activation plus metadata.
struct FeatureMatrix {
  std::vector<std::string> cell_ids;
  std::vector<int> labels;
  std::vector<std::string> wells;
  std::vector<int> sites;
  Matrix values;

  std::size_t size() const { return cell_ids.size(); }
  /// Throws on NaN/Inf, duplicate ids, or ragged metadata.
  void validate() const;
  FeatureMatrix select_rows(const std::vector<std::size_t>& rows) const;
};

/// global_avg_pool(A) for each preprocessed crop, in input order.
FeatureMatrix extract_features(const MiniCNN3D<float>& model,
                               const std::vector<CellCrop>& crops, std::size_t workers = 0);

/// cell_id,label,well,site,f0..f{d-1}
void write_features_csv(const FeatureMatrix& f, const std::filesystem::path& path);
FeatureMatrix read_features_csv(const std::filesystem::path& path);

/// Projection of centred rows onto the top two principal axes.
Matrix pca2(const Matrix& x);

}  // namespace gcamo
