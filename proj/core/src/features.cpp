#include "gcamo/features.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <set>

#include "gcamo/csv.hpp"
#include "gcamo/ops.hpp"
#include "gcamo/parallel.hpp"

namespace gcamo {

void FeatureMatrix::validate() const {
  const std::size_t n = cell_ids.size();
  if (labels.size() != n || wells.size() != n || sites.size() != n || values.rows != n) {
    throw ValidationError("feature matrix metadata and values disagree on row count");
  }
  std::set<std::string> seen;
  for (const auto& id : cell_ids) {
    if (!seen.insert(id).second) throw ValidationError("duplicate feature row for cell " + id);
  }
  for (std::size_t i = 0; i < values.data.size(); ++i) {
    if (!std::isfinite(values.data[i])) {
      throw ValidationError("non-finite feature for cell " + cell_ids[i / values.cols]);
    }
  }
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<std::size_t>& rows) const {
  FeatureMatrix out;
  out.values = Matrix(rows.size(), values.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    out.cell_ids.push_back(cell_ids.at(i));
    out.labels.push_back(labels[i]);
    out.wells.push_back(wells[i]);
    out.sites.push_back(sites[i]);
    std::copy_n(values.data.begin() + static_cast<std::ptrdiff_t>(i * values.cols), values.cols,
                out.values.data.begin() + static_cast<std::ptrdiff_t>(r * values.cols));
  }
  return out;
}

FeatureMatrix extract_features(const MiniCNN3D<float>& model,
                               const std::vector<CellCrop>& crops, std::size_t workers) {
  const std::size_t d = model.spec().feature_dim();
  FeatureMatrix f;
  f.values = Matrix(crops.size(), d);
  parallel_for(
      crops.size(),
      [&](std::size_t i) {
        const auto pooled = ops::global_avg_pool_forward(forward(model, crops[i].volume).activation);
        for (std::size_t c = 0; c < d; ++c) f.values(i, c) = pooled[c];
      },
      workers);
  for (const CellCrop& crop : crops) {
    f.cell_ids.push_back(crop.cell_id);
    f.labels.push_back(crop.label);
    f.wells.push_back(crop.well);
    f.sites.push_back(crop.site);
  }
  f.validate();
  return f;
}

void write_features_csv(const FeatureMatrix& f, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "cell_id,label,well,site";
  for (std::size_t c = 0; c < f.values.cols; ++c) out << ",f" << c;
  out << '\n';
  for (std::size_t r = 0; r < f.size(); ++r) {
    out << f.cell_ids[r] << ',' << f.labels[r] << ',' << f.wells[r] << ',' << f.sites[r];
    for (std::size_t c = 0; c < f.values.cols; ++c) out << ',' << csv::format(f.values(r, c));
    out << '\n';
  }
}

FeatureMatrix read_features_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::read(path);
  const std::size_t id = t.column("cell_id"), label = t.column("label"),
                    well = t.column("well"), site = t.column("site");
  std::vector<std::size_t> value_cols;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c].size() > 1 && t.header[c][0] == 'f' &&
        std::isdigit(static_cast<unsigned char>(t.header[c][1]))) {
      value_cols.push_back(c);
    }
  }
  FeatureMatrix f;
  f.values = Matrix(t.rows.size(), value_cols.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::size_t line = t.line_numbers[r];
    f.cell_ids.push_back(row[id]);
    f.labels.push_back(csv::to_int(row[label], path, line));
    f.wells.push_back(row[well]);
    f.sites.push_back(csv::to_int(row[site], path, line));
    for (std::size_t c = 0; c < value_cols.size(); ++c) {
      f.values(r, c) = csv::to_double(row[value_cols[c]], path, line);
    }
  }
  f.validate();
  return f;
}

Matrix pca2(const Matrix& x) {
  if (x.rows < 2 || x.cols < 2) throw ValidationError("pca2 needs at least 2 rows and 2 columns");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> m(x.data.data(), static_cast<Eigen::Index>(x.rows),
                             static_cast<Eigen::Index>(x.cols));
  const Eigen::RowVectorXd mean = m.colwise().mean();
  const RowMat centred = m.rowwise() - mean;
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::Index d = cov.rows();
  Eigen::MatrixXd axes(d, 2);
  for (Eigen::Index k = 0; k < 2; ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - k);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;  // deterministic sign
    axes.col(k) = v;
  }
  const RowMat proj = centred * axes;
  Matrix out(x.rows, 2);
  for (std::size_t r = 0; r < x.rows; ++r) {
    out(r, 0) = proj(static_cast<Eigen::Index>(r), 0);
    out(r, 1) = proj(static_cast<Eigen::Index>(r), 1);
  }
  return out;
}

}  // namespace gcamo
