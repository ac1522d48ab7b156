#include "gcamo/whitening.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gcamo/tbf.hpp"

namespace gcamo {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> view(const Matrix& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

}  // namespace

WhiteningTransform fit_whitening(const Matrix& controls) {
  if (controls.rows < 2) {
    throw ValidationError("whitening needs at least 2 control rows, got " +
                          std::to_string(controls.rows));
  }
  for (double v : controls.data) {
    if (!std::isfinite(v)) throw ValidationError("whitening input contains NaN or Inf");
  }
  const auto x = view(controls);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const RowMat centred = x.rowwise() - mu;
  const Eigen::MatrixXd cov =
      (centred.transpose() * centred) / static_cast<double>(controls.rows);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw ValidationError("covariance eigendecomposition failed");
  Eigen::VectorXd lambda = eig.eigenvalues();
  const double lambda_max = lambda.maxCoeff();
  const double eps = lambda_max > 0.0 ? kRelativeEigenFloor * lambda_max : kAbsoluteEigenFloor;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = std::max(lambda(i), eps);

  const Eigen::MatrixXd& q = eig.eigenvectors();
  Eigen::MatrixXd w = q * lambda.cwiseInverse().cwiseSqrt().asDiagonal() * q.transpose();
  w = (0.5 * (w + w.transpose())).eval();

  WhiteningTransform t;
  t.mean.assign(mu.data(), mu.data() + mu.size());
  t.matrix = Matrix(controls.cols, controls.cols);
  for (std::size_t r = 0; r < controls.cols; ++r) {
    for (std::size_t c = 0; c < controls.cols; ++c) {
      t.matrix(r, c) = w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  t.epsilon = eps;
  t.fit_rows = controls.rows;
  return t;
}

Matrix apply_whitening(const WhiteningTransform& t, const Matrix& features) {
  if (features.cols != t.dim()) {
    throw ValidationError("whitening expects " + std::to_string(t.dim()) +
                          " feature columns, got " + std::to_string(features.cols));
  }
  const auto y = view(features);
  const auto w = view(t.matrix);
  const Eigen::Map<const Eigen::RowVectorXd> mu(t.mean.data(),
                                                static_cast<Eigen::Index>(t.mean.size()));
  const RowMat out = (y.rowwise() - mu) * w.transpose();
  Matrix m(features.rows, features.cols);
  std::copy(out.data(), out.data() + out.size(), m.data.begin());
  return m;
}

FeatureMatrix whiten_by_group(const FeatureMatrix& features, int control_label,
                              const std::vector<std::string>& group_keys) {
  if (group_keys.size() != features.size()) {
    throw ValidationError("whiten_by_group: one group key per row is required");
  }
  std::map<std::string, std::vector<std::size_t>> rows, controls;
  for (std::size_t i = 0; i < features.size(); ++i) {
    rows[group_keys[i]].push_back(i);
    if (features.labels[i] == control_label) controls[group_keys[i]].push_back(i);
  }
  FeatureMatrix out = features;
  for (const auto& [key, idx] : rows) {
    const auto it = controls.find(key);
    if (it == controls.end()) {
      throw ValidationError("group " + key + " has no control cells with label " +
                            std::to_string(control_label));
    }
    const auto t = fit_whitening(features.select_rows(it->second).values);
    const Matrix mapped = apply_whitening(t, features.select_rows(idx).values);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t c = 0; c < mapped.cols; ++c) out.values(idx[r], c) = mapped(r, c);
    }
  }
  return out;
}

void save_whitening(const WhiteningTransform& t, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  tbf::save(dir / "mean.tbf", TensorD(Shape{t.dim()}, t.mean));
  tbf::save(dir / "matrix.tbf", TensorD(Shape{t.dim(), t.dim()}, t.matrix.data));
  nlohmann::json meta{{"epsilon", t.epsilon}, {"d", t.dim()}, {"N", t.fit_rows}};
  std::ofstream out(dir / "whitening.json");
  if (!out) throw IoError("cannot write " + (dir / "whitening.json").string());
  out << meta.dump(2) << '\n';
}

WhiteningTransform load_whitening(const std::filesystem::path& dir) {
  std::ifstream in(dir / "whitening.json");
  if (!in) throw IoError("cannot open " + (dir / "whitening.json").string());
  nlohmann::json meta;
  in >> meta;
  WhiteningTransform t;
  const TensorD mean = tbf::load_as<double>(dir / "mean.tbf");
  const TensorD w = tbf::load_as<double>(dir / "matrix.tbf");
  t.mean = mean.storage();
  t.matrix = Matrix(mean.size(), mean.size());
  if (w.size() != t.matrix.data.size()) throw IoError("whitening matrix has the wrong size");
  t.matrix.data = w.storage();
  t.epsilon = meta.at("epsilon").get<double>();
  t.fit_rows = meta.at("N").get<std::size_t>();
  return t;
}

}  // namespace gcamo
