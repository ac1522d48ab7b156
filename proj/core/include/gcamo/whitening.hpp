#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gcamo/features.hpp"

namespace gcamo {

/// y -> W (y - mean), fitted on control features.
struct WhiteningTransform {
  std::vector<double> mean;  // [d]
  Matrix matrix;             // [d,d], symmetric positive definite
  double epsilon = 0.0;      // eigenvalue floor that was applied
  std::size_t fit_rows = 0;

  std::size_t dim() const { return mean.size(); }
};

inline constexpr double kRelativeEigenFloor = 1e-6;
inline constexpr double kAbsoluteEigenFloor = 1e-12;

/// Centres the rows, forms the biased covariance (1/N) X^T X, floors its
/// eigenvalues at 1e-6 * lambda_max (1e-12 when lambda_max is 0), and sets
/// W = Q diag(lambda^-1/2) Q^T.
WhiteningTransform fit_whitening(const Matrix& controls);

/// Maps every row through W (y - mean); treated rows use the control mean.
Matrix apply_whitening(const WhiteningTransform& t, const Matrix& features);

/// One transform per group value (e.g. well or site), each fitted on that
/// group's controls and applied to that group's rows.
FeatureMatrix whiten_by_group(const FeatureMatrix& features, int control_label,
                              const std::vector<std::string>& group_keys);

/// mean.tbf + matrix.tbf (f64) and whitening.json with epsilon, d, N.
void save_whitening(const WhiteningTransform& t, const std::filesystem::path& dir);
WhiteningTransform load_whitening(const std::filesystem::path& dir);

}  // namespace gcamo
