#include "marginlab/hypersphere.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace marginlab {

namespace {
constexpr double kZeroNorm = 1e-12;
}

UnitVector::UnitVector(Eigen::VectorXd coords) : coords_(std::move(coords)) {
  const double n = coords_.norm();
  if (std::abs(n - 1.0) > 1e-9) {
    throw Error("UnitVector constructed from a non-unit vector");
  }
}

UnitVector normalize(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (n <= kZeroNorm) throw ZeroVectorError();
  return UnitVector(v / n);
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n <= kZeroNorm) throw ZeroVectorError();
    out.row(i) = m.row(i) / n;
  }
  return out;
}

Eigen::MatrixXd cosine_matrix(const Eigen::MatrixXd& features,
                              const Eigen::MatrixXd& centers) {
  if (features.cols() != centers.cols()) {
    throw DimensionMismatchError("feature dimension " +
                                 std::to_string(features.cols()) +
                                 " != center dimension " +
                                 std::to_string(centers.cols()));
  }
  Eigen::MatrixXd cos = features * centers.transpose();
  return cos.cwiseMin(1.0 - kCosineEps).cwiseMax(-1.0 + kCosineEps);
}

double angular_add(double cos_theta, double margin) {
  const double c = std::clamp(cos_theta, -1.0, 1.0);
  if (margin == 0.0) return c;  // exact: avoids the acos/cos round trip
  return std::cos(std::acos(c) + margin);
}

double angular_add_slope(double cos_theta, double margin) {
  const double c = std::clamp(cos_theta, -1.0, 1.0);
  const double sin_theta = std::sqrt(1.0 - c * c);
  // sin(theta + m) / sin(theta), expanded to avoid a second arccos.
  return std::cos(margin) + std::sin(margin) * c / sin_theta;
}

}  // namespace marginlab
