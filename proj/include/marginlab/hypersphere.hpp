#pragma once

#include <Eigen/Core>

#include "marginlab/errors.hpp"

namespace marginlab {

// Cosine rows are clamped to [-1 + kCosineEps, 1 - kCosineEps] so that a
// feature sitting exactly on a class center cannot reach the arccos poles,
// where the angular gradient diverges.
inline constexpr double kCosineEps = 1e-7;

// A vector with unit Euclidean norm (checked to 1e-9 on construction).
class UnitVector {
 public:
  explicit UnitVector(Eigen::VectorXd coords);
  const Eigen::VectorXd& coords() const { return coords_; }
  Eigen::Index dimension() const { return coords_.size(); }

 private:
  Eigen::VectorXd coords_;
};

// Projects v onto the unit sphere. Throws ZeroVectorError when |v| <= 1e-12.
UnitVector normalize(const Eigen::VectorXd& v);

// Row-wise normalization for feature/center matrices. Same zero-norm rule.
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m);

// Pairwise cosines between unit-norm features (N x d) and unit-norm centers
// (n x d); entry (i, j) = <x_i, w_j>, clamped away from +-1 by kCosineEps.
Eigen::MatrixXd cosine_matrix(const Eigen::MatrixXd& features,
                              const Eigen::MatrixXd& centers);

// cos(theta + margin) for theta = arccos(cos_theta). The input is clamped to
// [-1, 1] only; pole avoidance is the caller's concern (cosine_matrix already
// keeps pipeline values away from the poles).
double angular_add(double cos_theta, double margin);

// d/d(cos_theta) of angular_add = sin(theta + margin) / sin(theta).
// Requires |cos_theta| < 1.
double angular_add_slope(double cos_theta, double margin);

}  // namespace marginlab
