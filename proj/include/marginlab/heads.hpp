#pragma once

#include <Eigen/Core>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "marginlab/errors.hpp"

namespace marginlab {

enum class HeadKind {
  NormFace,
  ArcFace,
  CosFace,
  Focal,
  MVArc,
  Curricular,
  BoundaryF1,
  BoundaryFace,
};

const char* head_name(HeadKind kind);
HeadKind head_from_name(const std::string& name);

// Hyperparameters (and, for Curricular, the EMA state) of one loss head.
//
// `margin` is an additive angle in radians for the angular heads and a cosine
// offset for CosFace. `t` is the hard-negative modulator: a fixed
// hyperparameter for MVArc, the exponential-moving-average statistic for
// Curricular (owned by the caller, passed in and returned updated).
struct HeadConfig {
  HeadKind kind = HeadKind::ArcFace;
  double scale = 32.0;
  double margin = 0.5;
  double t = 0.0;
  double lambda = std::numbers::pi;
  double focal_gamma = 2.0;
  bool correction_enabled = false;
  double curricular_alpha = 0.01;

  void validate(int num_classes = 2) const;  // throws InvalidHeadConfigError
};

// Head defaults: MVArc gets t = 0.2, BoundaryF1/BoundaryFace enable label
// correction, everything else is the struct defaults.
HeadConfig default_head(HeadKind kind);

// Per-sample outcome of a forward pass.
struct SampleRecord {
  int original_label = 0;
  int effective_label = 0;     // after correction, if any
  bool corrected = false;
  bool hard = false;           // regularizer > 0
  double regularizer = 0.0;    // max(0, max negative cosine - positive transform)
  double loss = 0.0;
  Eigen::RowVectorXd cosine_row;
};

struct ForwardBatch {
  double mean_loss = 0.0;
  std::vector<SampleRecord> records;
  double t_used = 0.0;     // Curricular EMA consumed by this batch
  double t_updated = 0.0;  // Curricular EMA after this batch
};

// Gradients of the mean batch loss w.r.t. the *pre-normalization* feature and
// center matrices.
struct HeadGradients {
  Eigen::MatrixXd features;  // N x d
  Eigen::MatrixXd centers;   // n x d
};

// Positive-class logit transform. Identity for NormFace and Focal,
// cos(theta) - m for CosFace, cos(theta + m) for the angular-margin heads.
double positive_transform(const HeadConfig& config, double cos_pos);

// Negative-class logit transform g. Mining heads reshape a negative cosine
// only when it beats the transformed positive (positive_value - cos_neg < 0):
// MVArc adds t, Curricular multiplies by (t + cos_neg). Everyone else passes
// the cosine through.
double negative_transform(const HeadConfig& config, double cos_neg,
                          double positive_value);

// Label self-correction: returns the nearest negative class k* (argmax of
// cos(theta_k + m), lowest index on ties) when cos(theta_k* + m) strictly
// exceeds the positive cosine, nullopt otherwise.
std::optional<int> correction_check(const Eigen::RowVectorXd& row, int label,
                                    double margin);

// f = max(0, max_{j != y} cos(theta_j) - cos(theta_y + m)). A sample is hard
// iff f > 0, i.e. it falls in the margin region between its own class and the
// nearest negative class.
double boundary_regularizer(const Eigen::RowVectorXd& row, int label,
                            double margin);

// (1 - p)^gamma.
double focal_indicator(double p, double focal_gamma);

// Forward pass over a batch of cosine rows. Applies label correction first
// (when enabled), then builds logits from the positive/negative transforms,
// takes softmax cross-entropy, and for BoundaryFace adds lambda * f.
ForwardBatch forward_loss(const HeadConfig& config,
                          const Eigen::MatrixXd& cosines,
                          const std::vector<int>& labels);

// Analytic gradients matching forward_loss. `features` and `centers` are the
// raw (not yet normalized) matrices the cosines were computed from; the chain
// rule runs through the l2 normalization of both.
HeadGradients backward(const HeadConfig& config, const ForwardBatch& batch,
                       const Eigen::MatrixXd& features,
                       const Eigen::MatrixXd& centers);

namespace detail {
// Numerically careful -log softmax(z)[target]: log1p over the off-max terms
// keeps tiny losses at full relative precision.
double cross_entropy(const Eigen::RowVectorXd& logits, int target);
Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits);
}  // namespace detail

}  // namespace marginlab
