#include "marginlab/heads.hpp"

#include <algorithm>
#include <cmath>

#include "marginlab/hypersphere.hpp"

namespace marginlab {

const char* head_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::NormFace: return "normface";
    case HeadKind::ArcFace: return "arcface";
    case HeadKind::CosFace: return "cosface";
    case HeadKind::Focal: return "focal";
    case HeadKind::MVArc: return "mvarc";
    case HeadKind::Curricular: return "curricular";
    case HeadKind::BoundaryF1: return "boundaryf1";
    case HeadKind::BoundaryFace: return "boundaryface";
  }
  return "unknown";
}

HeadKind head_from_name(const std::string& name) {
  for (HeadKind k : {HeadKind::NormFace, HeadKind::ArcFace, HeadKind::CosFace,
                     HeadKind::Focal, HeadKind::MVArc, HeadKind::Curricular,
                     HeadKind::BoundaryF1, HeadKind::BoundaryFace}) {
    if (name == head_name(k)) return k;
  }
  throw InvalidHeadConfigError("unknown head: " + name);
}

namespace {

bool is_angular(HeadKind kind) {
  return kind != HeadKind::NormFace && kind != HeadKind::CosFace &&
         kind != HeadKind::Focal;
}

bool allows_correction(HeadKind kind) {
  return kind == HeadKind::BoundaryF1 || kind == HeadKind::BoundaryFace;
}

}  // namespace

void HeadConfig::validate(int num_classes) const {
  if (!(scale > 0.0)) throw InvalidHeadConfigError("scale must be positive");
  if (!(margin >= 0.0)) throw InvalidHeadConfigError("margin must be >= 0");
  if (is_angular(kind) && margin > std::numbers::pi / 2.0) {
    throw InvalidHeadConfigError("angular margin must be <= pi/2");
  }
  if (!(lambda >= 0.0)) throw InvalidHeadConfigError("lambda must be >= 0");
  if (!(focal_gamma >= 0.0)) {
    throw InvalidHeadConfigError("focal_gamma must be >= 0");
  }
  if (correction_enabled && !allows_correction(kind)) {
    throw InvalidHeadConfigError(
        "label correction is only available for boundaryf1/boundaryface");
  }
  if (kind == HeadKind::Curricular && !std::isfinite(t)) {
    throw InvalidHeadStateError("curricular EMA state is not finite");
  }
  if (num_classes < 2) {
    throw InvalidHeadConfigError("need at least two classes");
  }
}

HeadConfig default_head(HeadKind kind) {
  HeadConfig config;
  config.kind = kind;
  if (kind == HeadKind::MVArc) config.t = 0.2;
  if (kind == HeadKind::BoundaryF1 || kind == HeadKind::BoundaryFace) {
    config.correction_enabled = true;
  }
  return config;
}

double positive_transform(const HeadConfig& config, double cos_pos) {
  switch (config.kind) {
    case HeadKind::NormFace:
    case HeadKind::Focal:
      return cos_pos;
    case HeadKind::CosFace:
      return cos_pos - config.margin;
    default:
      return angular_add(cos_pos, config.margin);
  }
}

double negative_transform(const HeadConfig& config, double cos_neg,
                          double positive_value) {
  const double n = positive_value - cos_neg;
  if (n >= 0.0) return cos_neg;
  switch (config.kind) {
    case HeadKind::MVArc:
      return cos_neg + config.t;
    case HeadKind::Curricular:
      return cos_neg * (config.t + cos_neg);
    default:
      return cos_neg;
  }
}

std::optional<int> correction_check(const Eigen::RowVectorXd& row, int label,
                                    double margin) {
  int best = -1;
  double best_value = 0.0;
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    if (static_cast<int>(k) == label) continue;
    const double value = angular_add(row[k], margin);
    if (best < 0 || value > best_value) {
      best = static_cast<int>(k);
      best_value = value;
    }
  }
  if (best >= 0 && best_value > row[label]) return best;
  return std::nullopt;
}

double boundary_regularizer(const Eigen::RowVectorXd& row, int label,
                            double margin) {
  double max_neg = -2.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (static_cast<int>(j) != label && row[j] > max_neg) max_neg = row[j];
  }
  return std::max(0.0, max_neg - angular_add(row[label], margin));
}

double focal_indicator(double p, double focal_gamma) {
  return std::pow(1.0 - p, focal_gamma);
}

namespace detail {

double cross_entropy(const Eigen::RowVectorXd& logits, int target) {
  Eigen::Index arg_max = 0;
  const double max = logits.maxCoeff(&arg_max);
  double rest = 0.0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (k != arg_max) rest += std::exp(logits[k] - max);
  }
  return std::log1p(rest) + (max - logits[target]);
}

Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& logits) {
  const double max = logits.maxCoeff();
  Eigen::RowVectorXd e = (logits.array() - max).exp();
  return e / e.sum();
}

}  // namespace detail

namespace {

// Index of the largest raw negative cosine (lowest index wins ties). This is
// the class whose boundary defines the regularizer.
int argmax_negative(const Eigen::RowVectorXd& row, int label) {
  int best = -1;
  double best_value = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (static_cast<int>(j) == label) continue;
    if (best < 0 || row[j] > best_value) {
      best = static_cast<int>(j);
      best_value = row[j];
    }
  }
  return best;
}

Eigen::RowVectorXd build_logits(const HeadConfig& config,
                                const Eigen::RowVectorXd& row, int label,
                                double positive_value) {
  Eigen::RowVectorXd logits(row.size());
  for (Eigen::Index j = 0; j < row.size(); ++j) {
    if (static_cast<int>(j) == label) {
      logits[j] = config.scale * positive_value;
    } else {
      logits[j] =
          config.scale * negative_transform(config, row[j], positive_value);
    }
  }
  return logits;
}

}  // namespace

ForwardBatch forward_loss(const HeadConfig& config,
                          const Eigen::MatrixXd& cosines,
                          const std::vector<int>& labels) {
  const Eigen::Index n_samples = cosines.rows();
  const Eigen::Index n_classes = cosines.cols();
  config.validate(static_cast<int>(n_classes));
  if (n_samples < 1) throw Error("forward_loss needs a non-empty batch");
  if (static_cast<Eigen::Index>(labels.size()) != n_samples) {
    throw DimensionMismatchError("labels/cosines row count mismatch");
  }

  ForwardBatch batch;
  batch.t_used = config.t;
  batch.records.resize(static_cast<std::size_t>(n_samples));

  double loss_sum = 0.0;
  double positive_cos_sum = 0.0;
  for (Eigen::Index i = 0; i < n_samples; ++i) {
    SampleRecord& rec = batch.records[static_cast<std::size_t>(i)];
    rec.cosine_row = cosines.row(i);
    rec.original_label = labels[static_cast<std::size_t>(i)];
    if (rec.original_label < 0 || rec.original_label >= n_classes) {
      throw Error("label out of range");
    }
    rec.effective_label = rec.original_label;
    if (config.correction_enabled) {
      if (auto k = correction_check(rec.cosine_row, rec.original_label,
                                    config.margin)) {
        rec.effective_label = *k;
        rec.corrected = true;
      }
    }
    const int y = rec.effective_label;
    const double positive_value = positive_transform(config, rec.cosine_row[y]);
    const Eigen::RowVectorXd logits =
        build_logits(config, rec.cosine_row, y, positive_value);
    const double ce = detail::cross_entropy(logits, y);

    const int j_star = argmax_negative(rec.cosine_row, y);
    rec.regularizer = std::max(0.0, rec.cosine_row[j_star] - positive_value);
    rec.hard = rec.regularizer > 0.0;

    double loss = ce;
    if (config.kind == HeadKind::Focal) {
      loss = focal_indicator(std::exp(-ce), config.focal_gamma) * ce;
    } else if (config.kind == HeadKind::BoundaryFace) {
      loss = ce + config.lambda * rec.regularizer;
    }
    rec.loss = loss;
    loss_sum += loss;
    positive_cos_sum += rec.cosine_row[y];
  }
  batch.mean_loss = loss_sum / static_cast<double>(n_samples);

  batch.t_updated = batch.t_used;
  if (config.kind == HeadKind::Curricular) {
    const double batch_mean = positive_cos_sum / static_cast<double>(n_samples);
    batch.t_updated = config.curricular_alpha * batch_mean +
                      (1.0 - config.curricular_alpha) * batch.t_used;
  }
  return batch;
}

namespace {

// d(loss_i)/d(logit_k). For Focal the indicator weight is part of the loss,
// so the product rule brings in a second term through p_y.
Eigen::RowVectorXd logit_gradient(const HeadConfig& config,
                                  const Eigen::RowVectorXd& logits, int y) {
  const Eigen::RowVectorXd p = detail::softmax(logits);
  Eigen::RowVectorXd g = p;
  g[y] -= 1.0;
  if (config.kind == HeadKind::Focal) {
    const double ce = detail::cross_entropy(logits, y);
    const double q = 1.0 - p[y];
    double weight = std::pow(q, config.focal_gamma);
    if (config.focal_gamma > 0.0 && q > 0.0) {
      weight += config.focal_gamma * std::pow(q, config.focal_gamma - 1.0) *
                p[y] * ce;
    }
    g *= weight;
  }
  return g;
}

}  // namespace

HeadGradients backward(const HeadConfig& config, const ForwardBatch& batch,
                       const Eigen::MatrixXd& features,
                       const Eigen::MatrixXd& centers) {
  const Eigen::Index n_samples = features.rows();
  const Eigen::Index n_classes = centers.rows();
  if (static_cast<std::size_t>(n_samples) != batch.records.size()) {
    throw DimensionMismatchError("records/features row count mismatch");
  }

  HeadConfig cfg = config;
  cfg.t = batch.t_used;  // Curricular: the EMA the forward pass consumed

  HeadGradients grads;
  grads.features = Eigen::MatrixXd::Zero(n_samples, features.cols());
  grads.centers = Eigen::MatrixXd::Zero(n_classes, centers.cols());

  Eigen::VectorXd center_norms(n_classes);
  Eigen::MatrixXd unit_centers(n_classes, centers.cols());
  for (Eigen::Index k = 0; k < n_classes; ++k) {
    center_norms[k] = centers.row(k).norm();
    if (center_norms[k] <= 1e-12) throw ZeroVectorError();
    unit_centers.row(k) = centers.row(k) / center_norms[k];
  }

  const double inv_n = 1.0 / static_cast<double>(n_samples);
  const double hi = 1.0 - kCosineEps;
  const double lo = -1.0 + kCosineEps;

  for (Eigen::Index i = 0; i < n_samples; ++i) {
    const SampleRecord& rec = batch.records[static_cast<std::size_t>(i)];
    const Eigen::RowVectorXd& row = rec.cosine_row;
    const int y = rec.effective_label;

    const double feature_norm = features.row(i).norm();
    if (feature_norm <= 1e-12) throw ZeroVectorError();
    const Eigen::RowVectorXd unit_feature = features.row(i) / feature_norm;

    const double positive_value = positive_transform(cfg, row[y]);
    const Eigen::RowVectorXd logits = build_logits(cfg, row, y, positive_value);
    Eigen::RowVectorXd dz = logit_gradient(cfg, logits, y);

    // dL/d(clamped cosine).
    Eigen::RowVectorXd dcos(row.size());
    double d_positive = cfg.scale * dz[y];
    if (cfg.kind == HeadKind::BoundaryFace && rec.hard) {
      d_positive -= cfg.lambda;  // f = max_neg - T, so dL/dT gains -lambda
    }
    const double positive_slope =
        is_angular(cfg.kind) ? angular_add_slope(row[y], cfg.margin) : 1.0;
    dcos[y] = d_positive * positive_slope;

    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (static_cast<int>(j) == y) continue;
      double slope = 1.0;
      if (cfg.kind == HeadKind::Curricular &&
          positive_value - row[j] < 0.0) {
        slope = cfg.t + 2.0 * row[j];
      }
      dcos[j] = cfg.scale * dz[j] * slope;
    }
    if (cfg.kind == HeadKind::BoundaryFace && rec.hard) {
      dcos[argmax_negative(row, y)] += cfg.lambda;
    }

    // Cosines that were clamped carry no gradient.
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (row[j] >= hi || row[j] <= lo) dcos[j] = 0.0;
    }
    dcos *= inv_n;

    // Chain through c_k = <x/|x|, w_k/|w_k|>.
    grads.features.row(i) =
        (dcos * unit_centers - dcos.dot(row) * unit_feature) / feature_norm;
    for (Eigen::Index k = 0; k < n_classes; ++k) {
      if (dcos[k] == 0.0) continue;
      grads.centers.row(k) +=
          dcos[k] * (unit_feature - row[k] * unit_centers.row(k)) /
          center_norms[k];
    }
  }
  return grads;
}

}  // namespace marginlab
