#include "marginlab/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "marginlab/hypersphere.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

void TrainConfig::validate() const {
  head.validate();
  if (epochs < 1) throw Error("epochs must be >= 1");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(lr > 0.0)) throw Error("lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw Error("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw Error("weight_decay must be >= 0");
  const int warmup = effective_warmup(*this);
  if (warmup < 0 || warmup >= epochs) {
    throw Error("warmup_epochs must be in [0, epochs)");
  }
  const auto milestones = effective_milestones(*this);
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) {
      throw Error("lr_milestones must be strictly increasing");
    }
  }
}

std::vector<int> effective_milestones(const TrainConfig& config) {
  if (!config.lr_milestones.empty()) return config.lr_milestones;
  std::vector<int> scaled;
  for (int m : {6, 12, 19}) {
    const int e = static_cast<int>(
        std::llround(static_cast<double>(m) * config.epochs / 30.0));
    if (e >= 1 && e < config.epochs &&
        (scaled.empty() || e > scaled.back())) {
      scaled.push_back(e);
    }
  }
  return scaled;
}

int effective_warmup(const TrainConfig& config) {
  if (config.warmup_epochs >= 0) return config.warmup_epochs;
  return static_cast<int>(
      std::llround(7.0 * config.epochs / 30.0));
}

double lr_at(const TrainConfig& config, int epoch) {
  int passed = 0;
  for (int m : effective_milestones(config)) {
    if (m <= epoch) ++passed;
  }
  return config.lr * std::pow(10.0, -passed);
}

void sgd_step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
              Eigen::MatrixXd& velocity, double lr, double momentum,
              double weight_decay) {
  velocity = momentum * velocity + grad + weight_decay * param;
  param -= lr * velocity;
}

HeadConfig warmup_head(const HeadConfig& config, bool disable_correction,
                       bool disable_mining) {
  HeadConfig warm = config;
  if (disable_correction) warm.correction_enabled = false;
  if (disable_mining) {
    warm.lambda = 0.0;
    switch (warm.kind) {
      case HeadKind::BoundaryFace:
      case HeadKind::BoundaryF1:
      case HeadKind::MVArc:
      case HeadKind::Curricular:
        warm.kind = HeadKind::ArcFace;
        break;
      case HeadKind::Focal:
        warm.kind = HeadKind::NormFace;
        break;
      default:
        break;
    }
  }
  return warm;
}

namespace {

struct Velocities {
  Eigen::MatrixXd hidden_weight;
  Eigen::MatrixXd hidden_bias;
  Eigen::MatrixXd output_weight;
  Eigen::MatrixXd output_bias;
  Eigen::MatrixXd centers;

  explicit Velocities(const EmbeddingModel& model)
      : hidden_weight(Eigen::MatrixXd::Zero(model.hidden_weight.rows(),
                                            model.hidden_weight.cols())),
        hidden_bias(Eigen::MatrixXd::Zero(model.hidden_bias.size(), 1)),
        output_weight(Eigen::MatrixXd::Zero(model.output_weight.rows(),
                                            model.output_weight.cols())),
        output_bias(Eigen::MatrixXd::Zero(model.output_bias.size(), 1)),
        centers(Eigen::MatrixXd::Zero(model.centers.rows(),
                                      model.centers.cols())) {}
};

}  // namespace

TrainResult train(EmbeddingModel model, const NoisyDataset& data,
                  const NoiseLedger* ledger, const TrainConfig& config) {
  config.validate();
  if (data.size() < 1) throw Error("cannot train on an empty dataset");
  if (model.num_classes() != data.num_classes) {
    throw DimensionMismatchError("model/dataset class count mismatch");
  }

  const int warmup = effective_warmup(config);
  Velocities vel(model);
  Rng shuffle_rng(derive_seed(config.seed, 1));

  MetricsLog log;
  log.ledger_attached = ledger != nullptr;

  double curricular_t = config.head.t;
  int iteration = 0;
  std::vector<int> order(data.size());
  for (int i = 0; i < data.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    const bool warm = epoch < warmup;
    HeadConfig head = warm ? warmup_head(config.head,
                                         config.warmup_disable_correction,
                                         config.warmup_disable_mining)
                           : config.head;

    shuffle_rng.shuffle(order);
    EpochRow epoch_row;
    epoch_row.epoch = epoch;
    double epoch_loss = 0.0;
    int batches = 0;

    for (int start = 0; start < data.size(); start += config.batch_size) {
      const int count = std::min(config.batch_size, data.size() - start);
      Eigen::MatrixXd inputs(count, data.inputs.cols());
      std::vector<int> labels(count);
      for (int j = 0; j < count; ++j) {
        inputs.row(j) = data.inputs.row(order[start + j]);
        labels[j] = data.labels[order[start + j]];
      }

      if (head.kind == HeadKind::Curricular) head.t = curricular_t;
      ModelActivations acts = model_forward(model, inputs);
      const Eigen::MatrixXd cosines = cosine_matrix(
          normalize_rows(acts.embeddings), normalize_rows(model.centers));
      ForwardBatch fwd = forward_loss(head, cosines, labels);
      HeadGradients head_grads =
          backward(head, fwd, acts.embeddings, model.centers);
      ModelGradients model_grads =
          model_backward(model, acts, inputs, head_grads.features);

      if (model.has_hidden()) {
        sgd_step(model.hidden_weight, model_grads.hidden_weight,
                 vel.hidden_weight, lr, config.momentum, config.weight_decay);
        sgd_step(model.hidden_bias, model_grads.hidden_bias, vel.hidden_bias,
                 lr, config.momentum, config.weight_decay);
      }
      sgd_step(model.output_weight, model_grads.output_weight,
               vel.output_weight, lr, config.momentum, config.weight_decay);
      sgd_step(model.output_bias, model_grads.output_bias, vel.output_bias,
               lr, config.momentum, config.weight_decay);
      sgd_step(model.centers, head_grads.centers, vel.centers, lr,
               config.momentum, config.weight_decay);

      if (head.kind == HeadKind::Curricular) curricular_t = fwd.t_updated;

      IterationRow row;
      row.epoch = epoch;
      row.iteration = iteration++;
      row.loss = fwd.mean_loss;
      row.lr = lr;
      for (int j = 0; j < count; ++j) {
        const SampleRecord& rec = fwd.records[j];
        if (rec.hard) ++row.hard_count;
        if (!rec.corrected) continue;
        ++row.detected;
        const NoiseEntry* entry =
            ledger ? ledger->find(order[start + j]) : nullptr;
        if (entry && entry->kind == NoiseKind::ClosedSet &&
            entry->original_label == rec.effective_label) {
          ++row.correct_corrections;
        } else {
          ++row.wrong_corrections;
        }
      }
      epoch_row.detected += row.detected;
      epoch_row.correct_corrections += row.correct_corrections;
      epoch_row.wrong_corrections += row.wrong_corrections;
      epoch_row.hard_count += row.hard_count;
      epoch_loss += fwd.mean_loss;
      ++batches;
      log.iterations.push_back(row);
    }
    epoch_row.mean_loss = epoch_loss / batches;
    log.epochs.push_back(epoch_row);
  }

  return {std::move(model), std::move(log), curricular_t};
}

namespace {

double pipeline_loss(const EmbeddingModel& model, const Eigen::MatrixXd& inputs,
                     const std::vector<int>& labels, const HeadConfig& head) {
  const Eigen::MatrixXd embeddings = model.embed(inputs);
  const Eigen::MatrixXd cosines = cosine_matrix(normalize_rows(embeddings),
                                                normalize_rows(model.centers));
  return forward_loss(head, cosines, labels).mean_loss;
}

}  // namespace

double finite_diff_audit(const EmbeddingModel& model,
                         const Eigen::MatrixXd& inputs,
                         const std::vector<int>& labels,
                         const HeadConfig& head, double corrupt) {
  constexpr double kStep = 1e-6;

  // Analytic gradients.
  ModelActivations acts = model_forward(model, inputs);
  const Eigen::MatrixXd cosines = cosine_matrix(
      normalize_rows(acts.embeddings), normalize_rows(model.centers));
  ForwardBatch fwd = forward_loss(head, cosines, labels);
  HeadGradients head_grads = backward(head, fwd, acts.embeddings, model.centers);
  ModelGradients model_grads =
      model_backward(model, acts, inputs, head_grads.features);

  EmbeddingModel probe = model;

  struct Entry {
    Eigen::MatrixXd* param;
    const Eigen::MatrixXd* grad;
  };
  Eigen::MatrixXd hidden_bias_grad = model_grads.hidden_bias;
  Eigen::MatrixXd output_bias_grad = model_grads.output_bias;

  std::vector<Entry> entries;
  if (probe.has_hidden()) {
    entries.push_back({&probe.hidden_weight, &model_grads.hidden_weight});
  }
  entries.push_back({&probe.output_weight, &model_grads.output_weight});
  entries.push_back({&probe.centers, &head_grads.centers});

  double max_error = 0.0;
  bool first = true;
  auto check = [&](double analytic, double numeric) {
    if (first) {
      analytic += corrupt;
      first = false;
    }
    const double err =
        std::abs(analytic - numeric) / std::max(std::abs(numeric), 1e-8);
    max_error = std::max(max_error, err);
  };

  for (const Entry& entry : entries) {
    Eigen::MatrixXd& param = *entry.param;
    for (Eigen::Index idx = 0; idx < param.size(); ++idx) {
      const double saved = param.data()[idx];
      param.data()[idx] = saved + kStep;
      const double up = pipeline_loss(probe, inputs, labels, head);
      param.data()[idx] = saved - kStep;
      const double down = pipeline_loss(probe, inputs, labels, head);
      param.data()[idx] = saved;
      check(entry.grad->data()[idx], (up - down) / (2.0 * kStep));
    }
  }

  // Bias vectors, same procedure.
  auto check_bias = [&](Eigen::VectorXd& param, const Eigen::MatrixXd& grad) {
    for (Eigen::Index idx = 0; idx < param.size(); ++idx) {
      const double saved = param[idx];
      param[idx] = saved + kStep;
      const double up = pipeline_loss(probe, inputs, labels, head);
      param[idx] = saved - kStep;
      const double down = pipeline_loss(probe, inputs, labels, head);
      param[idx] = saved;
      check(grad.data()[idx], (up - down) / (2.0 * kStep));
    }
  };
  if (probe.has_hidden()) check_bias(probe.hidden_bias, hidden_bias_grad);
  check_bias(probe.output_bias, output_bias_grad);

  return max_error;
}

}  // namespace marginlab
