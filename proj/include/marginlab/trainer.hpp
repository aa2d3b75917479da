#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "marginlab/heads.hpp"
#include "marginlab/model.hpp"
#include "marginlab/noisegen.hpp"

namespace marginlab {

struct TrainConfig {
  HeadConfig head;
  int epochs = 30;
  int warmup_epochs = -1;  // -1: round(7/30 * epochs)
  int batch_size = 64;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> lr_milestones;  // empty: {6, 12, 19} scaled to epochs
  std::uint64_t seed = 0;
  // During the warm-up epochs the head falls back to its margin-based core:
  // correction off and the mining machinery (lambda * f, the hard-negative
  // transform, the focal weight) disabled. Both switches can be kept on past
  // warm-up for experimentation.
  bool warmup_disable_correction = true;
  bool warmup_disable_mining = true;

  void validate() const;
};

// Milestones scale proportionally when epochs != 30 (nearest integer).
std::vector<int> effective_milestones(const TrainConfig& config);
int effective_warmup(const TrainConfig& config);

// Step-decay schedule: lr / 10 per milestone already reached.
double lr_at(const TrainConfig& config, int epoch);

// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
void sgd_step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
              Eigen::MatrixXd& velocity, double lr, double momentum,
              double weight_decay);

struct IterationRow {
  int epoch = 0;
  int iteration = 0;  // global iteration counter
  double loss = 0.0;
  double lr = 0.0;
  int detected = 0;             // corrections triggered
  int correct_corrections = 0;  // effective label == ledger original
  int wrong_corrections = 0;
  int hard_count = 0;
};

struct EpochRow {
  int epoch = 0;
  double mean_loss = 0.0;
  int detected = 0;
  int correct_corrections = 0;
  int wrong_corrections = 0;
  int hard_count = 0;
};

struct MetricsLog {
  std::vector<IterationRow> iterations;
  std::vector<EpochRow> epochs;
  bool ledger_attached = false;
};

struct TrainResult {
  EmbeddingModel model;
  MetricsLog log;
  double curricular_t = 0.0;
};

// Algorithm: per epoch, a seeded shuffle into mini-batches; per batch, model
// forward, head forward/backward, backprop through the embedding stack, one
// SGD step on all parameters (centers included). Warm-up epochs run the
// degraded head (see TrainConfig). Bitwise deterministic for a fixed config.
TrainResult train(EmbeddingModel model, const NoisyDataset& data,
                  const NoiseLedger* ledger, const TrainConfig& config);

// The head `config` degraded to its warm-up form.
HeadConfig warmup_head(const HeadConfig& config, bool disable_correction,
                       bool disable_mining);

// Central-difference audit of the full analytic gradient (every model
// parameter) on one batch. Returns max |analytic - numeric| /
// max(|numeric|, 1e-8). `corrupt` offsets the first analytic entry and
// exists so the check can be shown to fail.
double finite_diff_audit(const EmbeddingModel& model,
                         const Eigen::MatrixXd& inputs,
                         const std::vector<int>& labels,
                         const HeadConfig& head, double corrupt = 0.0);

}  // namespace marginlab
