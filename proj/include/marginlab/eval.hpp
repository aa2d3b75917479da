#pragma once

#include <Eigen/Core>
#include <vector>

#include "marginlab/model.hpp"
#include "marginlab/noisegen.hpp"
#include "marginlab/trainer.hpp"

namespace marginlab {

struct VerificationResult {
  double best_threshold = 0.0;
  double accuracy = 0.0;
  double genuine_mean_cos = 0.0;
  double impostor_mean_cos = 0.0;
};

// Best-accuracy threshold over a grid of step 0.001 on [-1, 1]; a pair is
// accepted as genuine when its cosine >= threshold. Lowest threshold wins
// ties.
VerificationResult sweep_threshold(const std::vector<double>& genuine,
                                   const std::vector<double>& impostor);

// Embeds both sides of each pair with the trained model, takes cosine
// similarity, and sweeps the decision threshold.
VerificationResult verification_accuracy(
    const EmbeddingModel& model, const std::vector<VerificationPair>& pairs,
    const NoisyDataset& holdout);

struct DetectionPoint {
  int epoch = 0;
  int detected = 0;
  int correct = 0;
  int wrong = 0;
  double precision = 0.0;  // correct / max(detected, 1)
  double recall = 0.0;     // correct / ledger closed-set count
};

using DetectionCurve = std::vector<DetectionPoint>;

// Per-epoch aggregation of the correction counters against the ledger.
DetectionCurve detection_curve(const MetricsLog& log,
                               const NoiseLedger& ledger);

struct CorrectionOracleResult {
  double fraction_recovered = 0.0;  // flips whose correction hit the original
  int detections = 0;
  int false_positives = 0;  // clean samples that triggered at all
};

// Runs correction_check against frozen ground-truth centers on a flipped
// dataset. With zero-spread samples and well separated centers this must
// recover every flip and flag nothing else.
CorrectionOracleResult oracle_correction_test(const Eigen::MatrixXd& centers,
                                              const NoisyDataset& flipped,
                                              const NoiseLedger& ledger,
                                              double margin);

}  // namespace marginlab
