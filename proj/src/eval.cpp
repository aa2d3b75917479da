#include "marginlab/eval.hpp"

#include <algorithm>
#include <cmath>

#include "marginlab/heads.hpp"
#include "marginlab/hypersphere.hpp"

namespace marginlab {

VerificationResult sweep_threshold(const std::vector<double>& genuine,
                                   const std::vector<double>& impostor) {
  if (genuine.empty() || impostor.empty()) throw EmptyPairsError();

  const double total = static_cast<double>(genuine.size() + impostor.size());
  VerificationResult result;
  result.best_threshold = -1.0;
  result.accuracy = -1.0;
  for (int step = 0; step <= 2000; ++step) {
    const double threshold = -1.0 + 0.001 * step;
    int correct = 0;
    for (double s : genuine) {
      if (s >= threshold) ++correct;
    }
    for (double s : impostor) {
      if (s < threshold) ++correct;
    }
    const double accuracy = correct / total;
    if (accuracy > result.accuracy) {
      result.accuracy = accuracy;
      result.best_threshold = threshold;
    }
  }

  for (double s : genuine) result.genuine_mean_cos += s;
  result.genuine_mean_cos /= static_cast<double>(genuine.size());
  for (double s : impostor) result.impostor_mean_cos += s;
  result.impostor_mean_cos /= static_cast<double>(impostor.size());
  return result;
}

VerificationResult verification_accuracy(
    const EmbeddingModel& model, const std::vector<VerificationPair>& pairs,
    const NoisyDataset& holdout) {
  if (pairs.empty()) throw EmptyPairsError();
  const Eigen::MatrixXd embeddings =
      normalize_rows(model.embed(holdout.inputs));
  std::vector<double> genuine;
  std::vector<double> impostor;
  for (const VerificationPair& pair : pairs) {
    const double cos = embeddings.row(pair.a).dot(embeddings.row(pair.b));
    (pair.same_identity ? genuine : impostor).push_back(cos);
  }
  return sweep_threshold(genuine, impostor);
}

DetectionCurve detection_curve(const MetricsLog& log,
                               const NoiseLedger& ledger) {
  if (!log.ledger_attached) throw LedgerMissingError();
  const int closed_total = ledger.closed_count();

  DetectionCurve curve;
  curve.reserve(log.epochs.size());
  for (const EpochRow& row : log.epochs) {
    DetectionPoint point;
    point.epoch = row.epoch;
    point.detected = row.detected;
    point.correct = row.correct_corrections;
    point.wrong = row.wrong_corrections;
    point.precision =
        static_cast<double>(point.correct) / std::max(point.detected, 1);
    point.recall = closed_total > 0
                       ? static_cast<double>(point.correct) / closed_total
                       : 0.0;
    curve.push_back(point);
  }
  return curve;
}

CorrectionOracleResult oracle_correction_test(const Eigen::MatrixXd& centers,
                                              const NoisyDataset& flipped,
                                              const NoiseLedger& ledger,
                                              double margin) {
  const Eigen::MatrixXd cosines = cosine_matrix(
      normalize_rows(flipped.inputs), normalize_rows(centers));

  CorrectionOracleResult result;
  int recovered = 0;
  for (int i = 0; i < flipped.size(); ++i) {
    const auto correction =
        correction_check(cosines.row(i), flipped.labels[i], margin);
    const NoiseEntry* entry = ledger.find(i);
    const bool is_flip = entry && entry->kind == NoiseKind::ClosedSet;
    if (correction) {
      ++result.detections;
      if (is_flip && *correction == entry->original_label) {
        ++recovered;
      } else if (!is_flip) {
        ++result.false_positives;
      }
    }
  }
  const int flips = ledger.closed_count();
  result.fraction_recovered =
      flips > 0 ? static_cast<double>(recovered) / flips : 1.0;
  return result;
}

}  // namespace marginlab
