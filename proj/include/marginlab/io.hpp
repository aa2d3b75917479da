#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "marginlab/eval.hpp"
#include "marginlab/model.hpp"
#include "marginlab/noisegen.hpp"
#include "marginlab/trainer.hpp"

namespace marginlab {

// All files are plain text. Floating-point values are printed with %.17g so
// every round trip is bit-exact. Writers go through a temp file plus rename,
// so a crash never leaves a half-written artifact.

// Dataset: "# marginlab dataset classes=<n> dim=<D>" then one sample per
// line: label followed by D coordinates.
void save_dataset(const NoisyDataset& data, const std::filesystem::path& path);
NoisyDataset load_dataset(const std::filesystem::path& path);

// Raw input matrix (the distractor pool): like a dataset but without labels.
void save_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path);
Eigen::MatrixXd load_matrix(const std::filesystem::path& path);

// Ledger: "# marginlab ledger entries=<k>" then one entry per line:
// "<index> <closed|open> <original_label> <assigned_label>"
// (original_label is -1 for open-set entries).
void save_ledger(const NoiseLedger& ledger, const std::filesystem::path& path);
NoiseLedger load_ledger(const std::filesystem::path& path);

// Checkpoint: "marginlab checkpoint 1", then one "tensor <name> <rows>
// <cols>" header per parameter tensor followed by its rows.
void save_checkpoint(const EmbeddingModel& model,
                     const std::filesystem::path& path);
EmbeddingModel load_checkpoint(const std::filesystem::path& path);

// Metrics CSV:
// epoch,iter,loss,lr,detected,correct_corrections,wrong_corrections,hard_count
void save_metrics_csv(const MetricsLog& log, const std::filesystem::path& path);
MetricsLog load_metrics_csv(const std::filesystem::path& path,
                            bool ledger_attached);

// Detection curve CSV: epoch,detected,correct,wrong,precision,recall
void save_detection_csv(const DetectionCurve& curve,
                        const std::filesystem::path& path);

struct ComparisonRow {
  std::string run;
  std::string head;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double best_threshold = 0.0;
};

// Comparison CSV: run,head,seed,accuracy,best_threshold
void save_comparison_csv(const std::vector<ComparisonRow>& rows,
                         const std::filesystem::path& path);

struct AggregateRow {
  std::string head;
  int runs = 0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample standard deviation
};

// Aggregate CSV: head,runs,mean_accuracy,std_accuracy
void save_aggregate_csv(const std::vector<AggregateRow>& rows,
                        const std::filesystem::path& path);

std::string format_double(double value);  // %.17g

// Writes content to path atomically (temp file + rename).
void atomic_write(const std::filesystem::path& path,
                  const std::string& content);

}  // namespace marginlab
