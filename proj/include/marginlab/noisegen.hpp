#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "marginlab/errors.hpp"

namespace marginlab {

// Synthetic-dataset parameters. Classes are unit-sphere directions; samples
// are the class direction plus isotropic Gaussian noise, re-normalized. The
// per-coordinate noise stddev is 1 / (concentration * sqrt(input_dim)), so
// the expected perturbation norm is 1/concentration regardless of dimension
// (larger concentration = tighter clusters).
struct DatasetSpec {
  int num_classes = 10;
  int samples_per_class = 100;
  int input_dim = 32;
  double concentration = 4.0;
  int num_distractor_classes = 0;  // open-set noise source
  int num_holdout_classes = 0;     // verification identities
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidSpecError
};

struct NoisyDataset {
  Eigen::MatrixXd inputs;  // N x D, unit rows
  std::vector<int> labels;
  int num_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }
};

enum class NoiseKind { ClosedSet, OpenSet };

struct NoiseEntry {
  int index = 0;
  NoiseKind kind = NoiseKind::ClosedSet;
  int original_label = -1;  // ClosedSet only; -1 for OpenSet
  int assigned_label = 0;
};

struct NoiseLedger {
  std::vector<NoiseEntry> entries;

  int closed_count() const;
  std::vector<int> corrupted_indices() const;
  const NoiseEntry* find(int index) const;
};

struct GeneratedData {
  NoisyDataset train;
  NoisyDataset holdout;
  Eigen::MatrixXd distractors;  // pool of open-set replacement inputs
};

GeneratedData generate(const DatasetSpec& spec);

// Flips round(ratio * N) labels, chosen uniformly without replacement, each
// to a uniformly random different class.
std::pair<NoisyDataset, NoiseLedger> inject_closed_noise(
    const NoisyDataset& data, double ratio, std::uint64_t seed);

// Replaces round(ratio * N) sample inputs with distinct rows drawn from the
// distractor pool; labels are kept. `exclude` lists indices that must not be
// touched (so closed- and open-set corruption stay disjoint).
std::pair<NoisyDataset, NoiseLedger> inject_open_noise(
    const NoisyDataset& data, double ratio, const Eigen::MatrixXd& distractors,
    std::uint64_t seed, const std::vector<int>& exclude = {});

struct VerificationPair {
  int a = 0;
  int b = 0;
  bool same_identity = false;
};

// num_pairs genuine followed by num_pairs impostor pairs, uniformly sampled.
std::vector<VerificationPair> make_verification_pairs(
    const NoisyDataset& holdout, int num_pairs, std::uint64_t seed);

}  // namespace marginlab
