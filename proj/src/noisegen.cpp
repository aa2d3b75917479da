#include "marginlab/noisegen.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "marginlab/hypersphere.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

void DatasetSpec::validate() const {
  if (num_classes < 1) throw InvalidSpecError("num_classes must be >= 1");
  if (samples_per_class < 1) {
    throw InvalidSpecError("samples_per_class must be >= 1");
  }
  if (input_dim < 1) throw InvalidSpecError("input_dim must be >= 1");
  if (!(concentration > 0.0)) {
    throw InvalidSpecError("concentration must be positive");
  }
  if (num_distractor_classes < 0 || num_holdout_classes < 0) {
    throw InvalidSpecError("class counts must be non-negative");
  }
}

int NoiseLedger::closed_count() const {
  return static_cast<int>(
      std::count_if(entries.begin(), entries.end(), [](const NoiseEntry& e) {
        return e.kind == NoiseKind::ClosedSet;
      }));
}

std::vector<int> NoiseLedger::corrupted_indices() const {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const NoiseEntry& e : entries) out.push_back(e.index);
  return out;
}

const NoiseEntry* NoiseLedger::find(int index) const {
  for (const NoiseEntry& e : entries) {
    if (e.index == index) return &e;
  }
  return nullptr;
}

namespace {

Eigen::RowVectorXd random_direction(int dim, Rng& rng) {
  Eigen::RowVectorXd v(dim);
  double norm_sq = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    norm_sq = v.squaredNorm();
  } while (norm_sq <= 1e-24);
  return v / std::sqrt(norm_sq);
}

// One cluster: rows = normalize(direction + sigma * gaussian).
void fill_cluster(Eigen::MatrixXd& out, int first_row, int count,
                  const Eigen::RowVectorXd& direction, double sigma,
                  Rng& rng) {
  const int dim = static_cast<int>(direction.size());
  for (int i = 0; i < count; ++i) {
    Eigen::RowVectorXd v = direction;
    for (int c = 0; c < dim; ++c) v[c] += sigma * rng.normal();
    out.row(first_row + i) = v / v.norm();
  }
}

}  // namespace

GeneratedData generate(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const double sigma =
      1.0 / (spec.concentration * std::sqrt(static_cast<double>(spec.input_dim)));

  // Draw every class direction first, then the samples, in a fixed order.
  const int total_classes =
      spec.num_classes + spec.num_holdout_classes + spec.num_distractor_classes;
  Eigen::MatrixXd directions(total_classes, spec.input_dim);
  for (int c = 0; c < total_classes; ++c) {
    directions.row(c) = random_direction(spec.input_dim, rng);
  }

  GeneratedData data;
  data.train.num_classes = spec.num_classes;
  data.train.inputs.resize(spec.num_classes * spec.samples_per_class,
                           spec.input_dim);
  data.train.labels.resize(data.train.inputs.rows());
  for (int c = 0; c < spec.num_classes; ++c) {
    fill_cluster(data.train.inputs, c * spec.samples_per_class,
                 spec.samples_per_class, directions.row(c), sigma, rng);
    std::fill_n(data.train.labels.begin() + c * spec.samples_per_class,
                spec.samples_per_class, c);
  }

  data.holdout.num_classes = spec.num_holdout_classes;
  data.holdout.inputs.resize(spec.num_holdout_classes * spec.samples_per_class,
                             spec.input_dim);
  data.holdout.labels.resize(data.holdout.inputs.rows());
  for (int c = 0; c < spec.num_holdout_classes; ++c) {
    fill_cluster(data.holdout.inputs, c * spec.samples_per_class,
                 spec.samples_per_class, directions.row(spec.num_classes + c),
                 sigma, rng);
    std::fill_n(data.holdout.labels.begin() + c * spec.samples_per_class,
                spec.samples_per_class, c);
  }

  data.distractors.resize(spec.num_distractor_classes * spec.samples_per_class,
                          spec.input_dim);
  for (int c = 0; c < spec.num_distractor_classes; ++c) {
    fill_cluster(data.distractors, c * spec.samples_per_class,
                 spec.samples_per_class,
                 directions.row(spec.num_classes + spec.num_holdout_classes + c),
                 sigma, rng);
  }
  return data;
}

std::pair<NoisyDataset, NoiseLedger> inject_closed_noise(
    const NoisyDataset& data, double ratio, std::uint64_t seed) {
  if (ratio < 0.0 || ratio >= 1.0) {
    throw InvalidSpecError("closed-set ratio must lie in [0, 1)");
  }
  const int count = static_cast<int>(std::llround(ratio * data.size()));
  NoisyDataset out = data;
  NoiseLedger ledger;
  if (count == 0) return {out, ledger};
  if (data.num_classes < 2) {
    throw InvalidSpecError("closed-set noise needs at least two classes");
  }

  Rng rng(seed);
  std::vector<int> chosen = rng.sample_without_replacement(data.size(), count);
  std::sort(chosen.begin(), chosen.end());
  for (int index : chosen) {
    const int original = out.labels[index];
    int flipped = static_cast<int>(
        rng.uniform_int(static_cast<std::uint64_t>(data.num_classes - 1)));
    if (flipped >= original) ++flipped;
    out.labels[index] = flipped;
    ledger.entries.push_back(
        {index, NoiseKind::ClosedSet, original, flipped});
  }
  return {out, ledger};
}

std::pair<NoisyDataset, NoiseLedger> inject_open_noise(
    const NoisyDataset& data, double ratio, const Eigen::MatrixXd& distractors,
    std::uint64_t seed, const std::vector<int>& exclude) {
  if (ratio < 0.0 || ratio >= 1.0) {
    throw InvalidSpecError("open-set ratio must lie in [0, 1)");
  }
  const int count = static_cast<int>(std::llround(ratio * data.size()));
  NoisyDataset out = data;
  NoiseLedger ledger;
  if (count == 0) return {out, ledger};
  if (distractors.rows() < count) {
    throw InsufficientDistractorsError(
        "need " + std::to_string(count) + " distractors, pool has " +
        std::to_string(distractors.rows()));
  }
  if (distractors.cols() != data.inputs.cols()) {
    throw DimensionMismatchError("distractor dimension mismatch");
  }

  const std::unordered_set<int> excluded(exclude.begin(), exclude.end());
  std::vector<int> allowed;
  allowed.reserve(data.size());
  for (int i = 0; i < data.size(); ++i) {
    if (!excluded.contains(i)) allowed.push_back(i);
  }
  if (static_cast<int>(allowed.size()) < count) {
    throw InsufficientDistractorsError("not enough uncorrupted samples");
  }

  Rng rng(seed);
  std::vector<int> picks =
      rng.sample_without_replacement(static_cast<int>(allowed.size()), count);
  std::vector<int> chosen;
  chosen.reserve(count);
  for (int p : picks) chosen.push_back(allowed[p]);
  std::sort(chosen.begin(), chosen.end());

  std::vector<int> pool = rng.sample_without_replacement(
      static_cast<int>(distractors.rows()), count);
  for (int i = 0; i < count; ++i) {
    const int index = chosen[i];
    out.inputs.row(index) = distractors.row(pool[i]);
    ledger.entries.push_back(
        {index, NoiseKind::OpenSet, -1, out.labels[index]});
  }
  return {out, ledger};
}

std::vector<VerificationPair> make_verification_pairs(
    const NoisyDataset& holdout, int num_pairs, std::uint64_t seed) {
  if (num_pairs < 1) throw InvalidSpecError("num_pairs must be >= 1");

  // Group sample indices by class.
  std::vector<std::vector<int>> by_class(holdout.num_classes);
  for (int i = 0; i < holdout.size(); ++i) {
    by_class[holdout.labels[i]].push_back(i);
  }
  std::vector<int> usable;  // classes with >= 2 samples
  for (int c = 0; c < holdout.num_classes; ++c) {
    if (by_class[c].size() >= 2) usable.push_back(c);
  }
  if (usable.size() < 2) {
    throw InsufficientHoldoutError(
        "verification needs >= 2 classes with >= 2 samples each");
  }

  Rng rng(seed);
  std::vector<VerificationPair> pairs;
  pairs.reserve(2 * num_pairs);
  for (int i = 0; i < num_pairs; ++i) {
    const int c = usable[rng.uniform_int(usable.size())];
    const auto& members = by_class[c];
    const int a = static_cast<int>(rng.uniform_int(members.size()));
    int b = static_cast<int>(rng.uniform_int(members.size() - 1));
    if (b >= a) ++b;
    pairs.push_back({members[a], members[b], true});
  }
  for (int i = 0; i < num_pairs; ++i) {
    const int ci = static_cast<int>(rng.uniform_int(usable.size()));
    int cj = static_cast<int>(rng.uniform_int(usable.size() - 1));
    if (cj >= ci) ++cj;
    const auto& mi = by_class[usable[ci]];
    const auto& mj = by_class[usable[cj]];
    pairs.push_back({mi[rng.uniform_int(mi.size())],
                     mj[rng.uniform_int(mj.size())], false});
  }
  return pairs;
}

}  // namespace marginlab
