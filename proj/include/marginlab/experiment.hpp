#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "marginlab/heads.hpp"
#include "marginlab/noisegen.hpp"
#include "marginlab/trainer.hpp"

namespace marginlab {

// One experiment = dataset + noise ratios + model architecture + training
// schedule + the heads/seeds grid. A config file fully determines every
// artifact a run produces.
struct ExperimentConfig {
  DatasetSpec dataset;
  double closed_ratio = 0.0;
  double open_ratio = 0.0;
  int model_hidden_dim = 128;
  int model_embed_dim = 32;
  TrainConfig train;  // per-run head/seed are filled in from `heads`/`seeds`
  std::vector<HeadConfig> heads;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;
  int verification_pairs = 500;
  std::vector<double> sweep_closed;  // noise grid for the sweep command
  std::vector<double> sweep_open;

  void validate() const;
};

// Reads a JSON config file and applies "dotted.path=value" overrides on top.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

// A config with every field at its default, as a JSON string (the `init`
// command prints this).
std::string default_config_json();

// Resolves the output directory: absolute paths stay as they are, relative
// paths land under $MARGINLAB_OUT when that is set.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);

// gen: synthesizes train/holdout/distractor data, injects noise on disjoint
// index sets, writes train.dataset, holdout.dataset, distractors.matrix and
// noise.ledger under the output dir.
void run_gen(const ExperimentConfig& config, std::ostream& out);

// train: one run per (head, seed); writes <head>_<seed>.ckpt and
// <head>_<seed>.csv. `only_head` restricts to one head name; jobs > 1 runs
// (head, seed) combinations in parallel.
void run_train(const ExperimentConfig& config, const std::string& only_head,
               int jobs, std::ostream& out);

// eval: verification accuracy per run plus per-head aggregates; writes
// comparison.csv, aggregate.csv and detection_<head>_<seed>.csv for heads
// with label correction enabled.
void run_eval(const ExperimentConfig& config, std::ostream& out);

struct GradcheckResult {
  std::string head;
  double max_error = 0.0;
  bool passed = false;
  int hard_samples = 0;
  int corrected_samples = 0;
};

struct AuditOutcome {
  double max_error = 0.0;
  int hard_samples = 0;
  int corrected_samples = 0;
};

// One staged audit batch (N=8, n=10, d=16) for one head: returns the
// finite-difference result plus how many hard/corrected samples the batch
// contained.
AuditOutcome audit_head(HeadKind kind, std::uint64_t seed, int hidden_dim,
                        double corrupt = 0.0);

// gradcheck: finite-difference audit of every head on fixed seeded batches
// (a linear and a one-hidden-layer model per head). `corrupt` perturbs the
// first analytic gradient entry so the failure path can be exercised.
std::vector<GradcheckResult> run_gradcheck(double tolerance = 1e-5,
                                           double corrupt = 0.0);
bool print_gradcheck(const std::vector<GradcheckResult>& results,
                     std::ostream& out);

// sweep: gen + train + eval for every (closed, open) cell of the noise grid,
// each under <output_dir>/c<closed>_o<open>/.
void run_sweep(const ExperimentConfig& config, int jobs, std::ostream& out);

}  // namespace marginlab
