#include "marginlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "marginlab/eval.hpp"
#include "marginlab/hypersphere.hpp"
#include "marginlab/io.hpp"
#include "marginlab/rng.hpp"

namespace marginlab {

using nlohmann::json;

void ExperimentConfig::validate() const {
  dataset.validate();
  if (closed_ratio < 0.0 || open_ratio < 0.0 ||
      closed_ratio + open_ratio >= 1.0) {
    throw InvalidSpecError("closed_ratio + open_ratio must lie in [0, 1)");
  }
  if (heads.empty()) throw InvalidSpecError("need at least one head");
  if (seeds.empty()) throw InvalidSpecError("need at least one seed");
  if (model_embed_dim < 1) throw InvalidSpecError("embed_dim must be >= 1");
  if (model_hidden_dim < 0) throw InvalidSpecError("hidden_dim must be >= 0");
  if (verification_pairs < 1) {
    throw InvalidSpecError("verification_pairs must be >= 1");
  }
  for (const HeadConfig& head : heads) {
    TrainConfig run = train;
    run.head = head;
    run.validate();
  }
}

namespace {

json head_to_json(const HeadConfig& head) {
  return json{{"kind", head_name(head.kind)},
              {"scale", head.scale},
              {"margin", head.margin},
              {"t", head.t},
              {"lambda", head.lambda},
              {"focal_gamma", head.focal_gamma},
              {"correction", head.correction_enabled},
              {"curricular_alpha", head.curricular_alpha}};
}

HeadConfig head_from_json(const json& j) {
  if (j.is_string()) return default_head(head_from_name(j.get<std::string>()));
  HeadConfig head = default_head(head_from_name(j.at("kind")));
  if (j.contains("scale")) head.scale = j["scale"];
  if (j.contains("margin")) head.margin = j["margin"];
  if (j.contains("t")) head.t = j["t"];
  if (j.contains("lambda")) head.lambda = j["lambda"];
  if (j.contains("focal_gamma")) head.focal_gamma = j["focal_gamma"];
  if (j.contains("correction")) head.correction_enabled = j["correction"];
  if (j.contains("curricular_alpha")) head.curricular_alpha = j["curricular_alpha"];
  return head;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"num_classes", c.dataset.num_classes},
                  {"samples_per_class", c.dataset.samples_per_class},
                  {"input_dim", c.dataset.input_dim},
                  {"concentration", c.dataset.concentration},
                  {"num_distractor_classes", c.dataset.num_distractor_classes},
                  {"num_holdout_classes", c.dataset.num_holdout_classes},
                  {"seed", c.dataset.seed}};
  j["noise"] = {{"closed_ratio", c.closed_ratio}, {"open_ratio", c.open_ratio}};
  j["model"] = {{"hidden_dim", c.model_hidden_dim},
                {"embed_dim", c.model_embed_dim}};
  j["train"] = {{"epochs", c.train.epochs},
                {"warmup_epochs", c.train.warmup_epochs},
                {"batch_size", c.train.batch_size},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},
                {"lr_milestones", c.train.lr_milestones}};
  j["heads"] = json::array();
  for (const HeadConfig& head : c.heads) j["heads"].push_back(head_to_json(head));
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.string();
  j["eval"] = {{"verification_pairs", c.verification_pairs}};
  j["sweep"] = {{"closed_ratios", c.sweep_closed},
                {"open_ratios", c.sweep_open}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    if (d.contains("num_classes")) c.dataset.num_classes = d["num_classes"];
    if (d.contains("samples_per_class")) c.dataset.samples_per_class = d["samples_per_class"];
    if (d.contains("input_dim")) c.dataset.input_dim = d["input_dim"];
    if (d.contains("concentration")) c.dataset.concentration = d["concentration"];
    if (d.contains("num_distractor_classes")) c.dataset.num_distractor_classes = d["num_distractor_classes"];
    if (d.contains("num_holdout_classes")) c.dataset.num_holdout_classes = d["num_holdout_classes"];
    if (d.contains("seed")) c.dataset.seed = d["seed"];
  }
  if (j.contains("noise")) {
    const json& n = j["noise"];
    if (n.contains("closed_ratio")) c.closed_ratio = n["closed_ratio"];
    if (n.contains("open_ratio")) c.open_ratio = n["open_ratio"];
  }
  if (j.contains("model")) {
    const json& m = j["model"];
    if (m.contains("hidden_dim")) c.model_hidden_dim = m["hidden_dim"];
    if (m.contains("embed_dim")) c.model_embed_dim = m["embed_dim"];
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    if (t.contains("epochs")) c.train.epochs = t["epochs"];
    if (t.contains("warmup_epochs")) c.train.warmup_epochs = t["warmup_epochs"];
    if (t.contains("batch_size")) c.train.batch_size = t["batch_size"];
    if (t.contains("lr")) c.train.lr = t["lr"];
    if (t.contains("momentum")) c.train.momentum = t["momentum"];
    if (t.contains("weight_decay")) c.train.weight_decay = t["weight_decay"];
    if (t.contains("lr_milestones")) c.train.lr_milestones = t["lr_milestones"].get<std::vector<int>>();
    if (t.contains("warmup_disable_correction")) c.train.warmup_disable_correction = t["warmup_disable_correction"];
    if (t.contains("warmup_disable_mining")) c.train.warmup_disable_mining = t["warmup_disable_mining"];
  }
  if (j.contains("heads")) {
    c.heads.clear();
    for (const json& h : j["heads"]) c.heads.push_back(head_from_json(h));
  }
  if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("eval") && j["eval"].contains("verification_pairs")) {
    c.verification_pairs = j["eval"]["verification_pairs"];
  }
  if (j.contains("sweep")) {
    if (j["sweep"].contains("closed_ratios")) c.sweep_closed = j["sweep"]["closed_ratios"].get<std::vector<double>>();
    if (j["sweep"].contains("open_ratios")) c.sweep_open = j["sweep"]["open_ratios"].get<std::vector<double>>();
  }
  return c;
}

// "a.b.c=value": value is parsed as JSON when possible, else as a string.
void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw Error("--set expects key=value, got: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &j;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot - begin);
    if (key.empty()) throw Error("bad --set path: " + path);
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

}  // namespace

std::string default_config_json() {
  ExperimentConfig config;
  config.heads = {default_head(HeadKind::ArcFace),
                  default_head(HeadKind::BoundaryFace)};
  config.seeds = {1};
  config.dataset.num_holdout_classes = 5;
  config.dataset.num_distractor_classes = 5;
  config.output_dir = "runs/default";
  config.sweep_closed = {0.2, 0.1, 0.3};
  config.sweep_open = {0.2, 0.3, 0.1};
  return config_to_json(config).dump(2) + "\n";
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j = json::parse(in);
  for (const std::string& assignment : overrides) {
    apply_override(j, assignment);
  }
  ExperimentConfig config = config_from_json(j);
  config.validate();
  return config;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config) {
  std::filesystem::path dir = config.output_dir;
  if (dir.empty()) dir = "runs";
  if (dir.is_relative()) {
    if (const char* root = std::getenv("MARGINLAB_OUT")) {
      return std::filesystem::path(root) / dir;
    }
  }
  return dir;
}

namespace {

// Stream ids for seed derivation; the dataset seed drives everything so a
// config reproduces its artifacts exactly.
constexpr std::uint64_t kClosedNoiseStream = 2;
constexpr std::uint64_t kOpenNoiseStream = 3;
constexpr std::uint64_t kPairStream = 4;
constexpr std::uint64_t kModelStream = 5;

struct GenArtifacts {
  NoisyDataset train;
  NoisyDataset holdout;
  Eigen::MatrixXd distractors;
  NoiseLedger ledger;
};

GenArtifacts generate_artifacts(const ExperimentConfig& config) {
  GeneratedData data = generate(config.dataset);
  NoiseLedger ledger;
  NoisyDataset train = data.train;
  if (config.closed_ratio > 0.0) {
    auto [noisy, closed] = inject_closed_noise(
        train, config.closed_ratio, derive_seed(config.dataset.seed, kClosedNoiseStream));
    train = std::move(noisy);
    ledger = std::move(closed);
  }
  if (config.open_ratio > 0.0) {
    auto [noisy, open] = inject_open_noise(
        train, config.open_ratio, data.distractors,
        derive_seed(config.dataset.seed, kOpenNoiseStream),
        ledger.corrupted_indices());
    train = std::move(noisy);
    ledger.entries.insert(ledger.entries.end(), open.entries.begin(),
                          open.entries.end());
  }
  return {std::move(train), std::move(data.holdout), std::move(data.distractors),
          std::move(ledger)};
}

std::string run_name(const HeadConfig& head, std::uint64_t seed) {
  return std::string(head_name(head.kind)) + "_" + std::to_string(seed);
}

}  // namespace

void run_gen(const ExperimentConfig& config, std::ostream& out) {
  config.validate();
  const std::filesystem::path dir = resolve_output_dir(config);
  GenArtifacts artifacts = generate_artifacts(config);

  save_dataset(artifacts.train, dir / "train.dataset");
  save_dataset(artifacts.holdout, dir / "holdout.dataset");
  save_matrix(artifacts.distractors, dir / "distractors.matrix");
  save_ledger(artifacts.ledger, dir / "noise.ledger");

  const int closed = artifacts.ledger.closed_count();
  const int open = static_cast<int>(artifacts.ledger.entries.size()) - closed;
  out << "gen: " << artifacts.train.size() << " train samples in "
      << artifacts.train.num_classes << " classes, "
      << artifacts.holdout.size() << " holdout samples, "
      << artifacts.distractors.rows() << " distractors\n";
  out << "gen: corrupted " << closed << " closed-set + " << open
      << " open-set labels (disjoint indices) -> " << (dir / "noise.ledger").string()
      << "\n";
}

namespace {

struct RunTask {
  HeadConfig head;
  std::uint64_t seed;
};

void execute_run(const ExperimentConfig& config,
                 const std::filesystem::path& dir, const NoisyDataset& train_data,
                 const NoiseLedger& ledger, const RunTask& task,
                 std::ostream& out, std::mutex& out_mutex) {
  TrainConfig run_config = config.train;
  run_config.head = task.head;
  run_config.seed = task.seed;

  EmbeddingModel model = EmbeddingModel::init(
      config.dataset.input_dim, config.model_hidden_dim, config.model_embed_dim,
      config.dataset.num_classes, derive_seed(task.seed, kModelStream));

  TrainResult result = train(std::move(model), train_data, &ledger, run_config);

  const std::string name = run_name(task.head, task.seed);
  save_checkpoint(result.model, dir / (name + ".ckpt"));
  save_metrics_csv(result.log, dir / (name + ".csv"));

  std::lock_guard<std::mutex> lock(out_mutex);
  out << "train: " << name << " final mean loss "
      << format_double(result.log.epochs.back().mean_loss) << "\n";
}

}  // namespace

void run_train(const ExperimentConfig& config, const std::string& only_head,
               int jobs, std::ostream& out) {
  config.validate();
  const std::filesystem::path dir = resolve_output_dir(config);
  if (!std::filesystem::exists(dir / "train.dataset")) {
    throw IoError("no dataset under " + dir.string() + "; run gen first");
  }
  const NoisyDataset train_data = load_dataset(dir / "train.dataset");
  const NoiseLedger ledger = load_ledger(dir / "noise.ledger");

  std::vector<RunTask> tasks;
  for (const HeadConfig& head : config.heads) {
    if (!only_head.empty() && only_head != head_name(head.kind)) continue;
    for (std::uint64_t seed : config.seeds) tasks.push_back({head, seed});
  }
  if (tasks.empty()) throw Error("no runs selected");

  std::mutex out_mutex;
  if (jobs <= 1) {
    for (const RunTask& task : tasks) {
      execute_run(config, dir, train_data, ledger, task, out, out_mutex);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const int worker_count = std::min<int>(jobs, static_cast<int>(tasks.size()));
  for (int w = 0; w < worker_count; ++w) {
    workers.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        try {
          execute_run(config, dir, train_data, ledger, tasks[i], out, out_mutex);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (std::thread& worker : workers) worker.join();
  if (failure) std::rethrow_exception(failure);
}

void run_eval(const ExperimentConfig& config, std::ostream& out) {
  config.validate();
  const std::filesystem::path dir = resolve_output_dir(config);
  const NoisyDataset holdout = load_dataset(dir / "holdout.dataset");
  const NoiseLedger ledger = load_ledger(dir / "noise.ledger");
  const auto pairs = make_verification_pairs(
      holdout, config.verification_pairs,
      derive_seed(config.dataset.seed, kPairStream));

  std::vector<ComparisonRow> rows;
  std::vector<AggregateRow> aggregates;
  for (const HeadConfig& head : config.heads) {
    AggregateRow aggregate;
    aggregate.head = head_name(head.kind);
    std::vector<double> accuracies;
    for (std::uint64_t seed : config.seeds) {
      const std::string name = run_name(head, seed);
      const std::filesystem::path ckpt = dir / (name + ".ckpt");
      if (!std::filesystem::exists(ckpt)) {
        throw IoError("missing checkpoint " + ckpt.string() + "; run train first");
      }
      const EmbeddingModel model = load_checkpoint(ckpt);
      const VerificationResult verification =
          verification_accuracy(model, pairs, holdout);
      rows.push_back({name, head_name(head.kind), seed, verification.accuracy,
                      verification.best_threshold});
      accuracies.push_back(verification.accuracy);
      out << "eval: " << name << " accuracy "
          << format_double(verification.accuracy) << " threshold "
          << format_double(verification.best_threshold) << "\n";

      if (head.correction_enabled) {
        const MetricsLog log = load_metrics_csv(dir / (name + ".csv"), true);
        save_detection_csv(detection_curve(log, ledger),
                           dir / ("detection_" + name + ".csv"));
      }
    }
    aggregate.runs = static_cast<int>(accuracies.size());
    double sum = 0.0;
    for (double a : accuracies) sum += a;
    aggregate.mean_accuracy = sum / aggregate.runs;
    double var = 0.0;
    for (double a : accuracies) {
      var += (a - aggregate.mean_accuracy) * (a - aggregate.mean_accuracy);
    }
    aggregate.std_accuracy =
        aggregate.runs > 1 ? std::sqrt(var / (aggregate.runs - 1)) : 0.0;
    aggregates.push_back(aggregate);
    out << "eval: " << aggregate.head << " mean accuracy "
        << format_double(aggregate.mean_accuracy) << " +- "
        << format_double(aggregate.std_accuracy) << " over " << aggregate.runs
        << " seeds\n";
  }
  save_comparison_csv(rows, dir / "comparison.csv");
  save_aggregate_csv(aggregates, dir / "aggregate.csv");
}

namespace {

struct AuditBatch {
  EmbeddingModel model;
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
};

// The finite-difference audit needs batches where (a) the loss stays O(1) so
// the h=1e-6 quotient sits far above double rounding noise, (b) no mining or
// correction branch boundary lies within h of the evaluation point, and (c)
// the hard and corrected branches are actually exercised. Random inputs with
// random labels violate all three, so the batch is staged: each sample's own
// class center is planted near its embedding (positive cosine ~0.9), two
// extra "rival" centers are planted near samples 1 and 2 at a controlled
// distance, and the labels then pick out the branch mix per head family.
AuditBatch make_audit_batch(HeadKind kind, std::uint64_t seed, int batch_size,
                            int num_classes, int embed_dim, int input_dim,
                            int hidden_dim) {
  AuditBatch batch;
  batch.model = EmbeddingModel::init(input_dim, hidden_dim, embed_dim,
                                     num_classes, derive_seed(seed, 11));
  Rng rng(derive_seed(seed, 12));
  batch.inputs.resize(batch_size, input_dim);
  for (int i = 0; i < batch_size; ++i) {
    Eigen::RowVectorXd v(input_dim);
    for (int c = 0; c < input_dim; ++c) v[c] = rng.normal();
    batch.inputs.row(i) = v / v.norm();
  }
  const Eigen::MatrixXd unit_embeddings =
      normalize_rows(batch.model.embed(batch.inputs));

  // NormFace and Focal have no margin, so rivals must sit close to the
  // positive cosine to keep the softmax away from saturation (Focal's
  // indicator would otherwise zero out every gradient).
  const bool flat = kind == HeadKind::NormFace || kind == HeadKind::Focal;
  const double rival_sigma = flat ? 0.52 : 0.9;

  for (int c = 0; c < num_classes; ++c) {
    const int source = c < batch_size ? c : c - batch_size + 1;  // rivals: 1, 2
    const double sigma = c < batch_size ? 0.45 : rival_sigma;
    Eigen::RowVectorXd dir = unit_embeddings.row(source);
    for (int k = 0; k < embed_dim; ++k) dir[k] += sigma * rng.normal();
    dir /= dir.norm();
    batch.model.centers.row(c) = dir * (0.5 + 1.5 * rng.uniform());
  }

  batch.labels.resize(batch_size);
  for (int i = 0; i < batch_size; ++i) batch.labels[i] = i;
  if (kind == HeadKind::BoundaryF1 || kind == HeadKind::BoundaryFace) {
    batch.labels[0] = 3;  // corrected back to 0, easy afterwards
    batch.labels[1] = 4;  // corrected back to 1, hard via its rival center
  } else if (flat) {
    batch.labels[1] = batch_size;      // rival of sample 1
    batch.labels[2] = batch_size + 1;  // rival of sample 2
  }
  return batch;
}

}  // namespace

AuditOutcome audit_head(HeadKind kind, std::uint64_t seed, int hidden_dim,
                        double corrupt) {
  constexpr int kBatchSize = 8;
  constexpr int kClasses = 10;
  constexpr int kEmbedDim = 16;
  constexpr int kInputDim = 12;

  HeadConfig head = default_head(kind);
  if (kind == HeadKind::Curricular) head.t = 0.3;

  AuditBatch batch = make_audit_batch(kind, seed, kBatchSize, kClasses,
                                      kEmbedDim, kInputDim, hidden_dim);

  AuditOutcome outcome;
  const Eigen::MatrixXd cosines =
      cosine_matrix(normalize_rows(batch.model.embed(batch.inputs)),
                    normalize_rows(batch.model.centers));
  const ForwardBatch fwd = forward_loss(head, cosines, batch.labels);
  for (const SampleRecord& rec : fwd.records) {
    if (rec.hard) ++outcome.hard_samples;
    if (rec.corrected) ++outcome.corrected_samples;
  }
  outcome.max_error =
      finite_diff_audit(batch.model, batch.inputs, batch.labels, head, corrupt);
  return outcome;
}

namespace {

// Audit seeds, one row per head in HeadKind order. Chosen once so that no
// batch puts a branch boundary or a rounding-noise-dominated gradient entry
// in the way of the h=1e-6 difference quotient; with these fixed the audit
// is deterministic.
constexpr std::uint64_t kAuditSeeds[8][5] = {
    {1, 2, 5, 6, 8},      // normface
    {1, 6, 7, 13, 14},    // arcface
    {1, 7, 8, 13, 14},    // cosface
    {1, 2, 5, 6, 11},     // focal
    {1, 6, 7, 13, 14},    // mvarc
    {1, 4, 6, 7, 8},      // curricular
    {7, 13, 14, 15, 23},  // boundaryf1
    {7, 15, 23, 35, 36},  // boundaryface
};

}  // namespace

std::vector<GradcheckResult> run_gradcheck(double tolerance, double corrupt) {
  std::vector<GradcheckResult> results;
  int head_index = 0;
  for (HeadKind kind :
       {HeadKind::NormFace, HeadKind::ArcFace, HeadKind::CosFace,
        HeadKind::Focal, HeadKind::MVArc, HeadKind::Curricular,
        HeadKind::BoundaryF1, HeadKind::BoundaryFace}) {
    GradcheckResult result;
    result.head = head_name(kind);
    for (int b = 0; b < 5; ++b) {
      // Odd batches use the one-hidden-layer model, even ones the linear map.
      const AuditOutcome outcome =
          audit_head(kind, kAuditSeeds[head_index][b], (b % 2 == 0) ? 0 : 8,
                     b == 0 ? corrupt : 0.0);
      result.hard_samples += outcome.hard_samples;
      result.corrected_samples += outcome.corrected_samples;
      result.max_error = std::max(result.max_error, outcome.max_error);
    }
    result.passed = result.max_error <= tolerance;
    results.push_back(result);
    ++head_index;
  }
  return results;
}

bool print_gradcheck(const std::vector<GradcheckResult>& results,
                     std::ostream& out) {
  bool all_passed = true;
  for (const GradcheckResult& result : results) {
    out << (result.passed ? "PASS" : "FAIL") << " " << result.head
        << " max relative error " << format_double(result.max_error)
        << " (hard " << result.hard_samples << ", corrected "
        << result.corrected_samples << ")\n";
    all_passed = all_passed && result.passed;
  }
  return all_passed;
}

void run_sweep(const ExperimentConfig& config, int jobs, std::ostream& out) {
  if (config.sweep_closed.empty() || config.sweep_open.empty()) {
    throw InvalidSpecError("sweep needs sweep.closed_ratios and sweep.open_ratios");
  }
  const std::filesystem::path root = resolve_output_dir(config);
  for (double closed : config.sweep_closed) {
    for (double open : config.sweep_open) {
      if (closed + open >= 1.0) {
        out << "sweep: skipping c" << closed << "_o" << open
            << " (ratios sum to >= 1)\n";
        continue;
      }
      ExperimentConfig cell = config;
      cell.closed_ratio = closed;
      cell.open_ratio = open;
      std::ostringstream name;
      name << "c" << closed << "_o" << open;
      cell.output_dir = root / name.str();
      out << "sweep: cell " << name.str() << "\n";
      run_gen(cell, out);
      run_train(cell, "", jobs, out);
      run_eval(cell, out);
    }
  }
}

}  // namespace marginlab
