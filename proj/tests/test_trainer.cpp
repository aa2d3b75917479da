#include <doctest.h>

#include <cmath>

#include "marginlab/noisegen.hpp"
#include "marginlab/trainer.hpp"

using namespace marginlab;

namespace {

NoisyDataset toy_dataset(int num_classes, int per_class, int dim,
                         std::uint64_t seed, double concentration = 8.0) {
  DatasetSpec spec;
  spec.num_classes = num_classes;
  spec.samples_per_class = per_class;
  spec.input_dim = dim;
  spec.concentration = concentration;
  spec.seed = seed;
  return generate(spec).train;
}

TrainConfig quick_config(HeadKind kind, int epochs, int warmup) {
  TrainConfig config;
  config.head = default_head(kind);
  config.epochs = epochs;
  config.warmup_epochs = warmup;
  config.batch_size = 16;
  config.lr = 0.02;
  config.seed = 3;
  return config;
}

bool models_equal(const EmbeddingModel& a, const EmbeddingModel& b) {
  return a.hidden_weight == b.hidden_weight && a.hidden_bias == b.hidden_bias &&
         a.output_weight == b.output_weight && a.output_bias == b.output_bias &&
         a.centers == b.centers;
}

}  // namespace

TEST_CASE("lr schedule steps down by 10 at each milestone") {
  TrainConfig config;
  config.epochs = 30;
  config.lr = 0.1;
  config.lr_milestones = {6, 12, 19};
  CHECK(lr_at(config, 0) == doctest::Approx(0.1));
  CHECK(lr_at(config, 5) == doctest::Approx(0.1));
  CHECK(lr_at(config, 6) == doctest::Approx(0.01));
  CHECK(lr_at(config, 12) == doctest::Approx(0.001));
  CHECK(lr_at(config, 25) == doctest::Approx(0.0001));
}

TEST_CASE("milestones and warm-up scale with the epoch budget") {
  TrainConfig config;
  config.epochs = 30;
  CHECK(effective_milestones(config) == std::vector<int>{6, 12, 19});
  CHECK(effective_warmup(config) == 7);

  config.epochs = 15;
  CHECK(effective_milestones(config) == std::vector<int>{3, 6, 10});
  CHECK(effective_warmup(config) == 4);

  config.epochs = 4;
  config.warmup_epochs = 1;
  CHECK(effective_milestones(config) == std::vector<int>{1, 2, 3});

  config.lr_milestones = {2};
  CHECK(effective_milestones(config) == std::vector<int>{2});
}

TEST_CASE("sgd_step honors the momentum recurrence") {
  Eigen::MatrixXd param(1, 1), grad(1, 1), velocity(1, 1);

  // zero gradient, zero decay: parameter frozen, velocity decays
  param << 1.0;
  grad << 0.0;
  velocity << 0.5;
  sgd_step(param, grad, velocity, 0.1, 0.9, 0.0);
  CHECK(param(0, 0) == doctest::Approx(1.0 - 0.1 * 0.45).epsilon(1e-15));
  CHECK(velocity(0, 0) == doctest::Approx(0.45).epsilon(1e-15));

  // no momentum, no decay: plain gradient descent
  param << 2.0;
  grad << 0.25;
  velocity << 0.0;
  sgd_step(param, grad, velocity, 0.1, 0.0, 0.0);
  CHECK(param(0, 0) == doctest::Approx(2.0 - 0.1 * 0.25).epsilon(1e-15));

  // two steps with constant gradient: displacement g * (1 + 1.9)
  param << 0.0;
  grad << 1.0;
  velocity << 0.0;
  sgd_step(param, grad, velocity, 1.0, 0.9, 0.0);
  sgd_step(param, grad, velocity, 1.0, 0.9, 0.0);
  CHECK(param(0, 0) == doctest::Approx(-2.9).epsilon(1e-15));
}

TEST_CASE("zero velocity and zero gradient leave parameters untouched") {
  Eigen::MatrixXd param(2, 2), grad(2, 2), velocity(2, 2);
  param << 1, 2, 3, 4;
  grad.setZero();
  velocity.setZero();
  sgd_step(param, grad, velocity, 0.1, 0.9, 0.0);
  CHECK(param(0, 0) == 1.0);
  CHECK(param(1, 1) == 4.0);
}

TEST_CASE("one epoch, one batch produces exactly one iteration row") {
  const NoisyDataset data = toy_dataset(3, 4, 8, 1);
  EmbeddingModel model = EmbeddingModel::init(8, 0, 6, 3, 11);
  TrainConfig config = quick_config(HeadKind::ArcFace, 1, 0);
  config.batch_size = 64;  // larger than the dataset
  const TrainResult result = train(model, data, nullptr, config);
  CHECK(result.log.iterations.size() == 1);
  CHECK(result.log.epochs.size() == 1);
  CHECK_FALSE(result.log.ledger_attached);
}

TEST_CASE("training on clean separable data reduces the loss") {
  const NoisyDataset data = toy_dataset(3, 30, 16, 2);
  EmbeddingModel model = EmbeddingModel::init(16, 0, 8, 3, 5);
  TrainConfig config = quick_config(HeadKind::ArcFace, 6, 0);
  const TrainResult result = train(model, data, nullptr, config);
  CHECK(result.log.epochs.back().mean_loss <
        result.log.epochs.front().mean_loss);
}

TEST_CASE("training is bitwise reproducible") {
  const NoisyDataset data = toy_dataset(4, 10, 12, 9);
  const EmbeddingModel model = EmbeddingModel::init(12, 6, 8, 4, 17);
  const TrainConfig config = quick_config(HeadKind::BoundaryFace, 3, 1);

  const TrainResult a = train(model, data, nullptr, config);
  const TrainResult b = train(model, data, nullptr, config);
  CHECK(models_equal(a.model, b.model));
  REQUIRE(a.log.iterations.size() == b.log.iterations.size());
  for (std::size_t i = 0; i < a.log.iterations.size(); ++i) {
    CHECK(a.log.iterations[i].loss == b.log.iterations[i].loss);
  }
}

TEST_CASE("warm-up epochs run identical math for BoundaryFace and ArcFace") {
  const NoisyDataset data = toy_dataset(4, 12, 12, 4);
  const EmbeddingModel model = EmbeddingModel::init(12, 0, 8, 4, 23);
  TrainConfig bface = quick_config(HeadKind::BoundaryFace, 3, 2);
  TrainConfig arc = quick_config(HeadKind::ArcFace, 3, 2);

  const TrainResult rb = train(model, data, nullptr, bface);
  const TrainResult ra = train(model, data, nullptr, arc);
  for (std::size_t i = 0; i < rb.log.iterations.size(); ++i) {
    if (rb.log.iterations[i].epoch < 2) {
      CHECK(rb.log.iterations[i].loss == ra.log.iterations[i].loss);
    }
  }
}

TEST_CASE("warmup_head strips the mining machinery") {
  HeadConfig bface = default_head(HeadKind::BoundaryFace);
  const HeadConfig warm = warmup_head(bface, true, true);
  CHECK(warm.kind == HeadKind::ArcFace);
  CHECK(warm.lambda == 0.0);
  CHECK_FALSE(warm.correction_enabled);
  CHECK(warm.margin == bface.margin);
  CHECK(warm.scale == bface.scale);

  const HeadConfig kept = warmup_head(bface, true, false);
  CHECK(kept.kind == HeadKind::BoundaryFace);
  CHECK(kept.lambda == bface.lambda);
  CHECK_FALSE(kept.correction_enabled);

  CHECK(warmup_head(default_head(HeadKind::Focal), true, true).kind ==
        HeadKind::NormFace);
  CHECK(warmup_head(default_head(HeadKind::CosFace), true, true).kind ==
        HeadKind::CosFace);
}

TEST_CASE("correction counters relate to the ledger") {
  DatasetSpec spec;
  spec.num_classes = 5;
  spec.samples_per_class = 20;
  spec.input_dim = 16;
  spec.concentration = 6.0;
  spec.seed = 31;
  const GeneratedData data = generate(spec);
  const auto [noisy, ledger] = inject_closed_noise(data.train, 0.2, 32);

  EmbeddingModel model = EmbeddingModel::init(16, 0, 8, 5, 33);
  TrainConfig config = quick_config(HeadKind::BoundaryFace, 4, 1);
  const TrainResult result = train(model, noisy, &ledger, config);

  CHECK(result.log.ledger_attached);
  for (const IterationRow& row : result.log.iterations) {
    CHECK(row.detected == row.correct_corrections + row.wrong_corrections);
    if (row.detected > 0) {
      const double precision =
          static_cast<double>(row.correct_corrections) / row.detected;
      CHECK(precision >= 0.0);
      CHECK(precision <= 1.0);
    }
  }
}

TEST_CASE("train validates its configuration") {
  const NoisyDataset data = toy_dataset(3, 4, 8, 1);
  EmbeddingModel model = EmbeddingModel::init(8, 0, 6, 3, 11);

  TrainConfig config = quick_config(HeadKind::ArcFace, 2, 2);
  CHECK_THROWS_AS(train(model, data, nullptr, config), Error);  // warmup >= epochs

  config = quick_config(HeadKind::ArcFace, 2, 0);
  config.lr_milestones = {1, 1};
  CHECK_THROWS_AS(train(model, data, nullptr, config), Error);

  config = quick_config(HeadKind::ArcFace, 2, 0);
  config.momentum = 1.0;
  CHECK_THROWS_AS(train(model, data, nullptr, config), Error);
}

TEST_CASE("curricular EMA state advances across batches") {
  const NoisyDataset data = toy_dataset(3, 20, 8, 6);
  EmbeddingModel model = EmbeddingModel::init(8, 0, 6, 3, 7);
  TrainConfig config = quick_config(HeadKind::Curricular, 2, 0);
  const TrainResult result = train(model, data, nullptr, config);
  CHECK(result.curricular_t != 0.0);
  CHECK(std::isfinite(result.curricular_t));
}
