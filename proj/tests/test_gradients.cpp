#include <doctest.h>

#include <cmath>

#include "marginlab/experiment.hpp"
#include "marginlab/heads.hpp"
#include "marginlab/hypersphere.hpp"
#include "marginlab/rng.hpp"
#include "marginlab/trainer.hpp"

using namespace marginlab;

namespace {

struct LossBatch {
  Eigen::MatrixXd features;  // raw
  Eigen::MatrixXd centers;   // raw
  std::vector<int> labels;
};

LossBatch random_loss_batch(Rng& rng, int n_samples, int n_classes, int dim) {
  LossBatch batch;
  batch.features.resize(n_samples, dim);
  batch.centers.resize(n_classes, dim);
  for (int i = 0; i < n_samples; ++i) {
    for (int j = 0; j < dim; ++j) batch.features(i, j) = rng.normal();
  }
  for (int i = 0; i < n_classes; ++i) {
    for (int j = 0; j < dim; ++j) batch.centers(i, j) = rng.normal();
  }
  for (int i = 0; i < n_samples; ++i) {
    batch.labels.push_back(static_cast<int>(rng.uniform_int(n_classes)));
  }
  return batch;
}

double loss_of(const HeadConfig& head, const LossBatch& batch) {
  return forward_loss(head,
                      cosine_matrix(normalize_rows(batch.features),
                                    normalize_rows(batch.centers)),
                      batch.labels)
      .mean_loss;
}

HeadGradients analytic(const HeadConfig& head, const LossBatch& batch) {
  const ForwardBatch fwd =
      forward_loss(head,
                   cosine_matrix(normalize_rows(batch.features),
                                 normalize_rows(batch.centers)),
                   batch.labels);
  return backward(head, fwd, batch.features, batch.centers);
}

// Central differences over the raw feature/center entries. The error metric
// uses an absolute floor of 1e-3 on the denominator: entries that tiny are
// below what an h=1e-6 quotient can resolve on a loss of this magnitude, and
// the staged model-level audit (audit_head) covers the strict metric.
double loss_level_fd_error(const HeadConfig& head, LossBatch batch) {
  const HeadGradients grads = analytic(head, batch);
  const double h = 1e-6;
  double max_error = 0.0;
  auto sweep = [&](Eigen::MatrixXd& m, const Eigen::MatrixXd& g) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m.data()[i];
      m.data()[i] = saved + h;
      const double up = loss_of(head, batch);
      m.data()[i] = saved - h;
      const double down = loss_of(head, batch);
      m.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      max_error = std::max(max_error, std::abs(g.data()[i] - numeric) /
                                          std::max(std::abs(numeric), 1e-3));
    }
  };
  sweep(batch.features, grads.features);
  sweep(batch.centers, grads.centers);
  return max_error;
}

}  // namespace

TEST_CASE("loss-level gradients match finite differences for every head") {
  for (HeadKind kind :
       {HeadKind::NormFace, HeadKind::ArcFace, HeadKind::CosFace,
        HeadKind::Focal, HeadKind::MVArc, HeadKind::Curricular,
        HeadKind::BoundaryF1, HeadKind::BoundaryFace}) {
    HeadConfig head = default_head(kind);
    if (kind == HeadKind::Curricular) head.t = 0.3;
    Rng rng(101 + static_cast<int>(kind));
    for (int trial = 0; trial < 3; ++trial) {
      const LossBatch batch = random_loss_batch(rng, 4, 6, 8);
      CAPTURE(head_name(kind));
      CHECK(loss_level_fd_error(head, batch) <= 1e-5);
    }
  }
}

TEST_CASE("staged model-level audit meets the strict tolerance per head") {
  // Same batches the gradcheck command uses: N=8, n=10, d=16, both model
  // shapes, hard samples everywhere and corrected samples for the
  // correction-enabled heads.
  const auto results = run_gradcheck(1e-5, 0.0);
  REQUIRE(results.size() == 8);
  for (const GradcheckResult& result : results) {
    CAPTURE(result.head);
    CHECK(result.passed);
    CHECK(result.max_error <= 1e-5);
    CHECK(result.hard_samples >= 1);
    if (result.head == "boundaryf1" || result.head == "boundaryface") {
      CHECK(result.corrected_samples >= 1);
    }
  }
}

TEST_CASE("a corrupted analytic gradient is caught") {
  const auto results = run_gradcheck(1e-5, 1e-3);
  bool any_failed = false;
  for (const GradcheckResult& result : results) {
    any_failed = any_failed || !result.passed;
  }
  CHECK(any_failed);
}

TEST_CASE("BoundaryFace with lambda 0 and no correction reproduces ArcFace gradients") {
  HeadConfig arc = default_head(HeadKind::ArcFace);
  HeadConfig bface = default_head(HeadKind::BoundaryFace);
  bface.lambda = 0.0;
  bface.correction_enabled = false;

  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    const LossBatch batch = random_loss_batch(rng, 5, 7, 9);
    const HeadGradients ga = analytic(arc, batch);
    const HeadGradients gb = analytic(bface, batch);
    CHECK((ga.features - gb.features).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((ga.centers - gb.centers).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("easy samples contribute no regularizer gradient") {
  // Features sitting on their own well-separated centers: f = 0 everywhere,
  // so BoundaryFace and ArcFace gradients coincide even with lambda > 0.
  Eigen::MatrixXd centers = Eigen::MatrixXd::Identity(4, 8);
  Eigen::MatrixXd features = centers.topRows(3);
  LossBatch batch{features, centers, {0, 1, 2}};

  HeadConfig arc = default_head(HeadKind::ArcFace);
  HeadConfig bface = default_head(HeadKind::BoundaryFace);

  const ForwardBatch fwd =
      forward_loss(bface,
                   cosine_matrix(normalize_rows(batch.features),
                                 normalize_rows(batch.centers)),
                   batch.labels);
  for (const SampleRecord& rec : fwd.records) {
    CHECK_FALSE(rec.hard);
    CHECK_FALSE(rec.corrected);
  }

  const HeadGradients ga = analytic(arc, batch);
  const HeadGradients gb = analytic(bface, batch);
  CHECK((ga.features - gb.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ga.centers - gb.centers).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corrected samples are equivalent to relabeled ArcFace") {
  // When correction fires, the loss and gradients must equal ArcFace run
  // directly on the corrected labels.
  Rng rng(77);
  HeadConfig bf1 = default_head(HeadKind::BoundaryF1);
  HeadConfig arc = default_head(HeadKind::ArcFace);

  int corrected_seen = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const LossBatch batch = random_loss_batch(rng, 4, 6, 8);
    const Eigen::MatrixXd cosines = cosine_matrix(
        normalize_rows(batch.features), normalize_rows(batch.centers));
    const ForwardBatch fwd = forward_loss(bf1, cosines, batch.labels);

    std::vector<int> effective;
    for (const SampleRecord& rec : fwd.records) {
      effective.push_back(rec.effective_label);
      if (rec.corrected) ++corrected_seen;
    }
    const ForwardBatch relabeled = forward_loss(arc, cosines, effective);
    CHECK(fwd.mean_loss == doctest::Approx(relabeled.mean_loss).epsilon(1e-15));

    const HeadGradients gb = backward(bf1, fwd, batch.features, batch.centers);
    const HeadGradients ga =
        backward(arc, relabeled, batch.features, batch.centers);
    CHECK((ga.features - gb.features).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((ga.centers - gb.centers).cwiseAbs().maxCoeff() <= 1e-15);
  }
  CHECK(corrected_seen > 0);  // the property must actually be exercised
}

TEST_CASE("finite_diff_audit spec anchors") {
  // Linear model + NormFace is the best-conditioned case.
  const AuditOutcome linear_norm = audit_head(HeadKind::NormFace, 5, 0);
  CHECK(linear_norm.max_error <= 1e-6);

  // BoundaryFace with hard and corrected samples present.
  const AuditOutcome bface = audit_head(HeadKind::BoundaryFace, 7, 8);
  CHECK(bface.max_error <= 1e-5);
  CHECK(bface.hard_samples >= 1);
  CHECK(bface.corrected_samples >= 1);
}
