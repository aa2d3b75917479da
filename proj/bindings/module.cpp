#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "marginlab/eval.hpp"
#include "marginlab/experiment.hpp"
#include "marginlab/heads.hpp"
#include "marginlab/hypersphere.hpp"
#include "marginlab/io.hpp"
#include "marginlab/model.hpp"
#include "marginlab/noisegen.hpp"
#include "marginlab/trainer.hpp"

namespace py = pybind11;
using namespace marginlab;

PYBIND11_MODULE(_core, m) {
  m.doc() = "angular-margin loss laboratory (C++ core)";

  // -- geometry ------------------------------------------------------------
  m.def(
      "normalize",
      [](const Eigen::VectorXd& v) { return normalize(v).coords(); },
      py::arg("v"));
  m.def("cosine_matrix", &cosine_matrix, py::arg("features"),
        py::arg("centers"));
  m.def("angular_add", &angular_add, py::arg("cos_theta"), py::arg("margin"));

  // -- heads ---------------------------------------------------------------
  py::enum_<HeadKind>(m, "HeadKind")
      .value("NormFace", HeadKind::NormFace)
      .value("ArcFace", HeadKind::ArcFace)
      .value("CosFace", HeadKind::CosFace)
      .value("Focal", HeadKind::Focal)
      .value("MVArc", HeadKind::MVArc)
      .value("Curricular", HeadKind::Curricular)
      .value("BoundaryF1", HeadKind::BoundaryF1)
      .value("BoundaryFace", HeadKind::BoundaryFace);

  py::class_<HeadConfig>(m, "HeadConfig")
      .def(py::init([](const std::string& kind) {
             return default_head(head_from_name(kind));
           }),
           py::arg("kind") = "arcface")
      .def_readwrite("kind", &HeadConfig::kind)
      .def_readwrite("scale", &HeadConfig::scale)
      .def_readwrite("margin", &HeadConfig::margin)
      .def_readwrite("t", &HeadConfig::t)
      .def_readwrite("lambda_", &HeadConfig::lambda)
      .def_readwrite("focal_gamma", &HeadConfig::focal_gamma)
      .def_readwrite("correction_enabled", &HeadConfig::correction_enabled)
      .def_readwrite("curricular_alpha", &HeadConfig::curricular_alpha);

  py::class_<SampleRecord>(m, "SampleRecord")
      .def_readonly("original_label", &SampleRecord::original_label)
      .def_readonly("effective_label", &SampleRecord::effective_label)
      .def_readonly("corrected", &SampleRecord::corrected)
      .def_readonly("hard", &SampleRecord::hard)
      .def_readonly("regularizer", &SampleRecord::regularizer)
      .def_readonly("loss", &SampleRecord::loss);

  py::class_<ForwardBatch>(m, "ForwardBatch")
      .def_readonly("mean_loss", &ForwardBatch::mean_loss)
      .def_readonly("records", &ForwardBatch::records)
      .def_readonly("t_used", &ForwardBatch::t_used)
      .def_readonly("t_updated", &ForwardBatch::t_updated);

  m.def("positive_transform", &positive_transform);
  m.def("negative_transform", &negative_transform);
  m.def(
      "correction_check",
      [](const Eigen::RowVectorXd& row, int label, double margin)
          -> std::optional<int> { return correction_check(row, label, margin); },
      py::arg("row"), py::arg("label"), py::arg("margin"));
  m.def("boundary_regularizer", &boundary_regularizer, py::arg("row"),
        py::arg("label"), py::arg("margin"));
  m.def("focal_indicator", &focal_indicator, py::arg("p"),
        py::arg("focal_gamma"));
  m.def("forward_loss", &forward_loss, py::arg("config"), py::arg("cosines"),
        py::arg("labels"));
  m.def(
      "backward",
      [](const HeadConfig& config, const ForwardBatch& batch,
         const Eigen::MatrixXd& features, const Eigen::MatrixXd& centers) {
        HeadGradients grads = backward(config, batch, features, centers);
        return py::make_tuple(grads.features, grads.centers);
      },
      py::arg("config"), py::arg("batch"), py::arg("features"),
      py::arg("centers"));

  // -- data ----------------------------------------------------------------
  py::class_<DatasetSpec>(m, "DatasetSpec")
      .def(py::init<>())
      .def_readwrite("num_classes", &DatasetSpec::num_classes)
      .def_readwrite("samples_per_class", &DatasetSpec::samples_per_class)
      .def_readwrite("input_dim", &DatasetSpec::input_dim)
      .def_readwrite("concentration", &DatasetSpec::concentration)
      .def_readwrite("num_distractor_classes",
                     &DatasetSpec::num_distractor_classes)
      .def_readwrite("num_holdout_classes", &DatasetSpec::num_holdout_classes)
      .def_readwrite("seed", &DatasetSpec::seed);

  py::class_<NoisyDataset>(m, "NoisyDataset")
      .def(py::init<>())
      .def_readwrite("inputs", &NoisyDataset::inputs)
      .def_readwrite("labels", &NoisyDataset::labels)
      .def_readwrite("num_classes", &NoisyDataset::num_classes)
      .def("size", &NoisyDataset::size);

  py::enum_<NoiseKind>(m, "NoiseKind")
      .value("ClosedSet", NoiseKind::ClosedSet)
      .value("OpenSet", NoiseKind::OpenSet);

  py::class_<NoiseEntry>(m, "NoiseEntry")
      .def_readonly("index", &NoiseEntry::index)
      .def_readonly("kind", &NoiseEntry::kind)
      .def_readonly("original_label", &NoiseEntry::original_label)
      .def_readonly("assigned_label", &NoiseEntry::assigned_label);

  py::class_<NoiseLedger>(m, "NoiseLedger")
      .def(py::init<>())
      .def_readonly("entries", &NoiseLedger::entries)
      .def("closed_count", &NoiseLedger::closed_count);

  py::class_<GeneratedData>(m, "GeneratedData")
      .def_readonly("train", &GeneratedData::train)
      .def_readonly("holdout", &GeneratedData::holdout)
      .def_readonly("distractors", &GeneratedData::distractors);

  m.def("generate", &generate, py::arg("spec"));
  m.def("inject_closed_noise", &inject_closed_noise, py::arg("data"),
        py::arg("ratio"), py::arg("seed"));
  m.def("inject_open_noise", &inject_open_noise, py::arg("data"),
        py::arg("ratio"), py::arg("distractors"), py::arg("seed"),
        py::arg("exclude") = std::vector<int>{});

  py::class_<VerificationPair>(m, "VerificationPair")
      .def_readonly("a", &VerificationPair::a)
      .def_readonly("b", &VerificationPair::b)
      .def_readonly("same_identity", &VerificationPair::same_identity);
  m.def("make_verification_pairs", &make_verification_pairs,
        py::arg("holdout"), py::arg("num_pairs"), py::arg("seed"));

  // -- model + trainer -----------------------------------------------------
  py::class_<EmbeddingModel>(m, "EmbeddingModel")
      .def_static("init", &EmbeddingModel::init, py::arg("input_dim"),
                  py::arg("hidden_dim"), py::arg("embed_dim"),
                  py::arg("num_classes"), py::arg("seed"))
      .def_readwrite("hidden_weight", &EmbeddingModel::hidden_weight)
      .def_readwrite("hidden_bias", &EmbeddingModel::hidden_bias)
      .def_readwrite("output_weight", &EmbeddingModel::output_weight)
      .def_readwrite("output_bias", &EmbeddingModel::output_bias)
      .def_readwrite("centers", &EmbeddingModel::centers)
      .def("embed", &EmbeddingModel::embed, py::arg("inputs"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("head", &TrainConfig::head)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("warmup_epochs", &TrainConfig::warmup_epochs)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("lr_milestones", &TrainConfig::lr_milestones)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<IterationRow>(m, "IterationRow")
      .def_readonly("epoch", &IterationRow::epoch)
      .def_readonly("iteration", &IterationRow::iteration)
      .def_readonly("loss", &IterationRow::loss)
      .def_readonly("lr", &IterationRow::lr)
      .def_readonly("detected", &IterationRow::detected)
      .def_readonly("correct_corrections", &IterationRow::correct_corrections)
      .def_readonly("wrong_corrections", &IterationRow::wrong_corrections)
      .def_readonly("hard_count", &IterationRow::hard_count);

  py::class_<EpochRow>(m, "EpochRow")
      .def_readonly("epoch", &EpochRow::epoch)
      .def_readonly("mean_loss", &EpochRow::mean_loss)
      .def_readonly("detected", &EpochRow::detected)
      .def_readonly("correct_corrections", &EpochRow::correct_corrections)
      .def_readonly("wrong_corrections", &EpochRow::wrong_corrections)
      .def_readonly("hard_count", &EpochRow::hard_count);

  py::class_<MetricsLog>(m, "MetricsLog")
      .def_readonly("iterations", &MetricsLog::iterations)
      .def_readonly("epochs", &MetricsLog::epochs)
      .def_readonly("ledger_attached", &MetricsLog::ledger_attached);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("log", &TrainResult::log)
      .def_readonly("curricular_t", &TrainResult::curricular_t);

  m.def("lr_at", &lr_at, py::arg("config"), py::arg("epoch"));
  m.def(
      "train",
      [](const EmbeddingModel& model, const NoisyDataset& data,
         const NoiseLedger* ledger, const TrainConfig& config) {
        return train(model, data, ledger, config);
      },
      py::arg("model"), py::arg("data"), py::arg("ledger"), py::arg("config"));
  m.def("finite_diff_audit", &finite_diff_audit, py::arg("model"),
        py::arg("inputs"), py::arg("labels"), py::arg("head"),
        py::arg("corrupt") = 0.0);

  // -- eval ----------------------------------------------------------------
  py::class_<VerificationResult>(m, "VerificationResult")
      .def_readonly("best_threshold", &VerificationResult::best_threshold)
      .def_readonly("accuracy", &VerificationResult::accuracy)
      .def_readonly("genuine_mean_cos", &VerificationResult::genuine_mean_cos)
      .def_readonly("impostor_mean_cos",
                    &VerificationResult::impostor_mean_cos);

  py::class_<DetectionPoint>(m, "DetectionPoint")
      .def_readonly("epoch", &DetectionPoint::epoch)
      .def_readonly("detected", &DetectionPoint::detected)
      .def_readonly("correct", &DetectionPoint::correct)
      .def_readonly("wrong", &DetectionPoint::wrong)
      .def_readonly("precision", &DetectionPoint::precision)
      .def_readonly("recall", &DetectionPoint::recall);

  py::class_<CorrectionOracleResult>(m, "CorrectionOracleResult")
      .def_readonly("fraction_recovered",
                    &CorrectionOracleResult::fraction_recovered)
      .def_readonly("detections", &CorrectionOracleResult::detections)
      .def_readonly("false_positives",
                    &CorrectionOracleResult::false_positives);

  m.def("sweep_threshold", &sweep_threshold, py::arg("genuine"),
        py::arg("impostor"));
  m.def("verification_accuracy", &verification_accuracy, py::arg("model"),
        py::arg("pairs"), py::arg("holdout"));
  m.def("detection_curve", &detection_curve, py::arg("log"),
        py::arg("ledger"));
  m.def("oracle_correction_test", &oracle_correction_test, py::arg("centers"),
        py::arg("flipped"), py::arg("ledger"), py::arg("margin"));

  // -- persistence ---------------------------------------------------------
  m.def("save_dataset", &save_dataset);
  m.def("load_dataset", &load_dataset);
  m.def("save_ledger", &save_ledger);
  m.def("load_ledger", &load_ledger);
  m.def("save_checkpoint", &save_checkpoint);
  m.def("load_checkpoint", &load_checkpoint);
  m.def("save_metrics_csv", &save_metrics_csv);

  py::register_exception<ZeroVectorError>(m, "ZeroVectorError",
                                          PyExc_ValueError);
  py::register_exception<DimensionMismatchError>(m, "DimensionMismatchError",
                                                 PyExc_ValueError);
}
