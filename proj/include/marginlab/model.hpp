#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace marginlab {

// Trainable embedding map: an optional hidden affine layer with ReLU followed
// by an affine projection to the embedding space, plus the class-center
// matrix (the weights of the final classification layer). Stored parameters
// are unconstrained; features and centers are l2-normalized inside each
// forward pass of the loss.
struct EmbeddingModel {
  Eigen::MatrixXd hidden_weight;  // h x D (0 x 0 when linear)
  Eigen::VectorXd hidden_bias;    // h
  Eigen::MatrixXd output_weight;  // d x h, or d x D when linear
  Eigen::VectorXd output_bias;    // d
  Eigen::MatrixXd centers;        // n x d

  bool has_hidden() const { return hidden_weight.rows() > 0; }
  int input_dim() const {
    return static_cast<int>(has_hidden() ? hidden_weight.cols()
                                         : output_weight.cols());
  }
  int embed_dim() const { return static_cast<int>(output_weight.rows()); }
  int num_classes() const { return static_cast<int>(centers.rows()); }
  Eigen::Index parameter_count() const;

  // He-scaled random init; hidden_dim = 0 builds a linear model.
  static EmbeddingModel init(int input_dim, int hidden_dim, int embed_dim,
                             int num_classes, std::uint64_t seed);

  // Raw (not normalized) embeddings for a batch of inputs (N x D).
  Eigen::MatrixXd embed(const Eigen::MatrixXd& inputs) const;
};

// Intermediate activations kept for the backward pass.
struct ModelActivations {
  Eigen::MatrixXd hidden_pre;  // N x h
  Eigen::MatrixXd hidden_act;  // N x h
  Eigen::MatrixXd embeddings;  // N x d, raw
};

// Parameter gradients for everything except the centers (whose gradient comes
// straight out of the loss head).
struct ModelGradients {
  Eigen::MatrixXd hidden_weight;
  Eigen::VectorXd hidden_bias;
  Eigen::MatrixXd output_weight;
  Eigen::VectorXd output_bias;
};

ModelActivations model_forward(const EmbeddingModel& model,
                               const Eigen::MatrixXd& inputs);

// Backprop of d(loss)/d(embeddings) through the affine/ReLU stack.
ModelGradients model_backward(const EmbeddingModel& model,
                              const ModelActivations& acts,
                              const Eigen::MatrixXd& inputs,
                              const Eigen::MatrixXd& grad_embeddings);

}  // namespace marginlab
