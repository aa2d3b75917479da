#include "marginlab/model.hpp"

#include <cmath>

#include "marginlab/rng.hpp"

namespace marginlab {

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                              double stddev, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  }
  return m;
}

}  // namespace

Eigen::Index EmbeddingModel::parameter_count() const {
  return hidden_weight.size() + hidden_bias.size() + output_weight.size() +
         output_bias.size() + centers.size();
}

EmbeddingModel EmbeddingModel::init(int input_dim, int hidden_dim,
                                    int embed_dim, int num_classes,
                                    std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingModel model;
  if (hidden_dim > 0) {
    model.hidden_weight =
        random_matrix(hidden_dim, input_dim, std::sqrt(2.0 / input_dim), rng);
    model.hidden_bias = random_matrix(hidden_dim, 1, 0.01, rng);
    model.output_weight =
        random_matrix(embed_dim, hidden_dim, std::sqrt(2.0 / hidden_dim), rng);
  } else {
    model.hidden_weight.resize(0, 0);
    model.hidden_bias.resize(0);
    model.output_weight =
        random_matrix(embed_dim, input_dim, std::sqrt(1.0 / input_dim), rng);
  }
  // A small random output bias keeps an all-negative hidden layer from
  // producing an exactly-zero embedding, which could not be normalized.
  model.output_bias = random_matrix(embed_dim, 1, 0.01, rng);
  model.centers =
      random_matrix(num_classes, embed_dim, std::sqrt(1.0 / embed_dim), rng);
  return model;
}

Eigen::MatrixXd EmbeddingModel::embed(const Eigen::MatrixXd& inputs) const {
  return model_forward(*this, inputs).embeddings;
}

ModelActivations model_forward(const EmbeddingModel& model,
                               const Eigen::MatrixXd& inputs) {
  ModelActivations acts;
  if (model.has_hidden()) {
    acts.hidden_pre = (inputs * model.hidden_weight.transpose()).rowwise() +
                      model.hidden_bias.transpose();
    acts.hidden_act = acts.hidden_pre.cwiseMax(0.0);
    acts.embeddings = (acts.hidden_act * model.output_weight.transpose())
                          .rowwise() +
                      model.output_bias.transpose();
  } else {
    acts.embeddings =
        (inputs * model.output_weight.transpose()).rowwise() +
        model.output_bias.transpose();
  }
  return acts;
}

ModelGradients model_backward(const EmbeddingModel& model,
                              const ModelActivations& acts,
                              const Eigen::MatrixXd& inputs,
                              const Eigen::MatrixXd& grad_embeddings) {
  ModelGradients grads;
  grads.output_bias = grad_embeddings.colwise().sum();
  if (model.has_hidden()) {
    grads.output_weight = grad_embeddings.transpose() * acts.hidden_act;
    Eigen::MatrixXd grad_hidden = grad_embeddings * model.output_weight;
    // ReLU mask; the subgradient at 0 is taken as 0.
    grad_hidden =
        (acts.hidden_pre.array() > 0.0).select(grad_hidden, 0.0);
    grads.hidden_weight = grad_hidden.transpose() * inputs;
    grads.hidden_bias = grad_hidden.colwise().sum();
  } else {
    grads.output_weight = grad_embeddings.transpose() * inputs;
    grads.hidden_weight.resize(0, 0);
    grads.hidden_bias.resize(0);
  }
  return grads;
}

}  // namespace marginlab
