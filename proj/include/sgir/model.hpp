#pragma once

#include <vector>

#include "sgir/graph.hpp"
#include "sgir/nn.hpp"

namespace sgir {

struct ModelConfig {
  int feature_dim = 0;
  int hidden_dim = 64;
  int gin_layers = 3;
};

// Encoder with a rationale/environment split: a sigmoid node-score head m
// gates the node representations H into a rationale part and its complement.
//   h   = sum_k H_k          h_r = sum_k m_k * H_k      h_e = sum_k (1-m_k) * H_k
// so h_r + h_e = h by construction.  The decoder maps pooled representations
// to a scalar and always has exactly three layers.
struct GreaModel {
  ModelConfig cfg;
  Gin<Real> encoder;
  Mlp<Real> score_head;  // d -> d -> 1, sigmoid output
  Mlp<Real> decoder;     // d -> d -> d -> 1

  static GreaModel make(const ModelConfig& cfg, Rng& rng);
  std::vector<NamedParam<Real>> params();
};

// Per-graph encoder outputs.  All tensors stay on the tape so losses built
// from them backpropagate into the encoder and head.
struct RationaleOutput {
  TensorD m;    // K x 1 node scores in [0, 1]
  TensorD h;    // 1 x d pooled representation
  TensorD h_r;  // 1 x d rationale part
  TensorD h_e;  // 1 x d environment part
};

RationaleOutput encode_with_rationale(const GreaModel& model, const Graph& g);

// Stochastic variant for dropout-based confidence: inverted dropout after
// every encoder layer and inside the decoder hidden layers.
RationaleOutput encode_with_rationale_dropout(const GreaModel& model, const Graph& g,
                                              Real rate, Rng& rng);

// B x B matrix with entry (i, j) = decoder(h_r_i + h_e_j): every rationale
// representation evaluated in every environment of the batch.
TensorD cross_predictions(const Mlp<Real>& decoder, const std::vector<RationaleOutput>& batch);

// Inference path: decoder applied to the rationale representation.
Real predict(const GreaModel& model, const Graph& g);

struct GreaLossHyper {
  Real gamma_size = 0.5;   // target mean node-score
  Real temperature = 1.0;  // label-distance temperature for the batch weights
  Real regu_coeff = 1.0;
};

struct GreaLossParts {
  Real rationale_mae = 0.0;   // batch MAE of decoder on rationale parts
  Real env_expectation = 0.0; // weighted mean over environments of the abs error
  Real env_variance = 0.0;    // weighted variance over environments of the abs error
  Real regu = 0.0;            // |mean(m) - gamma_size| averaged over the batch
  std::vector<Real> weights;  // batch softmax of summed label distances
};

struct GreaLossResult {
  TensorD total;
  GreaLossParts parts;
};

// Loss over one labeled batch:
//   total = MAE(f(h_r), y)
//         + sum_i w_i * mean_j |P_ij - y_i|
//         + sum_i w_i * var_j |P_ij - y_i|        (population variance)
//         + regu_coeff * mean_i |mean(m_i) - gamma_size|
// with w = softmax_i(sum_b |y_i - y_b| / temperature), so outliers in label
// space carry more weight.  The weights are data-dependent constants.
GreaLossResult grea_loss(const GreaModel& model, const std::vector<RationaleOutput>& batch,
                         const std::vector<Real>& labels, const GreaLossHyper& hyper);

// Batch weights alone (exposed for tests): softmax of s_i = sum_b |y_i - y_b| / t.
std::vector<Real> batch_weights(const std::vector<Real>& labels, Real temperature);

}  // namespace sgir
