#include "sgir/model.hpp"

#include <cmath>
#include <limits>

namespace sgir {

GreaModel GreaModel::make(const ModelConfig& cfg, Rng& rng) {
  if (cfg.feature_dim < 1) throw ConfigError("model: feature_dim must be positive");
  if (cfg.hidden_dim < 1) throw ConfigError("model: hidden_dim must be positive");
  if (cfg.gin_layers < 1) throw ConfigError("model: gin_layers must be positive");
  GreaModel m;
  m.cfg = cfg;
  const Eigen::Index d = cfg.hidden_dim;
  m.encoder = Gin<Real>::make(cfg.feature_dim, d, cfg.gin_layers, rng);
  m.score_head = Mlp<Real>::make({d, d, 1}, {Act::Relu, Act::Sigmoid}, rng);
  m.decoder = Mlp<Real>::make({d, d, d, 1}, {Act::Relu, Act::Relu, Act::Identity}, rng);
  return m;
}

std::vector<NamedParam<Real>> GreaModel::params() {
  std::vector<NamedParam<Real>> out;
  encoder.collect("encoder", out);
  score_head.collect("score_head", out);
  decoder.collect("decoder", out);
  return out;
}

namespace {

RationaleOutput split_pooled(const TensorD& h_nodes, const TensorD& m) {
  RationaleOutput out;
  out.m = m;
  out.h = sum_rows(h_nodes);
  out.h_r = matmul(transpose(m), h_nodes);
  TensorD ones = TensorD::constant(TensorD::Matrix::Ones(m.rows(), 1));
  out.h_e = matmul(transpose(sub(ones, m)), h_nodes);
  return out;
}

}  // namespace

RationaleOutput encode_with_rationale(const GreaModel& model, const Graph& g) {
  TensorD x = TensorD::constant(g.x);
  TensorD h_nodes = model.encoder.forward(x, g.directed_edges());
  TensorD m = model.score_head.forward(h_nodes);
  return split_pooled(h_nodes, m);
}

RationaleOutput encode_with_rationale_dropout(const GreaModel& model, const Graph& g,
                                              Real rate, Rng& rng) {
  TensorD x = TensorD::constant(g.x);
  const auto pairs = g.directed_edges();
  TensorD h = x;
  for (size_t l = 0; l < model.encoder.layer_mlps.size(); ++l) {
    TensorD one_plus_eps = add(model.encoder.eps[l], TensorD::scalar(1.0));
    TensorD agg = add(mul_scalar(h, one_plus_eps), scatter_add_rows(h, pairs, h.rows()));
    h = model.encoder.layer_mlps[l].forward(agg);
    h = dropout(h, rate, rng);
  }
  TensorD m = model.score_head.forward(h);
  return split_pooled(h, m);
}

TensorD cross_predictions(const Mlp<Real>& decoder, const std::vector<RationaleOutput>& batch) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  if (b == 0) throw ShapeError("cross_predictions: empty batch");
  std::vector<TensorD> hr, he;
  hr.reserve(batch.size());
  he.reserve(batch.size());
  for (const auto& out : batch) {
    hr.push_back(out.h_r);
    he.push_back(out.h_e);
  }
  TensorD hr_mat = concat_rows(hr);                     // B x d
  TensorD he_mat = concat_rows(he);                     // B x d
  TensorD rows = add(repeat_rows(hr_mat, b), tile_rows(he_mat, b));  // B^2 x d
  TensorD flat = decoder.forward(rows);                 // B^2 x 1
  return reshape_rm(flat, b, b);
}

Real predict(const GreaModel& model, const Graph& g) {
  NoGradGuard ng;
  RationaleOutput out = encode_with_rationale(model, g);
  return model.decoder.forward(out.h_r).item();
}

std::vector<Real> batch_weights(const std::vector<Real>& labels, Real temperature) {
  if (temperature <= 0.0) throw ConfigError("batch weights: temperature must be positive");
  const size_t b = labels.size();
  std::vector<Real> s(b, 0.0);
  for (size_t i = 0; i < b; ++i)
    for (size_t j = 0; j < b; ++j) s[i] += std::abs(labels[i] - labels[j]);
  Real mx = -std::numeric_limits<Real>::infinity();
  for (size_t i = 0; i < b; ++i) {
    s[i] /= temperature;
    mx = std::max(mx, s[i]);
  }
  Real denom = 0.0;
  for (size_t i = 0; i < b; ++i) {
    s[i] = std::exp(s[i] - mx);
    denom += s[i];
  }
  for (auto& v : s) v /= denom;
  return s;
}

GreaLossResult grea_loss(const GreaModel& model, const std::vector<RationaleOutput>& batch,
                         const std::vector<Real>& labels, const GreaLossHyper& hyper) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  if (b == 0) throw ShapeError("grea_loss: empty batch");
  if (labels.size() != batch.size()) throw ShapeError("grea_loss: label count mismatch");

  TensorD::Matrix y(b, 1);
  for (Eigen::Index i = 0; i < b; ++i) y(i, 0) = labels[i];
  TensorD y_col = TensorD::constant(y);

  // Rationale predictions against true labels.
  std::vector<TensorD> hr;
  hr.reserve(batch.size());
  for (const auto& out : batch) hr.push_back(out.h_r);
  TensorD pred_r = model.decoder.forward(concat_rows(hr));  // B x 1
  TensorD l_rat = mae(pred_r, y_col);

  // Every rationale in every environment; absolute errors against the
  // rationale's own label.
  TensorD p = cross_predictions(model.decoder, batch);  // B x B
  TensorD::Matrix y_rows(b, b);
  for (Eigen::Index i = 0; i < b; ++i) y_rows.row(i).setConstant(labels[i]);
  TensorD err = abs(sub(p, TensorD::constant(y_rows)));  // B x B

  TensorD inv_b = TensorD::constant(TensorD::Matrix::Constant(b, 1, 1.0 / static_cast<Real>(b)));
  TensorD mean_j = matmul(err, inv_b);                         // B x 1
  TensorD meansq_j = matmul(mul(err, err), inv_b);             // B x 1
  TensorD var_j = sub(meansq_j, mul(mean_j, mean_j));          // B x 1, population

  const std::vector<Real> w = batch_weights(labels, hyper.temperature);
  TensorD::Matrix wm(1, b);
  for (Eigen::Index i = 0; i < b; ++i) wm(0, i) = w[i];
  TensorD w_row = TensorD::constant(wm);
  TensorD l_env_mean = matmul(w_row, mean_j);  // 1 x 1
  TensorD l_env_var = matmul(w_row, var_j);    // 1 x 1

  // Gate size regularizer: mean node-score pulled toward gamma_size.
  std::vector<TensorD> m_means;
  m_means.reserve(batch.size());
  for (const auto& out : batch) m_means.push_back(mean(out.m));
  TensorD m_col = concat_rows(m_means);  // B x 1
  TensorD gamma = TensorD::constant(TensorD::Matrix::Constant(b, 1, hyper.gamma_size));
  TensorD l_regu = mean(abs(sub(m_col, gamma)));

  TensorD total = add(add(l_rat, l_env_mean), add(l_env_var, scale(l_regu, hyper.regu_coeff)));

  GreaLossResult res;
  res.total = total;
  res.parts.rationale_mae = l_rat.item();
  res.parts.env_expectation = l_env_mean.item();
  res.parts.env_variance = l_env_var.item();
  res.parts.regu = l_regu.item();
  res.parts.weights = w;
  return res;
}

}  // namespace sgir
