#include "sgir/confidence.hpp"

#include <algorithm>
#include <cmath>

namespace sgir {

namespace {

Real population_variance(const Eigen::VectorXd& v) {
  const Real mu = v.mean();
  return (v.array() - mu).square().sum() / static_cast<Real>(v.size());
}

Real sigma_from_variance(Real var) { return 1.0 / std::max(var, kVarianceFloor); }

}  // namespace

EnvPool build_env_pool(const GreaModel& model, const std::vector<const Graph*>& env_graphs) {
  if (env_graphs.empty()) throw ConfigError("confidence: environment pool is empty");
  NoGradGuard ng;
  EnvPool pool;
  pool.h_env.resize(static_cast<Eigen::Index>(env_graphs.size()), model.cfg.hidden_dim);
  for (size_t i = 0; i < env_graphs.size(); ++i) {
    RationaleOutput out = encode_with_rationale(model, *env_graphs[i]);
    pool.h_env.row(static_cast<Eigen::Index>(i)) = out.h_e.value().row(0);
  }
  return pool;
}

ConfidenceScore score_gration_cached(const Mlp<Real>& decoder, const std::string& id,
                                     const Eigen::RowVectorXd& h_r, const EnvPool& pool) {
  if (pool.h_env.rows() < 2)
    throw ConfigError("gration confidence: needs at least two environments");
  NoGradGuard ng;
  TensorD::Matrix rows = pool.h_env;
  rows.rowwise() += h_r;
  const Eigen::VectorXd preds = decoder.forward(TensorD::constant(std::move(rows))).value().col(0);
  ConfidenceScore score;
  score.graph_id = id;
  score.method = ConfidenceMethod::GRation;
  score.predicted = decoder.forward(TensorD::constant(h_r)).item();
  score.sigma = sigma_from_variance(population_variance(preds));
  return score;
}

ConfidenceScore score_gration(const GreaModel& model, const Graph& target, const EnvPool& pool) {
  NoGradGuard ng;
  RationaleOutput out = encode_with_rationale(model, target);
  return score_gration_cached(model.decoder, target.id, out.h_r.value().row(0), pool);
}

ConfidenceScore score_dropout(const GreaModel& model, const Graph& target, int n_samples,
                              Real rate, Rng& rng) {
  if (n_samples < 2) throw ConfigError("dropout confidence: needs at least two samples");
  if (rate <= 0.0 || rate >= 1.0)
    throw ConfigError("dropout confidence: rate must be in (0, 1)");
  NoGradGuard ng;
  Eigen::VectorXd preds(n_samples);
  for (int s = 0; s < n_samples; ++s) {
    RationaleOutput out = encode_with_rationale_dropout(model, target, rate, rng);
    preds(s) = model.decoder.forward_dropout(out.h_r, rate, rng).item();
  }
  ConfidenceScore score;
  score.graph_id = target.id;
  score.method = ConfidenceMethod::Dropout;
  score.predicted = preds.mean();
  score.sigma = sigma_from_variance(population_variance(preds));
  return score;
}

Real compute_threshold(std::vector<Real> sigmas, Real pct) {
  if (sigmas.empty()) throw ConfigError("threshold: empty sigma list");
  if (!(pct >= 0.0 && pct <= 100.0)) throw ConfigError("threshold: percentile outside [0, 100]");
  std::sort(sigmas.begin(), sigmas.end());
  const size_t n = sigmas.size();
  if (n == 1) return sigmas[0];
  const Real rank = pct / 100.0 * static_cast<Real>(n - 1);
  const auto lo = static_cast<size_t>(rank);
  if (lo + 1 >= n) return sigmas[n - 1];
  const Real frac = rank - static_cast<Real>(lo);
  return sigmas[lo] + frac * (sigmas[lo + 1] - sigmas[lo]);
}

}  // namespace sgir
