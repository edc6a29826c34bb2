#pragma once

#include <string>
#include <vector>

#include "sgir/model.hpp"

namespace sgir {

enum class ConfidenceMethod { GRation, Dropout };

inline const char* confidence_method_name(ConfidenceMethod m) {
  return m == ConfidenceMethod::GRation ? "gration" : "dropout";
}

struct ConfidenceScore {
  std::string graph_id;
  Real predicted = 0.0;
  Real sigma = 0.0;
  ConfidenceMethod method = ConfidenceMethod::GRation;
};

// Zero prediction variance maps to the finite cap 1/kVarianceFloor instead of
// infinity.
inline constexpr Real kVarianceFloor = 1e-12;

// Frozen per-pass context: the environment parts of an environment batch,
// shared by every target scored in the pass.
struct EnvPool {
  Eigen::MatrixXd h_env;  // B x d, one environment representation per row
};

EnvPool build_env_pool(const GreaModel& model, const std::vector<const Graph*>& env_graphs);

// Rationale-swap confidence: the target's rationale part is decoded against
// every environment in the pool; sigma is the reciprocal of the population
// variance of those predictions.  predicted is the plain inference output.
ConfidenceScore score_gration(const GreaModel& model, const Graph& target, const EnvPool& pool);

// Same scoring from an already-computed rationale representation (one encoder
// pass per graph when a whole pool is scored).
ConfidenceScore score_gration_cached(const Mlp<Real>& decoder, const std::string& id,
                                     const Eigen::RowVectorXd& h_r, const EnvPool& pool);

// Stochastic-forward confidence: n dropout passes; predicted is their mean,
// sigma the reciprocal of their population variance.  Deterministic given the
// rng stream.
ConfidenceScore score_dropout(const GreaModel& model, const Graph& target, int n_samples,
                              Real rate, Rng& rng);

// Linear-interpolated percentile of the sigma distribution (the labeled
// training set's scores).  pct in [0, 100]; errors on an empty list.
Real compute_threshold(std::vector<Real> sigmas, Real pct);

}  // namespace sgir
