#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sgir/binning.hpp"
#include "sgir/common.hpp"
#include "sgir/rng.hpp"

namespace sgir {

// Source pools for the two sides of a mixup pair: anchor means (z) and real
// partners (h).
enum class MixSource { Imb, ImbConf, ImbUnlabeled };

inline const char* mix_source_name(MixSource s) {
  switch (s) {
    case MixSource::Imb: return "imb";
    case MixSource::ImbConf: return "imb+conf";
    case MixSource::ImbUnlabeled: return "imb+unlabeled";
  }
  return "?";
}

// One latent-space example feeding the anchor table or the partner pool.
struct LatentEntry {
  std::string id;
  Real label = 0.0;          // true, pseudo, or predicted depending on source
  Eigen::RowVectorXd h;      // pooled representation
};

// Per-interval anchor representations: row i is the mean representation of
// the entries whose label falls in interval i; intervals with no entries are
// masked and never sampled.
struct AnchorTable {
  Eigen::MatrixXd z;       // C x d
  std::vector<bool> mask;  // C; true = anchor available
  size_t unmasked() const;
};

AnchorTable build_anchor_table(const std::vector<LatentEntry>& entries,
                               const IntervalPartition& part);

// lambda' = 1 - u^(1/beta) (inverse-transform Beta(1, beta)), folded to
// lambda = max(lambda', 1 - lambda') in [0.5, 1].
Real sample_lambda(Real beta, Rng& rng);

// Closed-form mean of the folded draw, for statistical tests:
// E[lambda] = (beta + 2^-beta) / (beta + 1).
Real folded_lambda_mean(Real beta);

// Largest-remainder apportionment of n_aug over unmasked anchors,
// proportional to the partition's reverse sampling rates.  Sum equals n_aug
// whenever any unmasked rate is positive (degenerate all-zero rates fall back
// to uniform weights).
std::vector<long> apportion_counts(const IntervalPartition& part, const AnchorTable& anchors,
                                   long n_aug);

struct AugExample {
  Eigen::RowVectorXd h_tilde;
  Real y_tilde = 0.0;
  int anchor_interval = 0;
  std::string partner_id;
  Real lambda = 1.0;
};

// Label-anchored synthesis: for each unmasked anchor i with quota n_i, pair
// z_i with the n_i pool entries whose labels are closest to the interval
// center a_i (ties by id), each with a fresh lambda:
//   h~ = lambda * z_i + (1 - lambda) * h_j
//   y~ = lambda * a_i + (1 - lambda) * y_j
// Quotas are capped by the pool size.  Lambda draws come from per-anchor rng
// substreams of (seed, iteration), so pool composition changes leave other
// anchors' streams untouched.  Outputs are constants: no gradient flows into
// the stored representations.
std::vector<AugExample> build_haug(const AnchorTable& anchors, const IntervalPartition& part,
                                   const std::vector<LatentEntry>& pool, long n_aug, Real beta,
                                   uint64_t seed, uint64_t iteration);

}  // namespace sgir
