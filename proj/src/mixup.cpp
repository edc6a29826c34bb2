#include "sgir/mixup.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgir {

size_t AnchorTable::unmasked() const {
  size_t n = 0;
  for (bool b : mask) n += b ? 1 : 0;
  return n;
}

AnchorTable build_anchor_table(const std::vector<LatentEntry>& entries,
                               const IntervalPartition& part) {
  if (entries.empty()) throw ConfigError("anchor table: no source entries");
  const Eigen::Index d = entries.front().h.cols();
  AnchorTable table;
  table.z = Eigen::MatrixXd::Zero(part.size(), d);
  table.mask.assign(part.size(), false);
  std::vector<long> counts(part.size(), 0);
  for (const auto& e : entries) {
    if (e.h.cols() != d) throw ShapeError("anchor table: representation width mismatch");
    const int i = assign_interval(part, e.label);
    table.z.row(i) += e.h;
    ++counts[i];
  }
  for (int i = 0; i < part.size(); ++i) {
    if (counts[i] > 0) {
      table.z.row(i) /= static_cast<Real>(counts[i]);
      table.mask[i] = true;
    }
  }
  return table;
}

Real sample_lambda(Real beta, Rng& rng) {
  if (beta <= 0.0) throw ConfigError("mixup: beta must be positive");
  const Real u = rng.uniform01();
  const Real lp = 1.0 - std::pow(u, 1.0 / beta);
  return std::max(lp, 1.0 - lp);
}

Real folded_lambda_mean(Real beta) {
  return (beta + std::pow(2.0, -beta)) / (beta + 1.0);
}

std::vector<long> apportion_counts(const IntervalPartition& part, const AnchorTable& anchors,
                                   long n_aug) {
  if (n_aug < 0) throw ConfigError("apportion: negative budget");
  const int c = part.size();
  if (static_cast<int>(anchors.mask.size()) != c)
    throw ShapeError("apportion: anchor table does not match partition");
  std::vector<long> counts(c, 0);
  if (n_aug == 0 || anchors.unmasked() == 0) return counts;

  Real total = 0.0;
  for (int i = 0; i < c; ++i)
    if (anchors.mask[i]) total += part.rates[i];
  std::vector<Real> weight(c, 0.0);
  if (total > 0.0) {
    for (int i = 0; i < c; ++i)
      if (anchors.mask[i]) weight[i] = part.rates[i] / total;
  } else {
    // All unmasked rates zero (single populated interval): spread uniformly.
    const Real u = 1.0 / static_cast<Real>(anchors.unmasked());
    for (int i = 0; i < c; ++i)
      if (anchors.mask[i]) weight[i] = u;
  }

  std::vector<Real> remainders(c, 0.0);
  long assigned = 0;
  for (int i = 0; i < c; ++i) {
    const Real q = static_cast<Real>(n_aug) * weight[i];
    counts[i] = static_cast<long>(std::floor(q));
    remainders[i] = q - static_cast<Real>(counts[i]);
    assigned += counts[i];
  }
  std::vector<int> order;
  for (int i = 0; i < c; ++i)
    if (anchors.mask[i]) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
    return a < b;
  });
  for (size_t k = 0; assigned < n_aug && k < order.size(); ++k) {
    ++counts[order[k]];
    ++assigned;
  }
  // Rare: still short because every remainder became an integer; round-robin.
  for (size_t k = 0; assigned < n_aug; k = (k + 1) % order.size()) {
    ++counts[order[k]];
    ++assigned;
  }
  return counts;
}

std::vector<AugExample> build_haug(const AnchorTable& anchors, const IntervalPartition& part,
                                   const std::vector<LatentEntry>& pool, long n_aug, Real beta,
                                   uint64_t seed, uint64_t iteration) {
  std::vector<AugExample> out;
  if (n_aug == 0) return out;
  if (pool.empty()) return out;
  const std::vector<long> quotas = apportion_counts(part, anchors, n_aug);

  // Pool sorted by label for nearest-label lookup.
  std::vector<size_t> by_label(pool.size());
  std::iota(by_label.begin(), by_label.end(), 0);
  std::sort(by_label.begin(), by_label.end(), [&](size_t a, size_t b) {
    if (pool[a].label != pool[b].label) return pool[a].label < pool[b].label;
    return pool[a].id < pool[b].id;
  });

  for (int i = 0; i < part.size(); ++i) {
    const long quota = std::min<long>(quotas[i], static_cast<long>(pool.size()));
    if (quota <= 0) continue;
    const Real a = part.centers[i];
    // Candidates ranked by (|label - a|, id).
    std::vector<size_t> cand(by_label);
    std::stable_sort(cand.begin(), cand.end(), [&](size_t x, size_t y) {
      const Real dx = std::abs(pool[x].label - a);
      const Real dy = std::abs(pool[y].label - a);
      if (dx != dy) return dx < dy;
      return pool[x].id < pool[y].id;
    });
    Rng rng = substream(seed, "mixup-lambda", iteration, static_cast<uint64_t>(i));
    for (long k = 0; k < quota; ++k) {
      const LatentEntry& partner = pool[cand[static_cast<size_t>(k)]];
      const Real lambda = sample_lambda(beta, rng);
      AugExample ex;
      ex.h_tilde = lambda * anchors.z.row(i) + (1.0 - lambda) * partner.h;
      ex.y_tilde = lambda * a + (1.0 - lambda) * partner.label;
      ex.anchor_interval = i;
      ex.partner_id = partner.id;
      ex.lambda = lambda;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace sgir
