#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sgir/binning.hpp"

namespace sgir {

// Mean absolute error.  Errors on empty or mismatched inputs.
Real mae_metric(const std::vector<Real>& preds, const std::vector<Real>& truths);

// Geometric mean of absolute errors: exp(mean(log(max(|err|, eps)))).  The
// clamp keeps zero errors finite; clamped_out reports how often it fired so
// reports can flag it (a clamped GM is biased upward).
inline constexpr Real kGmErrorFloor = 1e-8;
Real gm_metric(const std::vector<Real>& preds, const std::vector<Real>& truths,
               size_t* clamped_out = nullptr);

struct RegionStats {
  size_t count = 0;
  Real mae = 0.0;
  Real gm = 0.0;
  size_t gm_clamped = 0;
};

// Metrics routed by the interval of the TRUE label; regions come from the
// partition's build frequencies (the labeled training split) via the shot
// map.  Regions with no members are absent.
struct RegionReport {
  RegionStats all;
  std::optional<RegionStats> many, medium, few;

  const std::optional<RegionStats>& region(ShotRegion r) const {
    switch (r) {
      case ShotRegion::Many: return many;
      case ShotRegion::Medium: return medium;
      default: return few;
    }
  }
};

RegionReport region_report(const std::vector<Real>& preds, const std::vector<Real>& truths,
                           const IntervalPartition& part, const ShotRegionMap& shot);

// Similarity of a prediction to interval i: the reciprocal distance to the
// interval center, capped by eps.
inline constexpr Real kMarginEps = 1e-9;
Real interval_similarity(Real pred, Real center, Real eps = kMarginEps);

// Margin of one prediction routed to its true interval:
//   gamma = S_true - max_{j != true} S_j.
// Positive iff the true interval's center is the strict nearest.  A
// single-interval partition has no competitor; its margin is S_true.
Real prediction_margin(Real pred, int true_interval, const IntervalPartition& part,
                       Real eps = kMarginEps);

struct MarginRow {
  int interval = 0;
  size_t members = 0;
  Real min_margin = 0.0;   // interval margin: min over members
  Real error_rate = 0.0;   // fraction of members with margin <= 0
  Real proxy = 0.0;        // 1 / (max(min_margin, eps) * sqrt(members))
};

// Per-interval margin table over an evaluation set; intervals with no members
// are omitted.  Rows are routed by true labels.
struct MarginDiagnostics {
  std::vector<MarginRow> rows;
};

MarginDiagnostics margin_diagnostics(const std::vector<Real>& preds,
                                     const std::vector<Real>& truths,
                                     const IntervalPartition& part, Real eps = kMarginEps);

// Spearman rank correlation with average ranks for ties; 0 when either input
// is constant (no ordering information).  Errors on mismatched/short input.
Real spearman(const std::vector<Real>& xs, const std::vector<Real>& ys);

struct BoundTrendRow {
  int interval = 0;
  long train_count = 0;
  Real error_rate = 0.0;
};

// Interval-count-vs-error diagnostic: pairs each populated margin row with the
// training frequency of its interval and reports the rank correlation
// (expected negative when sparse intervals err more).  correlation is absent
// with fewer than two populated intervals.
struct BoundTrend {
  std::vector<BoundTrendRow> rows;
  std::optional<Real> correlation;
};

BoundTrend bound_trend(const MarginDiagnostics& diag, const IntervalPartition& part);

}  // namespace sgir
