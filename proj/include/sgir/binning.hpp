#pragma once

#include <vector>

#include "sgir/common.hpp"

namespace sgir {

// Half-open label intervals [b_i, b_{i+1}) with per-interval centers,
// build-set frequencies, and reverse sampling rates.  The top boundary is
// nudged up by one ulp so the maximum build label falls inside the last
// interval.
struct IntervalPartition {
  std::vector<Real> boundaries;   // C+1, strictly increasing
  std::vector<Real> centers;      // C
  std::vector<long> frequencies;  // C, counts from the build labels
  std::vector<Real> rates;        // C, reverse sampling rates in [0, 1]

  int size() const { return static_cast<int>(centers.size()); }
};

// Equal-width partition over [min(labels), max(labels)].  Errors: empty
// labels, degenerate range (all labels equal), width underflow.
IntervalPartition build_partition(const std::vector<Real>& labels, int num_intervals);

// Partition from an explicit strictly-increasing boundary list.  Every build
// label must fall inside [b_0, b_C); a label equal to b_C triggers the same
// one-ulp nudge as the equal-width build.
IntervalPartition build_partition_explicit(const std::vector<Real>& labels,
                                           std::vector<Real> boundaries);

// Total assignment: in-range labels by binary search over the half-open
// intervals, out-of-range labels clamp to the nearest-center interval (first
// or last).  Returns a 0-based interval index.
int assign_interval(const IntervalPartition& part, Real y);

// Same boundaries and centers, frequencies recounted over new labels (clamped
// assignment) and rates recomputed.  All-zero recounts yield all-zero rates.
IntervalPartition recount_partition(const IntervalPartition& part,
                                    const std::vector<Real>& labels);

// Frequency reversal: the interval with the i-th biggest frequency receives
// the i-th smallest one, then rates are normalized by max(freq).  Ties in mu
// are broken so the lower interval index receives the larger reversed value.
// Errors on an empty or all-zero vector.
std::vector<Real> reverse_sampling_rates(const std::vector<long>& frequencies);

enum class ShotRegion { Many, Medium, Few };

inline const char* shot_region_name(ShotRegion r) {
  switch (r) {
    case ShotRegion::Many: return "many";
    case ShotRegion::Medium: return "medium";
    case ShotRegion::Few: return "few";
  }
  return "?";
}

// Routes an interval frequency to a shot region: many iff mu >= t_many,
// few iff mu < t_few, medium otherwise.
struct ShotRegionMap {
  long t_many = 100;
  long t_few = 20;

  ShotRegionMap() = default;
  ShotRegionMap(long many, long few) : t_many(many), t_few(few) {
    if (t_few < 1 || t_many <= t_few)
      throw ConfigError("shot thresholds must satisfy t_many > t_few >= 1");
  }

  ShotRegion region(long mu) const {
    if (mu >= t_many) return ShotRegion::Many;
    if (mu < t_few) return ShotRegion::Few;
    return ShotRegion::Medium;
  }
};

}  // namespace sgir
