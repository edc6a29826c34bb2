#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgir/binning.hpp"
#include "sgir/confidence.hpp"
#include "sgir/graph.hpp"

namespace sgir {

struct PseudoLabeled {
  const Graph* graph = nullptr;
  Real pseudo_label = 0.0;
  Real sigma = 0.0;
  int interval = 0;  // index in the pseudo partition
};

struct GconfResult {
  std::vector<PseudoLabeled> selected;  // interval-ascending, sigma-descending
  size_t scored = 0;
  size_t survivors = 0;  // after the confidence filter
};

// Confidence-filtered, reverse-sampled pseudo-label selection:
//   1. drop scores with sigma < tau,
//   2. bucket survivors by the interval of their predicted label,
//   3. per interval keep ceil(rate_i * survivors_i) highest-sigma entries
//      (ties by graph id ascending).
// The result is rebuilt from scratch each call; rates come from the labeled
// training frequencies stored in the partition.  uniform_rates ignores the
// stored rates and keeps every survivor (rate 1 everywhere).
GconfResult build_gconf(const std::vector<ConfidenceScore>& scores,
                        const std::vector<const Graph*>& graphs, Real tau,
                        const IntervalPartition& part, bool uniform_rates = false);

struct PseudoQuality {
  size_t count = 0;
  std::optional<Real> mae;                    // vs hidden ground truths
  std::map<std::string, size_t> region_counts;  // by pseudo-label interval region
};

// Diagnostic only: compares pseudo-labels with the hidden ground-truth side
// channel.  Errors if any selected graph lacks one.  Region routing uses the
// pseudo partition's build frequencies with the given shot map.
PseudoQuality pseudo_label_quality(const std::vector<PseudoLabeled>& selected,
                                   const IntervalPartition& part, const ShotRegionMap& shot);

}  // namespace sgir
