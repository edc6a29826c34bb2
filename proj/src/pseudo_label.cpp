#include "sgir/pseudo_label.hpp"

#include <algorithm>
#include <cmath>

namespace sgir {

GconfResult build_gconf(const std::vector<ConfidenceScore>& scores,
                        const std::vector<const Graph*>& graphs, Real tau,
                        const IntervalPartition& part, bool uniform_rates) {
  if (scores.size() != graphs.size())
    throw ShapeError("build_gconf: score/graph count mismatch");
  GconfResult res;
  res.scored = scores.size();

  std::vector<std::vector<PseudoLabeled>> buckets(part.size());
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!(scores[i].sigma >= tau)) continue;
    PseudoLabeled p;
    p.graph = graphs[i];
    p.pseudo_label = scores[i].predicted;
    p.sigma = scores[i].sigma;
    p.interval = assign_interval(part, p.pseudo_label);
    ++res.survivors;
    buckets[p.interval].push_back(p);
  }

  for (int i = 0; i < part.size(); ++i) {
    auto& bucket = buckets[i];
    if (bucket.empty()) continue;
    std::sort(bucket.begin(), bucket.end(), [](const PseudoLabeled& a, const PseudoLabeled& b) {
      if (a.sigma != b.sigma) return a.sigma > b.sigma;
      return a.graph->id < b.graph->id;
    });
    const Real rate = uniform_rates ? 1.0 : part.rates[i];
    const auto keep = static_cast<size_t>(
        std::ceil(rate * static_cast<Real>(bucket.size())));
    for (size_t k = 0; k < std::min(keep, bucket.size()); ++k)
      res.selected.push_back(bucket[k]);
  }
  return res;
}

PseudoQuality pseudo_label_quality(const std::vector<PseudoLabeled>& selected,
                                   const IntervalPartition& part, const ShotRegionMap& shot) {
  PseudoQuality q;
  q.count = selected.size();
  q.region_counts = {{"many", 0}, {"medium", 0}, {"few", 0}};
  if (selected.empty()) return q;
  Real abs_sum = 0.0;
  for (const auto& p : selected) {
    if (!p.graph->hidden_label)
      throw ValidationError("pseudo-label quality: graph '" + p.graph->id +
                            "' has no hidden ground truth; dataset unsupported");
    abs_sum += std::abs(p.pseudo_label - *p.graph->hidden_label);
    ++q.region_counts[shot_region_name(shot.region(part.frequencies[p.interval]))];
  }
  q.mae = abs_sum / static_cast<Real>(selected.size());
  return q;
}

}  // namespace sgir
