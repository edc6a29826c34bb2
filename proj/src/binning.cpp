#include "sgir/binning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace sgir {

namespace {

void finish_partition(IntervalPartition& part, const std::vector<Real>& labels) {
  const int c = static_cast<int>(part.boundaries.size()) - 1;
  for (int i = 0; i + 1 < static_cast<int>(part.boundaries.size()); ++i)
    if (!(part.boundaries[i] < part.boundaries[i + 1]))
      throw ConfigError("partition boundaries not strictly increasing at index " +
                        std::to_string(i) + " (interval width underflow?)");
  part.centers.resize(c);
  for (int i = 0; i < c; ++i)
    part.centers[i] = 0.5 * (part.boundaries[i] + part.boundaries[i + 1]);
  part.frequencies.assign(c, 0);
  for (Real y : labels) {
    if (y < part.boundaries.front() || y >= part.boundaries.back())
      throw ConfigError("label " + std::to_string(y) + " outside partition range");
    ++part.frequencies[assign_interval(part, y)];
  }
  part.rates = reverse_sampling_rates(part.frequencies);
}

}  // namespace

IntervalPartition build_partition(const std::vector<Real>& labels, int num_intervals) {
  if (labels.empty()) throw ConfigError("cannot build a partition from no labels");
  if (num_intervals < 1) throw ConfigError("partition needs at least one interval");
  const auto [lo_it, hi_it] = std::minmax_element(labels.begin(), labels.end());
  const Real lo = *lo_it;
  const Real hi = *hi_it;
  if (!(lo < hi)) throw ConfigError("degenerate label range: all labels equal " + std::to_string(lo));
  IntervalPartition part;
  part.boundaries.resize(num_intervals + 1);
  for (int i = 0; i <= num_intervals; ++i)
    part.boundaries[i] = lo + (hi - lo) * static_cast<Real>(i) / static_cast<Real>(num_intervals);
  // Half-open intervals would exclude the maximum label; lift the top edge by
  // the smallest representable amount instead.
  part.boundaries[num_intervals] =
      std::nextafter(std::max(part.boundaries[num_intervals], hi), std::numeric_limits<Real>::infinity());
  finish_partition(part, labels);
  return part;
}

IntervalPartition build_partition_explicit(const std::vector<Real>& labels,
                                           std::vector<Real> boundaries) {
  if (labels.empty()) throw ConfigError("cannot build a partition from no labels");
  if (boundaries.size() < 2) throw ConfigError("explicit boundaries need at least two entries");
  const Real hi = *std::max_element(labels.begin(), labels.end());
  if (hi == boundaries.back())
    boundaries.back() = std::nextafter(boundaries.back(), std::numeric_limits<Real>::infinity());
  IntervalPartition part;
  part.boundaries = std::move(boundaries);
  finish_partition(part, labels);
  return part;
}

int assign_interval(const IntervalPartition& part, Real y) {
  const auto& b = part.boundaries;
  const int c = part.size();
  if (y < b.front()) return 0;
  if (y >= b.back()) return c - 1;
  const auto it = std::upper_bound(b.begin(), b.end(), y);
  return static_cast<int>(it - b.begin()) - 1;
}

std::vector<Real> reverse_sampling_rates(const std::vector<long>& frequencies) {
  if (frequencies.empty()) throw ConfigError("reverse sampling: empty frequency vector");
  const long max_mu = *std::max_element(frequencies.begin(), frequencies.end());
  if (max_mu <= 0) throw ConfigError("reverse sampling: all frequencies are zero");
  for (long f : frequencies)
    if (f < 0) throw ConfigError("reverse sampling: negative frequency");
  const size_t c = frequencies.size();
  // Descending rank order; ties ordered by index descending so that the lower
  // index lands on the later (larger) ascending value.
  std::vector<size_t> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (frequencies[a] != frequencies[b]) return frequencies[a] > frequencies[b];
    return a > b;
  });
  std::vector<long> ascending(frequencies);
  std::sort(ascending.begin(), ascending.end());
  std::vector<Real> rates(c);
  for (size_t rank = 0; rank < c; ++rank)
    rates[order[rank]] = static_cast<Real>(ascending[rank]) / static_cast<Real>(max_mu);
  return rates;
}

IntervalPartition recount_partition(const IntervalPartition& part,
                                    const std::vector<Real>& labels) {
  IntervalPartition out = part;
  out.frequencies.assign(part.size(), 0);
  for (Real y : labels) ++out.frequencies[assign_interval(out, y)];
  const bool any = std::any_of(out.frequencies.begin(), out.frequencies.end(),
                               [](long f) { return f > 0; });
  if (any)
    out.rates = reverse_sampling_rates(out.frequencies);
  else
    out.rates.assign(part.size(), 0.0);
  return out;
}

}  // namespace sgir
