#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "sgir/binning.hpp"
#include "sgir/rng.hpp"

using namespace sgir;

namespace {

// Independent counting-rank oracle for frequency reversal: interval i's
// descending rank (ties broken toward the later index) picks its reversed
// frequency from the ascending sort.
std::vector<Real> reversal_oracle(const std::vector<long>& mu) {
  std::vector<long> asc(mu);
  std::sort(asc.begin(), asc.end());
  const Real mx = static_cast<Real>(*std::max_element(mu.begin(), mu.end()));
  std::vector<Real> rates(mu.size());
  for (size_t i = 0; i < mu.size(); ++i) {
    size_t r = 0;
    for (size_t j = 0; j < mu.size(); ++j) {
      if (mu[j] > mu[i]) ++r;
      if (mu[j] == mu[i] && j > i) ++r;
    }
    rates[i] = static_cast<Real>(asc[r]) / mx;
  }
  return rates;
}

}  // namespace

TEST_CASE("equal-width partition: hand-checked boundaries and counts") {
  const std::vector<Real> labels{0.0, 1.0, 1.5, 3.0};
  const IntervalPartition part = build_partition(labels, 2);
  REQUIRE(part.size() == 2);
  CHECK(part.boundaries[0] == 0.0);
  CHECK(part.boundaries[1] == 1.5);
  CHECK(part.boundaries[2] > 3.0);  // one-ulp lift keeps the max label inside
  CHECK(part.boundaries[2] == std::nextafter(3.0, 4.0));
  CHECK(part.frequencies == std::vector<long>{2, 2});
  CHECK(part.centers[0] == doctest::Approx(0.75));
}

TEST_CASE("partition build errors") {
  CHECK_THROWS_AS(build_partition({}, 3), ConfigError);
  CHECK_THROWS_AS(build_partition({1.0, 2.0}, 0), ConfigError);
  CHECK_THROWS_AS(build_partition({2.0, 2.0, 2.0}, 3), ConfigError);  // degenerate range
  CHECK_THROWS_AS(build_partition_explicit({1.0}, {0.0}), ConfigError);
  CHECK_THROWS_AS(build_partition_explicit({1.0}, {0.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(build_partition_explicit({5.0}, {0.0, 1.0}), ConfigError);  // out of range
}

TEST_CASE("explicit boundaries keep their edges and count labels") {
  const std::vector<Real> labels{0.5, 1.5, 1.6, 9.0};
  const IntervalPartition part = build_partition_explicit(labels, {0.0, 1.0, 2.0, 10.0});
  REQUIRE(part.size() == 3);
  CHECK(part.frequencies == std::vector<long>{1, 2, 1});
  CHECK(part.centers[2] == 6.0);
}

TEST_CASE("interval assignment is total: clamping at both ends") {
  const IntervalPartition part = build_partition_explicit({0.5, 2.5}, {0.0, 1.0, 2.0, 3.0});
  CHECK(assign_interval(part, 0.5) == 0);
  CHECK(assign_interval(part, 1.0) == 1);   // half-open: boundary belongs up
  CHECK(assign_interval(part, -100.0) == 0);
  CHECK(assign_interval(part, 100.0) == 2);
  CHECK(assign_interval(part, 2.999) == 2);
}

TEST_CASE("reverse sampling: hand examples") {
  // mu (10, 5, 1) -> reversed (1, 5, 10), rates over max 10
  CHECK(reverse_sampling_rates({10, 5, 1}) == std::vector<Real>{0.1, 0.5, 1.0});
  // zero stays zero, the rarest interval reaches rate 1
  CHECK(reverse_sampling_rates({0, 4, 2}) == std::vector<Real>{1.0, 0.0, 0.5});
  // uniform frequencies are a fixed point
  CHECK(reverse_sampling_rates({3, 3, 3}) == std::vector<Real>{1.0, 1.0, 1.0});
  // ties: equal frequencies swap among themselves with the lower index
  // receiving the larger reversed value
  CHECK(reverse_sampling_rates({3, 2, 2}) == std::vector<Real>{2.0 / 3.0, 1.0, 2.0 / 3.0});
}

TEST_CASE("reverse sampling errors") {
  CHECK_THROWS_AS(reverse_sampling_rates({}), ConfigError);
  CHECK_THROWS_AS(reverse_sampling_rates({0, 0}), ConfigError);
  CHECK_THROWS_AS(reverse_sampling_rates({3, -1}), ConfigError);
}

TEST_CASE("reverse sampling matches the counting oracle on random vectors") {
  Rng rng = substream(99, "binning-oracle");
  for (int trial = 0; trial < 300; ++trial) {
    const int c = 1 + static_cast<int>(rng.below(12));
    std::vector<long> mu(c);
    bool any = false;
    for (auto& f : mu) {
      f = static_cast<long>(rng.below(8));  // small range forces many ties
      any = any || f > 0;
    }
    if (!any) mu[0] = 1;
    const auto got = reverse_sampling_rates(mu);
    const auto expect = reversal_oracle(mu);
    REQUIRE(got.size() == expect.size());
    for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expect[i]);
  }
}

TEST_CASE("reverse sampling inverts strict frequency order") {
  Rng rng = substream(100, "binning-law");
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 2 + static_cast<int>(rng.below(10));
    std::vector<long> mu(c);
    // distinct values: a strict reversal law is only possible without ties
    std::vector<long> vals(c);
    for (int i = 0; i < c; ++i) vals[i] = i * 3 + 1;
    rng.shuffle(vals);
    for (int i = 0; i < c; ++i) mu[i] = vals[i];
    const auto rates = reverse_sampling_rates(mu);
    for (int i = 0; i < c; ++i)
      for (int j = 0; j < c; ++j)
        if (mu[i] > mu[j]) CHECK(rates[i] < rates[j]);
  }
}

TEST_CASE("recount keeps the geometry and refreshes the statistics") {
  const IntervalPartition part = build_partition({0.0, 0.5, 1.0, 2.0, 3.0}, 3);
  const IntervalPartition re = recount_partition(part, {0.1, 0.2, 2.9});
  CHECK(re.boundaries == part.boundaries);
  CHECK(re.centers == part.centers);
  CHECK(re.frequencies == std::vector<long>{2, 0, 1});
  CHECK(re.rates == reverse_sampling_rates({2, 0, 1}));

  // labels outside the range clamp into the edge intervals
  const IntervalPartition clamped = recount_partition(part, {-5.0, 9.0});
  CHECK(clamped.frequencies == std::vector<long>{1, 0, 1});

  // no labels at all: zero frequencies, zero rates, no error
  const IntervalPartition empty = recount_partition(part, {});
  CHECK(empty.frequencies == std::vector<long>{0, 0, 0});
  CHECK(empty.rates == std::vector<Real>{0.0, 0.0, 0.0});
}

TEST_CASE("shot regions route by frequency thresholds") {
  const ShotRegionMap shot(100, 20);
  CHECK(shot.region(150) == ShotRegion::Many);
  CHECK(shot.region(100) == ShotRegion::Many);
  CHECK(shot.region(99) == ShotRegion::Medium);
  CHECK(shot.region(20) == ShotRegion::Medium);
  CHECK(shot.region(19) == ShotRegion::Few);
  CHECK(shot.region(0) == ShotRegion::Few);
  CHECK_THROWS_AS(ShotRegionMap(20, 20), ConfigError);
  CHECK_THROWS_AS(ShotRegionMap(20, 0), ConfigError);
}
