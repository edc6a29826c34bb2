#include <cmath>
#include <vector>

#include "doctest.h"
#include "sgir/mixup.hpp"

using namespace sgir;

namespace {

LatentEntry entry(const std::string& id, Real label, std::initializer_list<Real> h) {
  LatentEntry e;
  e.id = id;
  e.label = label;
  e.h = Eigen::RowVectorXd(static_cast<Eigen::Index>(h.size()));
  Eigen::Index i = 0;
  for (Real v : h) e.h(i++) = v;
  return e;
}

// Frequencies {4, 2, 1} over [0,1) [1,2) [2,3): rates {0.25, 0.5, 1.0}.
IntervalPartition fixture_partition() {
  return build_partition_explicit({0.1, 0.2, 0.3, 0.4, 1.1, 1.2, 2.5},
                                  {0.0, 1.0, 2.0, 3.0});
}

}  // namespace

TEST_CASE("anchors are per-interval means; empty intervals are masked") {
  const IntervalPartition part = fixture_partition();
  const std::vector<LatentEntry> entries{
      entry("a", 0.2, {0.0, 2.0}),
      entry("b", 0.4, {2.0, 0.0}),
      entry("c", 2.5, {5.0, 5.0}),
  };
  const AnchorTable t = build_anchor_table(entries, part);
  REQUIRE(t.mask.size() == 3);
  CHECK(t.mask[0]);
  CHECK(!t.mask[1]);
  CHECK(t.mask[2]);
  CHECK(t.unmasked() == 2);
  CHECK(t.z.row(0)(0) == 1.0);
  CHECK(t.z.row(0)(1) == 1.0);
  CHECK(t.z.row(2)(0) == 5.0);

  CHECK_THROWS_AS(build_anchor_table({}, part), ConfigError);
  std::vector<LatentEntry> ragged{entry("a", 0.2, {1.0}), entry("b", 0.4, {1.0, 2.0})};
  CHECK_THROWS_AS(build_anchor_table(ragged, part), ShapeError);
}

TEST_CASE("lambda draws live in [0.5, 1] for any shape") {
  for (const Real beta : {0.7, 1.0, 2.0, 5.0}) {
    Rng rng = substream(3, "lambda", static_cast<uint64_t>(beta * 10));
    for (int i = 0; i < 10000; ++i) {
      const Real l = sample_lambda(beta, rng);
      CHECK(l >= 0.5);
      CHECK(l <= 1.0);
    }
  }
  Rng rng(1);
  CHECK_THROWS_AS(sample_lambda(0.0, rng), ConfigError);
}

TEST_CASE("closed-form folded mean at reference shapes") {
  CHECK(folded_lambda_mean(1.0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(folded_lambda_mean(2.0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(folded_lambda_mean(5.0) == doctest::Approx((5.0 + std::pow(2.0, -5.0)) / 6.0)
                                       .epsilon(1e-12));
}

TEST_CASE("monte carlo lambda mean matches the closed form") {
  for (const Real beta : {1.0, 2.0, 5.0}) {
    Rng rng = substream(4, "lambda-mc", static_cast<uint64_t>(beta));
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
      const Real l = sample_lambda(beta, rng);
      sum += l;
      sumsq += l * l;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sumsq / n - mean * mean);
    CHECK(std::abs(mean - folded_lambda_mean(beta)) < 5.0 * sd / std::sqrt(n));
  }
}

TEST_CASE("largest-remainder apportionment follows the sampling rates") {
  const IntervalPartition part = fixture_partition();
  AnchorTable anchors;
  anchors.z = Eigen::MatrixXd::Zero(3, 2);
  anchors.mask = {true, true, true};

  // weights 0.25 : 0.5 : 1.0 over budget 7 -> quotas (1, 2, 4)
  CHECK(apportion_counts(part, anchors, 7) == std::vector<long>{1, 2, 4});
  long total = 0;
  for (long c : apportion_counts(part, anchors, 11)) total += c;
  CHECK(total == 11);  // the budget is always met exactly
  CHECK(apportion_counts(part, anchors, 0) == std::vector<long>{0, 0, 0});

  // a masked anchor is excluded and its weight renormalizes away
  anchors.mask = {true, false, true};
  const auto counts = apportion_counts(part, anchors, 5);
  CHECK(counts[1] == 0);
  CHECK(counts[0] + counts[2] == 5);
  CHECK(counts == std::vector<long>{1, 0, 4});  // 0.25 : 1.0 over 5

  CHECK_THROWS_AS(apportion_counts(part, anchors, -1), ConfigError);
  AnchorTable wrong;
  wrong.z = Eigen::MatrixXd::Zero(2, 2);
  wrong.mask = {true, true};
  CHECK_THROWS_AS(apportion_counts(part, wrong, 3), ShapeError);
}

TEST_CASE("all-zero rates fall back to a uniform spread") {
  const IntervalPartition zero = recount_partition(fixture_partition(), {});
  AnchorTable anchors;
  anchors.z = Eigen::MatrixXd::Zero(3, 2);
  anchors.mask = {true, false, true};
  CHECK(apportion_counts(zero, anchors, 4) == std::vector<long>{2, 0, 2});
}

TEST_CASE("synthesis mixes anchor and partner by the drawn lambda") {
  const IntervalPartition part = fixture_partition();
  const std::vector<LatentEntry> source{entry("a", 0.2, {1.0, 0.0})};
  const AnchorTable anchors = build_anchor_table(source, part);
  const std::vector<LatentEntry> pool{entry("p", 4.0, {0.0, 1.0})};

  const auto aug_empty = build_haug(anchors, part, {}, 8, 2.0, 1, 0);
  CHECK(aug_empty.empty());  // empty pool synthesizes nothing

  const std::vector<AugExample> aug = build_haug(anchors, part, pool, 8, 2.0, 1, 0);
  REQUIRE(aug.size() == 1);  // one anchor, one pool entry: quota caps at the pool
  const AugExample& ex = aug[0];
  CHECK(ex.anchor_interval == 0);
  CHECK(ex.partner_id == "p");
  CHECK(ex.lambda >= 0.5);
  const Real a = part.centers[0];  // 0.5
  CHECK(ex.y_tilde == doctest::Approx(ex.lambda * a + (1 - ex.lambda) * 4.0).epsilon(1e-12));
  CHECK(ex.h_tilde(0) == doctest::Approx(ex.lambda * 1.0).epsilon(1e-12));
  CHECK(ex.h_tilde(1) == doctest::Approx(1.0 - ex.lambda).epsilon(1e-12));
}

TEST_CASE("partners are the nearest labels to the anchor center, ties by id") {
  const IntervalPartition part = fixture_partition();
  // only interval 1 (center 1.5) carries an anchor
  const std::vector<LatentEntry> source{entry("s", 1.5, {1.0, 1.0})};
  const AnchorTable anchors = build_anchor_table(source, part);
  const std::vector<LatentEntry> pool{
      entry("far", 5.0, {0.0, 0.0}),
      entry("near1", 1.4, {0.0, 0.0}),
      entry("near2", 1.7, {0.0, 0.0}),
  };
  const std::vector<AugExample> aug = build_haug(anchors, part, pool, 2, 2.0, 9, 0);
  REQUIRE(aug.size() == 2);
  CHECK(aug[0].partner_id == "near1");  // distance 0.1 beats 0.2
  CHECK(aug[1].partner_id == "near2");

  // equidistant labels: the lexicographically smaller id goes first
  const std::vector<LatentEntry> tie_pool{
      entry("zeta", 1.0, {0.0, 0.0}),
      entry("alpha", 2.0, {0.0, 0.0}),
  };
  const std::vector<AugExample> tie = build_haug(anchors, part, tie_pool, 1, 2.0, 9, 0);
  REQUIRE(tie.size() == 1);
  CHECK(tie[0].partner_id == "alpha");
}

TEST_CASE("synthesis replays exactly per (seed, iteration)") {
  const IntervalPartition part = fixture_partition();
  std::vector<LatentEntry> source;
  for (int i = 0; i < 6; ++i)
    source.push_back(entry("s" + std::to_string(i), 0.1 + 0.45 * i, {Real(i), 1.0}));
  const AnchorTable anchors = build_anchor_table(source, part);

  const auto a = build_haug(anchors, part, source, 9, 2.0, 42, 3);
  const auto b = build_haug(anchors, part, source, 9, 2.0, 42, 3);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].lambda == b[i].lambda);
    CHECK(a[i].partner_id == b[i].partner_id);
    CHECK(a[i].y_tilde == b[i].y_tilde);
    CHECK((a[i].h_tilde - b[i].h_tilde).cwiseAbs().maxCoeff() == 0.0);
  }

  const auto c = build_haug(anchors, part, source, 9, 2.0, 42, 4);
  bool any_different = false;
  for (size_t i = 0; i < std::min(a.size(), c.size()); ++i)
    any_different = any_different || a[i].lambda != c[i].lambda;
  CHECK(any_different);  // a new iteration draws fresh lambdas
}

TEST_CASE("per-anchor streams shield lambdas from other intervals' pools") {
  const IntervalPartition part = fixture_partition();
  std::vector<LatentEntry> source{
      entry("a", 0.3, {1.0, 0.0}),
      entry("b", 2.4, {0.0, 1.0}),
  };
  const AnchorTable anchors = build_anchor_table(source, part);

  std::vector<LatentEntry> pool_small{
      entry("p0", 0.4, {0.5, 0.5}),
      entry("p1", 2.6, {0.5, 0.5}),
  };
  std::vector<LatentEntry> pool_big = pool_small;
  pool_big.push_back(entry("p2", 2.7, {0.25, 0.25}));  // only interval 2 gains partners

  const auto small = build_haug(anchors, part, pool_small, 4, 2.0, 7, 1);
  const auto big = build_haug(anchors, part, pool_big, 4, 2.0, 7, 1);

  auto lambdas_of = [](const std::vector<AugExample>& v, int interval) {
    std::vector<Real> out;
    for (const auto& e : v)
      if (e.anchor_interval == interval) out.push_back(e.lambda);
    return out;
  };
  // interval 0's lambda sequence is untouched by the pool change
  const auto l_small = lambdas_of(small, 0);
  const auto l_big = lambdas_of(big, 0);
  REQUIRE(!l_small.empty());
  const size_t shared = std::min(l_small.size(), l_big.size());
  for (size_t i = 0; i < shared; ++i) CHECK(l_small[i] == l_big[i]);
}
