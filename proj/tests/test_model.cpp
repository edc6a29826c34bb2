#include <cmath>
#include <vector>

#include "doctest.h"
#include "sgir/model.hpp"
#include "test_util.hpp"

using namespace sgir;
using sgir_test::make_test_graph;

namespace {

GreaModel small_model(uint64_t seed, int feature_dim = 3, int hidden = 6, int layers = 2) {
  ModelConfig cfg;
  cfg.feature_dim = feature_dim;
  cfg.hidden_dim = hidden;
  cfg.gin_layers = layers;
  Rng rng = substream(seed, "model-test");
  return GreaModel::make(cfg, rng);
}

// Pins the score head's output: zero final weights, huge bias saturates the
// sigmoid to exactly 0 or 1 (the stable logistic underflows cleanly).
void saturate_gate(GreaModel& model, double bias) {
  auto& last = model.score_head.layers.back();
  last.w.raw().setZero();
  last.b.raw().setConstant(bias);
}

}  // namespace

TEST_CASE("rationale and environment parts always sum to the pooled representation") {
  GreaModel model = small_model(1);
  Rng rng = substream(2, "graphs");
  for (int i = 0; i < 8; ++i) {
    const Graph g = make_test_graph("g" + std::to_string(i), 4 + i % 4, 3, rng);
    const RationaleOutput out = encode_with_rationale(model, g);
    CHECK(out.m.value().minCoeff() >= 0.0);
    CHECK(out.m.value().maxCoeff() <= 1.0);
    const Eigen::MatrixXd gap = out.h_r.value() + out.h_e.value() - out.h.value();
    CHECK(gap.cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("saturated gates push everything into one part") {
  GreaModel model = small_model(3);
  Rng rng = substream(4, "graphs");
  const Graph g = make_test_graph("g", 5, 3, rng);

  // The zeroed part vanishes bitwise (its gate weight is exactly 0); the kept
  // part matches h only up to summation order, so compare at ulp scale.
  saturate_gate(model, 1000.0);  // sigmoid == 1 exactly
  RationaleOutput all_r = encode_with_rationale(model, g);
  CHECK((all_r.h_r.value() - all_r.h.value()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(all_r.h_e.value().cwiseAbs().maxCoeff() == 0.0);

  saturate_gate(model, -1000.0);  // sigmoid == 0 exactly
  RationaleOutput none_r = encode_with_rationale(model, g);
  CHECK(none_r.h_r.value().cwiseAbs().maxCoeff() == 0.0);
  CHECK((none_r.h_e.value() - none_r.h.value()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross predictions: diagonal recovers the full representation") {
  GreaModel model = small_model(5);
  Rng rng = substream(6, "graphs");
  std::vector<RationaleOutput> batch;
  std::vector<Graph> graphs;
  for (int i = 0; i < 4; ++i)
    graphs.push_back(make_test_graph("g" + std::to_string(i), 4 + i, 3, rng));
  for (const auto& g : graphs) batch.push_back(encode_with_rationale(model, g));

  const TensorD p = cross_predictions(model.decoder, batch);
  REQUIRE(p.rows() == 4);
  REQUIRE(p.cols() == 4);
  for (int i = 0; i < 4; ++i) {
    const Real direct = model.decoder.forward(batch[i].h).item();
    CHECK(std::abs(p.value()(i, i) - direct) < 1e-9);
  }
}

TEST_CASE("cross predictions handle a batch of one") {
  GreaModel model = small_model(7);
  Rng rng = substream(8, "graphs");
  const Graph g = make_test_graph("solo", 5, 3, rng);
  std::vector<RationaleOutput> batch{encode_with_rationale(model, g)};
  const TensorD p = cross_predictions(model.decoder, batch);
  CHECK(p.rows() == 1);
  CHECK(p.cols() == 1);
  CHECK(std::abs(p.item() - model.decoder.forward(batch[0].h).item()) < 1e-9);
  CHECK_THROWS_AS(cross_predictions(model.decoder, {}), ShapeError);
}

TEST_CASE("cross predictions against a hand-computable linear decoder") {
  GreaModel model = small_model(9, 3, 4, 1);
  Rng rng = substream(10, "graphs");
  std::vector<RationaleOutput> batch;
  for (int i = 0; i < 3; ++i)
    batch.push_back(encode_with_rationale(model, make_test_graph("g" + std::to_string(i), 5, 3, rng)));

  Rng wrng = substream(11, "lin");
  Mlp<Real> lin = Mlp<Real>::make({4, 1}, {Act::Identity}, wrng);
  lin.layers[0].b.raw()(0, 0) = 0.25;
  const Eigen::MatrixXd w = lin.layers[0].w.value();

  const Eigen::MatrixXd p = cross_predictions(lin, batch).value();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const Real expect =
          (batch[i].h_r.value() * w)(0, 0) + (batch[j].h_e.value() * w)(0, 0) + 0.25;
      CHECK(std::abs(p(i, j) - expect) < 1e-12);
    }
}

TEST_CASE("predict is the decoder on the rationale part") {
  GreaModel model = small_model(12);
  Rng rng = substream(13, "graphs");
  const Graph g = make_test_graph("g", 6, 3, rng);
  const RationaleOutput out = encode_with_rationale(model, g);
  CHECK(predict(model, g) == model.decoder.forward(out.h_r).item());
}

TEST_CASE("batch weights: outliers in label space dominate") {
  const std::vector<Real> w = batch_weights({0.0, 0.0, 10.0}, 10.0);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == w[1]);
  CHECK(w[2] > w[0]);
  CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0).epsilon(1e-12));
  // s = (1, 1, 2): softmax gives e/(2e + e^2) per small entry
  const Real e1 = std::exp(1.0), e2 = std::exp(2.0);
  CHECK(w[2] == doctest::Approx(e2 / (2 * e1 + e2)).epsilon(1e-12));

  // large temperature flattens the weights toward uniform
  const std::vector<Real> flat = batch_weights({0.0, 0.0, 10.0}, 1e9);
  for (Real v : flat) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
  CHECK_THROWS_AS(batch_weights({1.0}, 0.0), ConfigError);
}

TEST_CASE("loss parts: aggregation identities on a concrete batch") {
  GreaModel model = small_model(14);
  Rng rng = substream(15, "graphs");
  std::vector<RationaleOutput> batch;
  std::vector<Real> labels{1.0, 3.0, 8.0};
  for (int i = 0; i < 3; ++i)
    batch.push_back(encode_with_rationale(model, make_test_graph("g" + std::to_string(i), 5, 3, rng)));

  GreaLossHyper hyper;
  hyper.gamma_size = 0.5;
  hyper.temperature = 2.0;
  hyper.regu_coeff = 0.7;
  const GreaLossResult res = grea_loss(model, batch, labels, hyper);

  CHECK(res.parts.weights == batch_weights(labels, 2.0));
  CHECK(res.total.item() ==
        doctest::Approx(res.parts.rationale_mae + res.parts.env_expectation +
                        res.parts.env_variance + 0.7 * res.parts.regu)
            .epsilon(1e-12));

  // recompute the environment terms from the raw cross predictions
  const Eigen::MatrixXd p = cross_predictions(model.decoder, batch).value();
  Real mean_term = 0.0, var_term = 0.0;
  for (int i = 0; i < 3; ++i) {
    Real m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < 3; ++j) {
      const Real e = std::abs(p(i, j) - labels[i]);
      m1 += e / 3.0;
      m2 += e * e / 3.0;
    }
    mean_term += res.parts.weights[i] * m1;
    var_term += res.parts.weights[i] * (m2 - m1 * m1);
  }
  CHECK(res.parts.env_expectation == doctest::Approx(mean_term).epsilon(1e-10));
  CHECK(res.parts.env_variance == doctest::Approx(var_term).epsilon(1e-10));

  // rationale mae from scratch
  Real rat = 0.0;
  for (int i = 0; i < 3; ++i)
    rat += std::abs(model.decoder.forward(batch[i].h_r).item() - labels[i]) / 3.0;
  CHECK(res.parts.rationale_mae == doctest::Approx(rat).epsilon(1e-10));
}

TEST_CASE("gate regularizer vanishes at the target activation") {
  GreaModel model = small_model(16);
  // zero weights and bias: sigmoid(0) = 0.5 exactly on every node
  auto& last = model.score_head.layers.back();
  last.w.raw().setZero();
  last.b.raw().setZero();
  Rng rng = substream(17, "graphs");
  std::vector<RationaleOutput> batch{
      encode_with_rationale(model, make_test_graph("g", 5, 3, rng))};
  GreaLossHyper hyper;
  hyper.gamma_size = 0.5;
  const GreaLossResult res = grea_loss(model, batch, {2.0}, hyper);
  CHECK(res.parts.regu <= 1e-12);
}

TEST_CASE("loss argument validation") {
  GreaModel model = small_model(18);
  Rng rng = substream(19, "graphs");
  std::vector<RationaleOutput> batch{
      encode_with_rationale(model, make_test_graph("g", 5, 3, rng))};
  CHECK_THROWS_AS(grea_loss(model, {}, {}, {}), ShapeError);
  CHECK_THROWS_AS(grea_loss(model, batch, {1.0, 2.0}, {}), ShapeError);
  ModelConfig bad;
  Rng mrng(1);
  CHECK_THROWS_AS(GreaModel::make(bad, mrng), ConfigError);  // feature_dim 0
}

TEST_CASE("full loss gradient survives a finite-difference audit") {
  for (uint64_t attempt = 0; attempt < 64; ++attempt) {
    GreaModel model = small_model(700 + attempt, 2, 4, 2);
    Rng rng = substream(800 + attempt, "graphs");
    std::vector<Graph> graphs;
    for (int i = 0; i < 3; ++i)
      graphs.push_back(make_test_graph("g" + std::to_string(i), 4 + i, 2, rng));
    const std::vector<Real> labels{0.5, 2.0, 4.5};
    GreaLossHyper hyper;
    hyper.temperature = 2.0;
    hyper.regu_coeff = 0.5;

    std::vector<TensorD> params;
    for (auto& p : model.params()) params.push_back(p.tensor);
    const auto rep = sgir_test::fd_gradient_check(
        params,
        [&] {
          std::vector<RationaleOutput> batch;
          for (const auto& g : graphs) batch.push_back(encode_with_rationale(model, g));
          return grea_loss(model, batch, labels, hyper).total;
        },
        1e-5, 1e-3);
    if (rep.min_kink_gap < 1e-4) continue;  // too close to a relu/abs corner; redraw
    INFO("attempt " << attempt << " max_rel " << rep.max_rel << " over " << rep.checked
                    << " entries");
    CHECK(rep.max_rel < 1e-5);
    return;
  }
  FAIL("no kink-safe draw found for the full loss gradient check");
}
