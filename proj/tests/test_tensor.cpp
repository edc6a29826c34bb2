#include <cmath>
#include <vector>

#include "doctest.h"
#include "sgir/rng.hpp"
#include "sgir/tensor.hpp"
#include "test_util.hpp"

using namespace sgir;
using sgir_test::fd_gradient_check;

namespace {

constexpr double kDelta = 1e-5;
constexpr double kFloor = 1e-3;
constexpr double kTol = 1e-6;
constexpr double kKinkGapMin = 1e-4;  // 10x the step: no fd eval crosses a corner

Eigen::MatrixXd rand_mat(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Contract an op output against a fixed constant so the loss is scalar but
// every output entry carries a distinct cotangent.
TensorD contract(const TensorD& t, const Eigen::MatrixXd& c) {
  return sum(mul(t, TensorD::constant(c)));
}

// Runs fd over one op builder, redrawing inputs until every relu/abs
// argument keeps a safe distance from its kink.
template <typename Make>
void check_op_grad(const char* what, Make make) {
  for (uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng = substream(1000 + attempt, what);
    auto [params, rebuild] = make(rng);
    const auto rep = fd_gradient_check(params, rebuild, kDelta, kFloor);
    if (rep.min_kink_gap < kKinkGapMin) continue;  // too near a corner; redraw
    INFO(what << " attempt " << attempt << " max_rel " << rep.max_rel);
    CHECK(rep.max_rel < kTol);
    return;
  }
  FAIL("no kink-safe draw found for op " << what);
}

using Setup = std::pair<std::vector<TensorD>, std::function<TensorD()>>;

}  // namespace

TEST_CASE("matmul value matches dense algebra") {
  Rng rng(1);
  const Eigen::MatrixXd a = rand_mat(3, 4, rng), b = rand_mat(4, 2, rng);
  const TensorD t = matmul(TensorD::constant(a), TensorD::constant(b));
  CHECK((t.value() - a * b).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gradients: matmul") {
  check_op_grad("matmul", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(2, 3, rng));
    TensorD b = TensorD::parameter(rand_mat(3, 4, rng));
    const Eigen::MatrixXd c = rand_mat(2, 4, rng);
    return {{a, b}, [=] { return contract(matmul(a, b), c); }};
  });
}

TEST_CASE("gradients: add, sub, mul") {
  check_op_grad("add_sub_mul", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(3, 3, rng));
    TensorD b = TensorD::parameter(rand_mat(3, 3, rng));
    const Eigen::MatrixXd c = rand_mat(3, 3, rng);
    return {{a, b}, [=] { return contract(mul(add(a, b), sub(a, b)), c); }};
  });
}

TEST_CASE("gradients: scale and mul_scalar") {
  check_op_grad("scale_mul_scalar", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(2, 3, rng));
    TensorD s = TensorD::parameter(rand_mat(1, 1, rng));
    const Eigen::MatrixXd c = rand_mat(2, 3, rng);
    return {{a, s}, [=] { return contract(mul_scalar(scale(a, 1.7), s), c); }};
  });
}

TEST_CASE("gradients: add_rowvec") {
  check_op_grad("add_rowvec", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(3, 4, rng));
    TensorD r = TensorD::parameter(rand_mat(1, 4, rng));
    const Eigen::MatrixXd c = rand_mat(3, 4, rng);
    return {{a, r}, [=] { return contract(add_rowvec(a, r), c); }};
  });
}

TEST_CASE("gradients: relu") {
  check_op_grad("relu", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(3, 3, rng));
    const Eigen::MatrixXd c = rand_mat(3, 3, rng);
    return {{a}, [=] { return contract(relu(a), c); }};
  });
}

TEST_CASE("gradients: sigmoid") {
  check_op_grad("sigmoid", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(2, 3, rng, -3.0, 3.0));
    const Eigen::MatrixXd c = rand_mat(2, 3, rng);
    return {{a}, [=] { return contract(sigmoid(a), c); }};
  });
}

TEST_CASE("gradients: abs") {
  check_op_grad("abs", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(3, 3, rng));
    const Eigen::MatrixXd c = rand_mat(3, 3, rng);
    return {{a}, [=] { return contract(abs(a), c); }};
  });
}

TEST_CASE("gradients: transpose, sum, mean") {
  check_op_grad("transpose_sum", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(2, 4, rng));
    const Eigen::MatrixXd c = rand_mat(4, 2, rng);
    return {{a}, [=] { return contract(transpose(a), c); }};
  });
  check_op_grad("mean", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(3, 5, rng));
    return {{a}, [=] { return mean(a); }};
  });
}

TEST_CASE("gradients: sum_rows and variance") {
  check_op_grad("sum_rows", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(4, 3, rng));
    const Eigen::MatrixXd c = rand_mat(1, 3, rng);
    return {{a}, [=] { return contract(sum_rows(a), c); }};
  });
  check_op_grad("variance", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(3, 4, rng));
    return {{a}, [=] { return variance(a); }};
  });
}

TEST_CASE("variance value is the population variance") {
  Rng rng(2);
  const Eigen::MatrixXd a = rand_mat(3, 4, rng);
  const double mu = a.mean();
  const double expect = (a.array() - mu).square().sum() / 12.0;
  CHECK(variance(TensorD::constant(a)).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("softmax value normalizes and gradient checks") {
  Rng rng(3);
  const Eigen::MatrixXd a = rand_mat(5, 1, rng, -2.0, 2.0);
  const TensorD s = softmax(TensorD::constant(a));
  CHECK(s.value().sum() == doctest::Approx(1.0).epsilon(1e-12));
  Eigen::MatrixXd manual = (a.array() - a.maxCoeff()).exp();
  manual /= manual.sum();
  CHECK((s.value() - manual).cwiseAbs().maxCoeff() < 1e-14);

  check_op_grad("softmax", [](Rng& r) -> Setup {
    TensorD x = TensorD::parameter(rand_mat(5, 1, r, -2.0, 2.0));
    const Eigen::MatrixXd c = rand_mat(5, 1, r);
    return {{x}, [=] { return contract(softmax(x), c); }};
  });
}

TEST_CASE("gradients: concat_rows, repeat_rows, tile_rows") {
  check_op_grad("concat_repeat_tile", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(2, 3, rng));
    TensorD b = TensorD::parameter(rand_mat(1, 3, rng));
    const Eigen::MatrixXd c = rand_mat(18, 3, rng);
    return {{a, b}, [=] {
              TensorD cat = concat_rows(std::vector<TensorD>{a, b});  // 3 x 3
              TensorD rep = repeat_rows(cat, 2);                      // 6 x 3
              return contract(tile_rows(rep, 3), c);                  // 18 x 3
            }};
  });
}

TEST_CASE("repeat and tile row layouts") {
  Eigen::MatrixXd a(2, 1);
  a << 1.0, 2.0;
  const TensorD t = TensorD::constant(a);
  const TensorD rep = repeat_rows(t, 2);  // 1 1 2 2
  const TensorD til = tile_rows(t, 2);    // 1 2 1 2
  CHECK(rep.value()(0, 0) == 1.0);
  CHECK(rep.value()(1, 0) == 1.0);
  CHECK(rep.value()(2, 0) == 2.0);
  CHECK(til.value()(1, 0) == 2.0);
  CHECK(til.value()(2, 0) == 1.0);
}

TEST_CASE("gradients: reshape_rm, gather_rows, scatter_add_rows") {
  check_op_grad("reshape_gather_scatter", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(4, 3, rng));
    const std::vector<int> idx{2, 0, 0, 3};
    const std::vector<std::pair<int, int>> pairs{{0, 1}, {1, 0}, {2, 1}, {3, 2}, {0, 2}};
    const Eigen::MatrixXd c = rand_mat(2, 6, rng);
    return {{a}, [=] {
              TensorD g = gather_rows(a, idx);                // 4 x 3
              TensorD s = scatter_add_rows(g, pairs, 4);      // 4 x 3
              return contract(reshape_rm(s, 2, 6), c);
            }};
  });
}

TEST_CASE("reshape_rm is row-major") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 2, 3, 4;
  const TensorD r = reshape_rm(TensorD::constant(a), 1, 4);
  CHECK(r.value()(0, 0) == 1);
  CHECK(r.value()(0, 1) == 2);
  CHECK(r.value()(0, 2) == 3);
  CHECK(r.value()(0, 3) == 4);
}

TEST_CASE("scatter_add_rows sums sources per destination") {
  Eigen::MatrixXd a(3, 1);
  a << 1, 10, 100;
  const TensorD out =
      scatter_add_rows(TensorD::constant(a), {{0, 2}, {1, 2}, {2, 0}}, 3);
  CHECK(out.value()(2, 0) == 11);
  CHECK(out.value()(0, 0) == 100);
  CHECK(out.value()(1, 0) == 0);
  CHECK_THROWS_AS(scatter_add_rows(TensorD::constant(a), {{0, 3}}, 3), ShapeError);
  CHECK_THROWS_AS(gather_rows(TensorD::constant(a), {3}), ShapeError);
}

TEST_CASE("gradients: mae") {
  check_op_grad("mae", [](Rng& rng) -> Setup {
    TensorD pred = TensorD::parameter(rand_mat(4, 1, rng));
    const Eigen::MatrixXd target = rand_mat(4, 1, rng);
    return {{pred}, [=] { return mae(pred, TensorD::constant(target)); }};
  });
}

TEST_CASE("mae value is the mean absolute difference") {
  Eigen::MatrixXd p(3, 1), t(3, 1);
  p << 1, 2, 3;
  t << 2, 2, 0;
  CHECK(mae(TensorD::constant(p), TensorD::constant(t)).item() ==
        doctest::Approx(4.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("gradients: dropout with a replayed mask") {
  // The same substream redraws the same mask, so the loss is a fixed linear
  // map and the central difference is exact.
  check_op_grad("dropout", [](Rng& rng) -> Setup {
    TensorD a = TensorD::parameter(rand_mat(3, 4, rng));
    const Eigen::MatrixXd c = rand_mat(3, 4, rng);
    const uint64_t seed = rng.u64();
    return {{a}, [=] {
              Rng mask_rng = substream(seed, "dropout-mask");
              return contract(dropout(a, 0.4, mask_rng), c);
            }};
  });
}

TEST_CASE("dropout semantics") {
  Rng rng(7);
  const Eigen::MatrixXd a = rand_mat(4, 4, rng);
  TensorD t = TensorD::constant(a);

  SUBCASE("rate 0 is the identity") {
    Rng r0(1);
    TensorD d = dropout(t, 0.0, r0);
    CHECK((d.value() - a).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("same stream, same mask") {
    Rng r1 = substream(5, "m");
    Rng r2 = substream(5, "m");
    CHECK(dropout(t, 0.3, r1).value() == dropout(t, 0.3, r2).value());
  }
  SUBCASE("survivors are scaled by 1/(1-rate)") {
    Rng r1(9);
    const Eigen::MatrixXd v = dropout(t, 0.25, r1).value();
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        const bool zero = v(i, j) == 0.0;
        const bool scaled = std::abs(v(i, j) - a(i, j) / 0.75) < 1e-12;
        CHECK((zero || scaled));
      }
  }
  SUBCASE("monte carlo mean is the identity") {
    Rng r1(11);
    const double rate = 0.3;
    const int n = 20000;
    TensorD one = TensorD::scalar(1.0);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += dropout(one, rate, r1).item();
    // per-draw variance of the inverted-dropout factor: 1/(1-rate) - 1
    const double sd = std::sqrt((1.0 / (1.0 - rate) - 1.0) / n);
    CHECK(std::abs(sum / n - 1.0) < 5.0 * sd);
  }
  SUBCASE("invalid rate") {
    Rng r1(1);
    CHECK_THROWS_AS(dropout(t, 1.0, r1), ShapeError);
    CHECK_THROWS_AS(dropout(t, -0.1, r1), ShapeError);
  }
}

TEST_CASE("non-finite results trip the fault naming the op") {
  TensorD big = TensorD::constant(TensorD::Matrix::Constant(1, 1, 1e308));
  CHECK_THROWS_WITH_AS(scale(big, 1e10), "non-finite value produced by op 'scale'",
                       NumericFault);
  TensorD z = TensorD::constant(TensorD::Matrix::Zero(1, 1));
  CHECK_THROWS_WITH_AS(matmul(scale(big, 1e10 * 0.0 + 1.0), big),
                       "non-finite value produced by op 'matmul'", NumericFault);
}

TEST_CASE("shape and state guards") {
  TensorD a = TensorD::parameter(TensorD::Matrix::Zero(2, 2));
  CHECK_THROWS_AS(a.item(), ShapeError);
  CHECK_THROWS_AS(backward(a), ShapeError);
  CHECK_THROWS_AS((void)a.grad(), ShapeError);  // before any backward
  CHECK_THROWS_AS(mae(a, TensorD::constant(TensorD::Matrix::Zero(3, 2))), ShapeError);
  CHECK_THROWS_AS(concat_rows(std::vector<TensorD>{}), ShapeError);
  CHECK_THROWS_AS(softmax(a), ShapeError);  // expects a column
}

TEST_CASE("backward accumulates until zero_grad") {
  TensorD a = TensorD::parameter(TensorD::Matrix::Constant(2, 2, 3.0));
  TensorD loss = sum(a);
  backward(loss);
  CHECK(a.grad()(0, 0) == 1.0);
  backward(loss);
  CHECK(a.grad()(0, 0) == 2.0);  // second pass adds
  a.zero_grad();
  CHECK(!a.has_grad());
}

TEST_CASE("no-grad scope records no adjoints") {
  TensorD a = TensorD::parameter(TensorD::Matrix::Constant(1, 1, 2.0));
  TensorD loss;
  {
    NoGradGuard ng;
    loss = sum(a);
  }
  CHECK(loss.item() == 2.0);
  backward(loss);
  CHECK(!a.has_grad());
  // and the switch restores on scope exit
  TensorD loss2 = sum(a);
  backward(loss2);
  CHECK(a.grad()(0, 0) == 1.0);
}

TEST_CASE("linear regression gradient matches the closed form") {
  Rng rng(21);
  const Eigen::MatrixXd x = rand_mat(8, 3, rng);
  const Eigen::MatrixXd y = rand_mat(8, 1, rng);
  TensorD w = TensorD::parameter(rand_mat(3, 1, rng));
  TensorD e = sub(matmul(TensorD::constant(x), w), TensorD::constant(y));
  TensorD loss = mean(mul(e, e));
  backward(loss);
  const Eigen::MatrixXd expect = 2.0 / 8.0 * x.transpose() * (x * w.value() - y);
  CHECK((w.grad() - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("kink probe records the closest corner approach") {
  double gap = std::numeric_limits<double>::infinity();
  detail::kink_probe = &gap;
  Eigen::MatrixXd a(1, 3);
  a << -0.5, 0.05, 2.0;
  (void)relu(TensorD::constant(a));
  detail::kink_probe = nullptr;
  CHECK(gap == doctest::Approx(0.05).epsilon(1e-12));
}
