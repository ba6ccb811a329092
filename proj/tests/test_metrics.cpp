#include "spad/metrics.hpp"

#include <doctest.h>

#include <cmath>

using namespace spad;
using namespace spad::metrics;

namespace {

Grid2<float> constant_map(int rows, int cols, float v) {
  return Grid2<float>(rows, cols, v);
}

}  // namespace

TEST_CASE("rmse basics") {
  auto truth = constant_map(4, 4, 2.0f);
  SUBCASE("identical maps") {
    auto mask = valid_mask(truth, truth);
    CHECK(rmse(truth, truth, mask) == 0.0);
  }
  SUBCASE("uniform offset") {
    auto pred = constant_map(4, 4, 2.5f);
    auto mask = valid_mask(truth, pred);
    CHECK(rmse(truth, pred, mask) == doctest::Approx(0.5));
  }
  SUBCASE("half off by one meter") {
    auto pred = truth;
    for (int c = 0; c < 4; ++c)
      for (int r = 0; r < 2; ++r) pred(r, c) = 3.0f;
    auto mask = valid_mask(truth, pred);
    CHECK(rmse(truth, pred, mask) == doctest::Approx(std::sqrt(0.5)));
  }
  SUBCASE("empty mask throws") {
    auto pred = constant_map(4, 4, depth_no_return());
    auto mask = valid_mask(truth, pred);
    CHECK_THROWS_AS(rmse(truth, pred, mask), UndefinedMetricError);
  }
}

TEST_CASE("delta_i basics") {
  auto truth = constant_map(4, 4, 2.0f);
  SUBCASE("identical maps pass at i=1") {
    auto mask = valid_mask(truth, truth);
    CHECK(delta_i(truth, truth, 1, mask) == 1.0);
  }
  SUBCASE("ratio exactly 1.02 fails the strict i=1 test") {
    auto pred = constant_map(4, 4, 2.0f * 1.02f);
    auto mask = valid_mask(truth, pred);
    CHECK(delta_i(truth, pred, 1, mask) == 0.0);
    CHECK(delta_i(truth, pred, 3, mask) == 1.0);
  }
  SUBCASE("mixed ratios count fractionally") {
    auto pred = truth;
    for (int c = 0; c < 4; ++c) {
      for (int r = 0; r < 2; ++r) pred(r, c) = 2.0f * 1.005f;
      for (int r = 2; r < 4; ++r) pred(r, c) = 2.0f * 1.05f;
    }
    auto mask = valid_mask(truth, pred);
    CHECK(delta_i(truth, pred, 1, mask) == doctest::Approx(0.5));
  }
  SUBCASE("nonpositive depth rejected") {
    auto pred = constant_map(4, 4, 0.0f);
    auto mask = valid_mask(truth, pred);
    CHECK_THROWS_AS(delta_i(truth, pred, 1, mask), InputError);
  }
}

TEST_CASE("delta_i monotone in threshold and symmetric") {
  Grid2<float> truth(3, 3, 0.0f);
  Grid2<float> pred(3, 3, 0.0f);
  for (int i = 0; i < 9; ++i) {
    truth[i] = 1.0f + 0.1f * i;
    pred[i] = truth[i] * (1.0f + 0.007f * i);
  }
  auto mask = valid_mask(truth, pred);
  double prev = 0.0;
  for (int t = 1; t <= 6; ++t) {
    double d = delta_i(truth, pred, t, mask);
    CHECK(d >= prev);
    prev = d;
  }
  CHECK(delta_i(truth, pred, 2, mask) == delta_i(pred, truth, 2, mask));
  CHECK(rmse(truth, pred, mask) == doctest::Approx(rmse(pred, truth, mask)));
}

TEST_CASE("evaluate with missing-pixel policies") {
  auto truth = constant_map(2, 2, 4.0f);
  auto pred = truth;
  pred(0, 0) = depth_no_return();

  EvalParams excl;
  EvalReport r1 = evaluate(truth, pred, excl);
  CHECK(r1.n_valid == 3);
  CHECK(r1.rmse_m == 0.0);

  EvalParams pen;
  pen.policy = MissingPolicy::penalize;
  pen.penalty_depth_m = 10.0;
  EvalReport r2 = evaluate(truth, pred, pen);
  CHECK(r2.n_valid == 4);
  CHECK(r2.rmse_m == doctest::Approx(std::sqrt(36.0 / 4.0)));
}

TEST_CASE("ghost counting") {
  auto truth = constant_map(2, 2, 4.0f);
  auto pred = truth;
  pred(0, 0) = 9.0f;
  pred(0, 1) = 9.02f;
  CHECK(count_ghosts(truth, pred, 9.0, 0.05) == 2);
  CHECK(count_ghosts(truth, pred, 4.0, 0.05) == 0);  // truth is already there
}
