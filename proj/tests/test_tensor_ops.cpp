// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support.hpp"

namespace dd = densedrop;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

dd::Var<double> filled(dd::Shape s, double v) { return dd::constant(dd::Tensor<double>(s, v)); }

dd::Var<double> from(dd::Shape s, std::vector<double> v) {
  return dd::constant(dd::Tensor<double>(std::move(s), std::move(v)));
}

}  // namespace

TEST_CASE("tensor rejects zero extents and mismatched data") {
  CHECK_THROWS_AS(dd::Tensor<float>({2, 0, 3}), dd::ShapeError);
  CHECK_THROWS_AS(dd::Tensor<float>({2, 2}, std::vector<float>(3)), dd::ShapeError);
  dd::Tensor<float> t({1, 2, 2, 2});
  t.at(0, 1, 1, 0) = 5.0f;
  CHECK(t[6] == 5.0f);
}

TEST_CASE("conv2d box sum of ones with padding 1") {
  auto y = dd::conv2d(filled({1, 1, 3, 3}, 1.0), filled({1, 1, 3, 3}, 1.0), 1, 1);
  REQUIRE(y->value.shape() == dd::Shape{1, 1, 3, 3});
  CHECK(y->value.at(0, 0, 1, 1) == 9.0);
  CHECK(y->value.at(0, 0, 0, 0) == 4.0);
  CHECK(y->value.at(0, 0, 0, 1) == 6.0);
}

TEST_CASE("conv2d with zero weight is zero") {
  auto x = support::random_leaf({2, 3, 5, 5}, 1);
  auto y = dd::conv2d(x, filled({4, 3, 3, 3}, 0.0), 1, 1);
  for (double v : y->value.values()) CHECK(v == 0.0);
}

TEST_CASE("conv2d matches the six-loop oracle") {
  struct Case {
    dd::Shape x, w;
    std::size_t stride, pad;
  };
  const Case cases[] = {
      {{2, 3, 5, 5}, {4, 3, 3, 3}, 1, 1},
      {{2, 3, 5, 5}, {4, 3, 3, 3}, 2, 1},
      {{1, 5, 6, 4}, {3, 5, 1, 1}, 1, 0},
      {{3, 2, 7, 7}, {2, 2, 3, 3}, 1, 0},
      {{1, 2, 4, 4}, {2, 2, 3, 3}, 1, 2},
  };
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    auto x = support::random_leaf(c.x, seed++);
    auto w = support::random_leaf(c.w, seed++);
    const auto got = dd::conv2d(x, w, c.stride, c.pad);
    const auto want = oracle::conv(support::to_arr(x->value), support::to_arr(w->value), c.stride, c.pad);
    REQUIRE(got->value.shape() == dd::Shape{want.n, want.c, want.h, want.w});
    CHECK(support::max_abs_diff(support::to_vec(got->value), want.v) < 1e-6);
  }
}

TEST_CASE("conv2d float path agrees with the oracle") {
  auto xd = support::random_leaf({2, 3, 6, 6}, 3);
  auto wd = support::random_leaf({4, 3, 3, 3}, 4);
  auto y = dd::conv2d(dd::constant(xd->value.cast<float>()), dd::constant(wd->value.cast<float>()), 1, 1);
  const auto want = oracle::conv(support::to_arr(xd->value), support::to_arr(wd->value), 1, 1);
  CHECK(support::max_abs_diff(support::to_vec(y->value), want.v) < 1e-5);
}

TEST_CASE("conv2d shape errors name both shapes") {
  CHECK_THROWS_WITH(dd::conv2d(filled({1, 3, 4, 4}, 1.0), filled({2, 2, 3, 3}, 1.0), 1, 1),
                    ContainsSubstring("[1, 3, 4, 4]") && ContainsSubstring("[2, 2, 3, 3]"));
  CHECK_THROWS_AS(dd::conv2d(filled({1, 1, 2, 2}, 1.0), filled({1, 1, 5, 5}, 1.0), 1, 0), dd::ShapeError);
}

TEST_CASE("conv2d gradients match finite differences") {
  for (std::size_t stride : {1u, 2u}) {
    auto x = support::random_leaf({2, 2, 5, 5}, 20);
    auto w = support::random_leaf({3, 2, 3, 3}, 21);
    auto probe = support::random_leaf({2, 3, stride == 1 ? 5u : 3u, stride == 1 ? 5u : 3u}, 22);
    probe->requires_grad = false;
    CHECK(support::grad_rel_error({x, w}, [&] { return dd::sum(dd::mul(dd::conv2d(x, w, stride, 1), probe)); }) <
          1e-6);
  }
  auto x = support::random_leaf({2, 4, 3, 3}, 23);
  auto w = support::random_leaf({5, 4, 1, 1}, 24);
  auto probe = dd::constant(support::random_leaf({2, 5, 3, 3}, 25)->value);
  CHECK(support::grad_rel_error({x, w}, [&] { return dd::sum(dd::mul(dd::conv2d(x, w), probe)); }) < 1e-6);
}

TEST_CASE("batchnorm train mode normalizes each channel") {
  auto x = support::random_leaf({4, 3, 5, 5}, 30);
  for (auto& v : x->value.values()) v = 3.0 * v + 2.0;
  dd::BatchNormState<double> bn(3);
  auto y = dd::batchnorm(x, bn, dd::Mode::Train);
  const auto want = oracle::batchnorm_train(support::to_arr(x->value), {1, 1, 1}, {0, 0, 0});
  CHECK(support::max_abs_diff(support::to_vec(y->value), want.v) < 1e-12);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) mean += y->value.at(n, c, i, j) / 100.0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) sq += std::pow(y->value.at(n, c, i, j) - mean, 2) / 100.0;
    CHECK_THAT(mean, WithinAbs(0.0, 1e-5));
    CHECK_THAT(sq, WithinAbs(1.0, 1e-3));  // epsilon shrinks the variance slightly
  }
}

TEST_CASE("batchnorm fixed point and affine collapse") {
  // Per channel: values -1, 1 -> mean 0, biased variance 1.
  auto x = from({2, 1, 1, 1}, {-1.0, 1.0});
  dd::BatchNormState<double> bn(1);
  auto y = dd::batchnorm(x, bn, dd::Mode::Train);
  CHECK_THAT(y->value[0], WithinAbs(-1.0, 1e-5));
  CHECK_THAT(y->value[1], WithinAbs(1.0, 1e-5));

  dd::BatchNormState<double> collapsed(1);
  collapsed.gamma->value[0] = 0.0;
  collapsed.beta->value[0] = 0.25;
  auto z = dd::batchnorm(support::random_leaf({3, 1, 2, 2}, 31), collapsed, dd::Mode::Train);
  for (double v : z->value.values()) CHECK(v == 0.25);
}

TEST_CASE("batchnorm running statistics and eval mode") {
  auto x = from({2, 1, 1, 2}, {1.0, 3.0, 5.0, 7.0});
  dd::BatchNormState<double> bn(1);
  dd::batchnorm(x, bn, dd::Mode::Train);
  // mean 4, unbiased variance 20/3, momentum 0.1
  CHECK_THAT(bn.running_mean[0], WithinAbs(0.4, 1e-12));
  CHECK_THAT(bn.running_var[0], WithinAbs(0.9 + 0.1 * 20.0 / 3.0, 1e-12));
  auto y = dd::batchnorm(x, bn, dd::Mode::Eval);
  const auto want = oracle::batchnorm_eval(support::to_arr(x->value), {1.0}, {0.0}, {bn.running_mean[0]},
                                           {bn.running_var[0]});
  CHECK(support::max_abs_diff(support::to_vec(y->value), want.v) < 1e-12);
}

TEST_CASE("batchnorm rejects a single element per channel in train mode") {
  dd::BatchNormState<double> bn(2);
  CHECK_THROWS_AS(dd::batchnorm(filled({1, 2, 1, 1}, 1.0), bn, dd::Mode::Train), dd::InputError);
  CHECK_NOTHROW(dd::batchnorm(filled({1, 2, 1, 1}, 1.0), bn, dd::Mode::Eval));
  CHECK_THROWS_AS(dd::batchnorm(filled({1, 3, 2, 2}, 1.0), bn, dd::Mode::Train), dd::ShapeError);
}

TEST_CASE("batchnorm gradients match finite differences") {
  auto x = support::random_leaf({3, 2, 3, 3}, 32);
  dd::BatchNormState<double> bn(2);
  bn.gamma->value[0] = 1.3;
  bn.beta->value[1] = -0.2;
  auto probe = dd::constant(support::random_leaf({3, 2, 3, 3}, 33)->value);
  CHECK(support::grad_rel_error({x, bn.gamma, bn.beta},
                                [&] { return dd::sum(dd::mul(dd::batchnorm(x, bn, dd::Mode::Train), probe)); }) <
        1e-5);
  CHECK(support::grad_rel_error({x, bn.gamma, bn.beta},
                                [&] { return dd::sum(dd::mul(dd::batchnorm(x, bn, dd::Mode::Eval), probe)); }) <
        1e-6);
}

TEST_CASE("relu values and subgradient") {
  auto y = dd::relu(from({3}, {-1.0, 0.0, 2.0}));
  CHECK(y->value.values()[0] == 0.0);
  CHECK(y->value.values()[1] == 0.0);
  CHECK(y->value.values()[2] == 2.0);
  const auto negative = dd::relu(filled({2, 2}, -4.0));
  for (double v : negative->value.values()) CHECK(v == 0.0);

  auto x = dd::leaf(dd::Tensor<double>({3}, std::vector<double>{3.0, -3.0, 0.0}));
  const auto g = dd::backward(dd::sum(dd::relu(x)), dd::ParameterList<double>{{"x", x, false}});
  CHECK(g[0][0] == 1.0);
  CHECK(g[0][1] == 0.0);
  CHECK(g[0][2] == 0.0);
}

TEST_CASE("concat and slice") {
  auto a = support::random_leaf({2, 2, 3, 3}, 40);
  auto b = support::random_leaf({2, 2, 3, 3}, 41);
  CHECK(dd::concat<double>({a})->value == a->value);
  auto ab = dd::concat<double>({a, b});
  REQUIRE(ab->value.shape() == dd::Shape{2, 4, 3, 3});
  CHECK(dd::slice_channels(ab, 0, 2)->value == a->value);
  CHECK(dd::slice_channels(ab, 2, 4)->value == b->value);
  const auto want = oracle::concat({support::to_arr(a->value), support::to_arr(b->value)});
  CHECK(support::max_abs_diff(support::to_vec(ab->value), want.v) == 0.0);

  const auto g = dd::backward(dd::sum(ab), dd::ParameterList<double>{{"a", a, false}, {"b", b, false}});
  for (const auto& t : g)
    for (double v : t.values()) CHECK(v == 1.0);

  // concat-then-slice round trip passes gradients through unchanged
  auto probe = dd::constant(support::random_leaf({2, 2, 3, 3}, 42)->value);
  const auto gs = dd::backward(dd::sum(dd::mul(dd::slice_channels(dd::concat<double>({a, b}), 0, 2), probe)),
                               dd::ParameterList<double>{{"a", a, false}, {"b", b, false}});
  CHECK(gs[0] == probe->value);
  for (double v : gs[1].values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(dd::concat<double>({a, support::random_leaf({2, 2, 4, 3}, 43)}), dd::ShapeError);
  CHECK_THROWS_AS(dd::slice_channels(ab, 3, 5), dd::ShapeError);
}

TEST_CASE("pooling") {
  auto c = filled({2, 3, 4, 4}, 2.5);
  auto g = dd::global_avgpool(c);
  REQUIRE(g->value.shape() == dd::Shape{2, 3});
  for (double v : g->value.values()) CHECK(v == 2.5);

  auto x = from({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto p = dd::avgpool2x2(x);
  REQUIRE(p->value.shape() == dd::Shape{1, 1, 1, 2});
  CHECK(p->value[0] == 3.5);
  CHECK(p->value[1] == 5.5);
  CHECK_THROWS_AS(dd::avgpool2x2(filled({1, 1, 3, 4}, 1.0)), dd::ShapeError);

  auto y = support::random_leaf({2, 2, 4, 4}, 44);
  auto probe = dd::constant(support::random_leaf({2, 2, 2, 2}, 45)->value);
  CHECK(support::grad_rel_error({y}, [&] { return dd::sum(dd::mul(dd::avgpool2x2(y), probe)); }) < 1e-6);
  auto probe2 = dd::constant(support::random_leaf({2, 2}, 46)->value);
  CHECK(support::grad_rel_error({y}, [&] { return dd::sum(dd::mul(dd::global_avgpool(y), probe2)); }) < 1e-6);
}

TEST_CASE("linear and softmax cross-entropy") {
  auto x = support::random_leaf({3, 4}, 50);
  dd::Tensor<double> eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  auto y = dd::linear(x, dd::constant(eye), filled({4}, 0.0));
  CHECK(y->value == x->value);
  CHECK_THROWS_AS(dd::linear(x, filled({2, 3}, 0.0), filled({2}, 0.0)), dd::ShapeError);

  for (std::size_t classes : {2u, 10u, 100u}) {
    auto logits = filled({5, classes}, 0.7);
    const std::vector<int> labels{0, 1, 0, 1, 1};
    CHECK_THAT(dd::softmax_cross_entropy<double>(logits, labels)->value[0],
               WithinAbs(std::log(static_cast<double>(classes)), 1e-12));
  }
  auto logits = support::random_leaf({3, 5}, 51);
  const std::vector<int> labels{4, 0, 2};
  CHECK_THAT(dd::softmax_cross_entropy<double>(logits, labels)->value[0],
             WithinAbs(oracle::cross_entropy(support::to_vec(logits->value), 5, labels), 1e-12));
  const std::vector<int> bad{0, 5, 1};
  CHECK_THROWS_AS(dd::softmax_cross_entropy<double>(logits, bad), dd::InputError);
  const std::vector<int> negative{0, -1, 1};
  CHECK_THROWS_AS(dd::softmax_cross_entropy<double>(logits, negative), dd::InputError);

  auto w = support::random_leaf({5, 4}, 52);
  auto b = support::random_leaf({5}, 53);
  CHECK(support::grad_rel_error({x, w, b}, [&] {
          return dd::softmax_cross_entropy<double>(dd::linear(x, w, b), labels);
        }) < 1e-6);
  CHECK(dd::argmax_rows(dd::Tensor<double>({2, 3}, std::vector<double>{0, 2, 1, 5, 5, 1})) ==
        std::vector<int>{1, 0});
}
