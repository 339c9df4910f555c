#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "afgan/cond_augment.hpp"
#include "afgan/harness.hpp"
#include "test_util.hpp"

using namespace afgan;
using afgan::testing::f64;
using afgan::testing::t64;

TEST(CondAugmentExamples, ZeroVarianceGivesMean) {
  auto mu = t64({0.3, -1.2, 2.0});
  auto lv = torch::full({3}, -std::numeric_limits<double>::infinity(), f64());
  auto out = reparameterize(mu, lv, t64({5.0, -3.0, 0.7}));
  EXPECT_TRUE(torch::equal(out.sample, mu));
}

TEST(CondAugmentExamples, SameSeedSameSample) {
  torch::manual_seed(1);
  CondAugment ca(8, 5);
  auto g = torch::randn({2, 8});
  auto a = ca->forward(g, make_generator(42));
  auto b = ca->forward(g, make_generator(42));
  EXPECT_TRUE(torch::equal(a.sample, b.sample));
  EXPECT_TRUE(torch::equal(a.eps, b.eps));
  auto c = ca->forward(g, make_generator(43));
  EXPECT_FALSE(torch::equal(a.sample, c.sample));
}

TEST(CondAugmentExamples, KlStandardNormalIsZero) {
  EXPECT_EQ(kl_regularizer(torch::zeros({7}, f64()), torch::zeros({7}, f64())).item<double>(), 0.0);
}

TEST(CondAugmentExamples, KlUnitMean) {
  EXPECT_NEAR(kl_regularizer(t64({1.0}), t64({0.0})).item<double>(), 0.5, 1e-12);
}

TEST(CondAugmentExamples, KlLogFourVariance) {
  // 0.5 (4 - log 4 - 1); tests/oracles/small_cases.py
  EXPECT_NEAR(kl_regularizer(t64({0.0}), t64({std::log(4.0)})).item<double>(), 0.806852819440, 1e-9);
}

TEST(CondAugmentProperties, KlNonNegativeAndZeroOnlyAtStandardNormal) {
  torch::manual_seed(2);
  for (int k = 0; k < 200; ++k) {
    auto mu = torch::randn({6}, f64()) * 2, lv = torch::randn({6}, f64()) * 2;
    EXPECT_GT(kl_regularizer(mu, lv).item<double>(), 0.0);
  }
}

TEST(CondAugmentProperties, KlGradientInMuIsMuOverDim) {
  auto mu = torch::randn({5}, f64()).set_requires_grad(true);
  auto lv = torch::randn({5}, f64());
  auto grad = torch::autograd::grad({kl_regularizer(mu, lv)}, {mu})[0];
  EXPECT_TRUE(torch::allclose(grad, mu.detach() / 5.0, 0, 1e-12));
}

TEST(CondAugmentGradCheck, KlRegularizer) {
  torch::manual_seed(4);
  auto mu = torch::randn({6}, f64()), lv = torch::randn({6}, f64());
  using afgan::testing::grad_mismatch;
  EXPECT_LE(grad_mismatch([&](auto x) { return kl_regularizer(x, lv); }, mu, 1e-3), 1.0);
  EXPECT_LE(grad_mismatch([&](auto x) { return kl_regularizer(mu, x); }, lv, 1e-3), 1.0);
}
