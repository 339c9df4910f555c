#include <gtest/gtest.h>

#include "afgan/aem.hpp"
#include "afgan/errors.hpp"
#include "test_util.hpp"

using namespace afgan;
using afgan::testing::f64;
using afgan::testing::t64;

TEST(AemExamples, GlobalOfZeroBitsIsZero) {
  auto w = torch::randn({5, 4}, f64());
  EXPECT_TRUE(torch::equal(aem::global_feature(torch::zeros({4}, f64()), w), torch::zeros({5}, f64())));
}

TEST(AemExamples, GlobalOfOneHotSelectsColumn) {
  auto w = torch::randn({5, 4}, f64());
  for (int k = 0; k < 4; ++k) {
    auto e = torch::zeros({4}, f64());
    e[k] = 1;
    EXPECT_TRUE(torch::allclose(aem::global_feature(e, w), w.select(1, k), 0, 1e-12));
  }
}

TEST(AemExamples, GlobalHandMatrix) {
  auto w = torch::tensor({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}}, f64());
  auto out = aem::global_feature(t64({1, 0, 1}), w);
  EXPECT_NEAR(out[0].item<double>(), 4.0, 1e-12);
  EXPECT_NEAR(out[1].item<double>(), 10.0, 1e-12);
}

TEST(AemExamples, GlobalDimensionMismatchIsConfigError) {
  EXPECT_THROW(aem::global_feature(torch::zeros({3}), torch::zeros({2, 4})), ConfigError);
}

TEST(AemExamples, TwoPathAllOnesAndAllZeros) {
  auto e1 = torch::randn({3, 4}, f64()), e0 = torch::randn({3, 4}, f64());
  EXPECT_TRUE(torch::equal(aem::two_path_embedding(torch::ones({4}, f64()), e1, e0), e1));
  EXPECT_TRUE(torch::equal(aem::two_path_embedding(torch::zeros({4}, f64()), e1, e0), e0));
}

TEST(AemExamples, TwoPathPerColumnSelection) {
  // embed_one columns [1,2], [3,4]; embed_zero columns [5,6], [7,8].
  auto e1 = torch::tensor({{1.0, 3.0}, {2.0, 4.0}}, f64());
  auto e0 = torch::tensor({{5.0, 7.0}, {6.0, 8.0}}, f64());
  auto out = aem::two_path_embedding(t64({1, 0}), e1, e0);
  EXPECT_TRUE(torch::equal(out, torch::tensor({{1.0, 7.0}, {2.0, 8.0}}, f64())));
}

TEST(AemExamples, TwoPathRejectsNonBinary) {
  auto e = torch::zeros({2, 2});
  EXPECT_THROW(aem::two_path_embedding(torch::tensor({0.5f, 1.0f}), e, e), ValidationError);
}

TEST(AemExamples, SelfAttentionSingleAttribute) {
  auto s = torch::randn({4, 1}, f64());
  auto wf = torch::randn({4, 4}, f64()), wg = torch::randn({4, 4}, f64()),
       wh = torch::randn({4, 4}, f64());
  auto out = aem::self_attention(s, wf, wg, wh);
  EXPECT_NEAR(out.weights.item<double>(), 1.0, 1e-12);
  EXPECT_TRUE(torch::allclose(out.features, torch::matmul(wh, s), 0, 1e-12));
}

TEST(AemExamples, SelfAttentionZeroScoresAverage) {
  auto s = torch::randn({4, 3}, f64());
  auto wg = torch::randn({4, 4}, f64()), wh = torch::randn({4, 4}, f64());
  auto out = aem::self_attention(s, torch::zeros({4, 4}, f64()), wg, wh);
  EXPECT_TRUE(torch::allclose(out.weights, torch::full({3, 3}, 1.0 / 3, f64()), 0, 1e-12));
  auto mean = torch::matmul(wh, s).mean(1, true).expand({4, 3});
  EXPECT_TRUE(torch::allclose(out.features, mean, 0, 1e-12));
}

TEST(AemExamples, SelfAttentionTwoByTwoOracle) {
  // C=1, N=2: S = [1, 2], W_f = 0.5, W_g = 1.5, W_h = 2 (tests/oracles/small_cases.py).
  auto out = aem::self_attention(torch::tensor({{1.0, 2.0}}, f64()), torch::full({1, 1}, 0.5, f64()),
                                 torch::full({1, 1}, 1.5, f64()), torch::full({1, 1}, 2.0, f64()));
  EXPECT_NEAR(out.features[0][0].item<double>(), 3.358357398351, 1e-9);
  EXPECT_NEAR(out.features[0][1].item<double>(), 3.635148952387, 1e-9);
}

TEST(AemExamples, ModuleShapesAndGate) {
  AemOptions o;
  o.n_attrs = 6;
  o.dim = 8;
  o.attention_gate = true;
  AttributeEmbedding m(o);
  auto out = m->forward(torch::tensor({{1.f, 0.f, 1.f, 0.f, 1.f, 0.f}}));
  EXPECT_EQ(out.global.sizes(), (std::vector<int64_t>{1, 8}));
  EXPECT_EQ(out.local.sizes(), (std::vector<int64_t>{1, 8, 6}));
  EXPECT_EQ(out.attention.sizes(), (std::vector<int64_t>{1, 6, 6}));
  // The gate starts at zero, so the output is the two-path embedding.
  EXPECT_TRUE(torch::equal(out.local, out.local_raw));
}

TEST(AemExamples, SingleTableGivesZeroForUnsetBits) {
  AemOptions o;
  o.n_attrs = 3;
  o.dim = 4;
  o.two_path = false;
  AttributeEmbedding m(o);
  auto local = m->embed_two_path(torch::tensor({1.f, 0.f, 1.f}));
  EXPECT_TRUE(torch::equal(local.select(1, 1), torch::zeros({4})));
  EXPECT_TRUE(torch::equal(local.select(1, 0), m->embed_one.select(1, 0)));
}

TEST(AemNormalization, AttentionColumnsSumToOne) {
  torch::manual_seed(11);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    const int64_t c = 1 + k % 7, n = 1 + (k / 7) % 9;
    auto s = torch::randn({c, n}, f64()) * 3;
    auto out = aem::self_attention(s, torch::randn({c, c}, f64()), torch::randn({c, c}, f64()),
                                   torch::randn({c, c}, f64()));
    ASSERT_GE(out.weights.min().item<double>(), 0.0);
    worst = std::max(worst, (out.weights.sum(0) - 1).abs().max().item<double>());
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(AemProperties, UnselectedTableIsIgnored) {
  torch::manual_seed(3);
  auto e1 = torch::randn({4, 5}, f64()), e0 = torch::randn({4, 5}, f64());
  auto bits = t64({1, 0, 1, 1, 0});
  auto before = aem::two_path_embedding(bits, e1, e0);
  auto e0_changed = e0 + torch::randn({4, 5}, f64()) * 10;
  auto after = aem::two_path_embedding(bits, e1, e0_changed);
  for (int64_t i : {0, 2, 3}) EXPECT_TRUE(torch::equal(before.select(1, i), after.select(1, i)));
}

TEST(AemProperties, GlobalIsLinearOnDisjointSupport) {
  auto w = torch::randn({6, 5}, f64());
  auto a = t64({1, 0, 0, 1, 0}), b = t64({0, 1, 0, 0, 1});
  EXPECT_TRUE(torch::allclose(aem::global_feature(a, w) + aem::global_feature(b, w),
                              aem::global_feature(a + b, w), 0, 1e-12));
}

TEST(AemProperties, BatchedMatchesUnbatched) {
  auto s = torch::randn({2, 4, 3}, f64());
  auto wf = torch::randn({4, 4}, f64()), wg = torch::randn({4, 4}, f64()),
       wh = torch::randn({4, 4}, f64());
  auto batched = aem::self_attention(s, wf, wg, wh);
  for (int b = 0; b < 2; ++b) {
    auto single = aem::self_attention(s[b], wf, wg, wh);
    EXPECT_TRUE(torch::allclose(batched.features[b], single.features, 0, 1e-12));
  }
}

// Finite differences against autograd on C=4, N=3, double precision.
class AemGradCheck : public ::testing::Test {
 protected:
  void SetUp() override {
    torch::manual_seed(5);
    bits = t64({1, 0, 1});
    w_global = torch::randn({4, 3}, f64());
    e1 = torch::randn({4, 3}, f64());
    e0 = torch::randn({4, 3}, f64());
    wf = torch::randn({4, 4}, f64()) * 0.5;
    wg = torch::randn({4, 4}, f64()) * 0.5;
    wh = torch::randn({4, 4}, f64());
    probe = torch::randn({4, 3}, f64());
    probe_g = torch::randn({4}, f64());
  }
  torch::Tensor loss(const torch::Tensor& wgl, const torch::Tensor& one, const torch::Tensor& zero,
                     const torch::Tensor& f, const torch::Tensor& g, const torch::Tensor& h) {
    auto local = aem::self_attention(aem::two_path_embedding(bits, one, zero), f, g, h).features;
    return (torch::sin(local) * probe).sum() + (aem::global_feature(bits, wgl) * probe_g).sum();
  }
  torch::Tensor bits, w_global, e1, e0, wf, wg, wh, probe, probe_g;
};

TEST_F(AemGradCheck, EveryParameterMatrix) {
  using afgan::testing::grad_mismatch;
  const double rtol = 1e-3;
  EXPECT_LE(grad_mismatch([&](auto x) { return loss(x, e1, e0, wf, wg, wh); }, w_global, rtol, 1e-8, 1e-4), 1.0);
  EXPECT_LE(grad_mismatch([&](auto x) { return loss(w_global, x, e0, wf, wg, wh); }, e1, rtol, 1e-8, 1e-4), 1.0);
  EXPECT_LE(grad_mismatch([&](auto x) { return loss(w_global, e1, x, wf, wg, wh); }, e0, rtol, 1e-8, 1e-4), 1.0);
  EXPECT_LE(grad_mismatch([&](auto x) { return loss(w_global, e1, e0, x, wg, wh); }, wf, rtol, 1e-8, 1e-4), 1.0);
  EXPECT_LE(grad_mismatch([&](auto x) { return loss(w_global, e1, e0, wf, x, wh); }, wg, rtol, 1e-8, 1e-4), 1.0);
  EXPECT_LE(grad_mismatch([&](auto x) { return loss(w_global, e1, e0, wf, wg, x); }, wh, rtol, 1e-8, 1e-4), 1.0);
}
