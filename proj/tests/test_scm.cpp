#include <cmath>

#include <gtest/gtest.h>

#include "afgan/errors.hpp"
#include "afgan/model.hpp"
#include "afgan/scm.hpp"
#include "test_util.hpp"

using namespace afgan;
using afgan::testing::f64;

#ifndef AFGAN_FIXTURE_DIR
#define AFGAN_FIXTURE_DIR "."
#endif

namespace {

EncoderSpec toy_spec() {
  EncoderSpec s;
  s.n_attrs = 6;
  s.local_dim = 8;
  s.global_dim = 12;
  s.input_resolution = 64;
  return s;
}

}  // namespace

TEST(ScmExamples, ToyEncoderShapes) {
  torch::manual_seed(1);
  auto enc = make_encoder(toy_spec());
  ScmHead head(enc->dims(), 16);
  auto feats = encode_image({torch::rand({2, 3, 64, 64}) * 2 - 1, 2}, *enc, *head);
  EXPECT_EQ(enc->dims().regions, 16);
  EXPECT_EQ(feats.local.sizes(), (std::vector<int64_t>{2, 16, 16}));
  EXPECT_EQ(feats.global.sizes(), (std::vector<int64_t>{2, 16}));
}

TEST(ScmExamples, IdenticalImagesIdenticalFeatures) {
  torch::manual_seed(2);
  auto enc = make_encoder(toy_spec());
  ScmHead head(enc->dims(), 16);
  auto x = torch::rand({1, 3, 64, 64});
  auto a = encode_image({x, 2}, *enc, *head), b = encode_image({x.clone(), 2}, *enc, *head);
  EXPECT_TRUE(torch::equal(a.local, b.local));
  EXPECT_TRUE(torch::equal(a.global, b.global));
}

TEST(ScmExamples, WrongResolutionAndUnknownEncoder) {
  auto enc = make_encoder(toy_spec());
  ScmHead head(enc->dims(), 16);
  EXPECT_THROW(encode_image({torch::rand({1, 3, 32, 32}), 1}, *enc, *head), ContractViolation);
  auto spec = toy_spec();
  spec.name = "inception_v3";
  EXPECT_THROW(make_encoder(spec), CapabilityError);
  spec.name = "torchscript";
  spec.path = "/nonexistent/model.pt";
  EXPECT_THROW(make_encoder(spec), CapabilityError);
}

TEST(ScmExamples, TorchScriptAdapterDeclaresDims) {
  auto spec = toy_spec();
  spec.name = "torchscript";
  spec.path = std::string(AFGAN_FIXTURE_DIR) + "/tiny_encoder.pt";
  auto enc = make_encoder(spec);
  EXPECT_EQ(enc->dims().local_dim, 6);
  EXPECT_EQ(enc->dims().regions, 16);
  EXPECT_EQ(enc->dims().global_dim, 10);
  ScmHead head(enc->dims(), 5);
  auto feats = encode_image({torch::rand({2, 3, 64, 64}), 2}, *enc, *head);
  EXPECT_EQ(feats.local.sizes(), (std::vector<int64_t>{2, 5, 16}));
}

TEST(ScmExamples, SingleAttributeScoreIsItsRelevance) {
  auto a = torch::randn({4, 1}, f64()), img = torch::randn({4, 6}, f64());
  auto m = local_match(a, img, 5, 5);
  EXPECT_NEAR(m.r_local.item<double>(), m.relevance[0].item<double>(), 1e-12);
}

TEST(ScmExamples, ParallelContextsGiveOnePlusLogNOverGamma) {
  // Each attribute owns one region that holds a scaled copy of it; a large
  // gamma1 drives alpha onto that region so c_i is parallel to S_i.
  auto a = torch::eye(3, f64());
  auto img = torch::eye(3, f64()) * 2.0;
  auto m = local_match(a, img, 200, 5);
  EXPECT_TRUE(torch::allclose(m.relevance, torch::ones({3}, f64()), 0, 1e-9));
  EXPECT_NEAR(m.r_local.item<double>(), 1 + std::log(3.0) / 5, 1e-9);
}

TEST(ScmExamples, LocalMatchHandOracle) {
  // C=2, N=2, R=2; tests/oracles/small_cases.py
  auto attrs = torch::tensor({{1.0, 0.0}, {0.2, 1.0}}, f64());   // columns are attributes
  auto image = torch::tensor({{0.9, 0.3}, {0.1, 0.8}}, f64());   // columns are regions
  auto m = local_match(attrs, image, 5, 5);
  EXPECT_NEAR(m.region_weights[0][0].item<double>(), 0.800932755829, 1e-9);
  EXPECT_NEAR(m.region_weights[1][1].item<double>(), 0.800932755829, 1e-9);
  EXPECT_NEAR(m.relevance[0].item<double>(), 0.994990437850, 1e-9);
  EXPECT_NEAR(m.relevance[1].item<double>(), 0.844225438400, 1e-9);
  EXPECT_NEAR(m.r_local.item<double>(), 1.072119529602, 1e-9);
}

TEST(ScmExamples, GlobalMatchCosines) {
  auto v = torch::tensor({1.0, -2.0, 0.5}, f64());
  EXPECT_NEAR(global_match(v, v).item<double>(), 1.0, 1e-12);
  EXPECT_NEAR(global_match(v, torch::tensor({2.0, 1.0, 0.0}, f64())).item<double>(), 0.0, 1e-12);
  EXPECT_NEAR(global_match(v, -3 * v).item<double>(), -1.0, 1e-12);
  EXPECT_EQ(global_match(v, torch::zeros({3}, f64())).item<double>(), 0.0);
}

TEST(ScmExamples, LossOfSinglePairIsZero) {
  auto one = torch::full({1, 1}, 0.7, f64());
  auto loss = scm_loss_from_scores(one, one, 10);
  EXPECT_EQ(loss.total.item<double>(), 0.0);
}

TEST(ScmExamples, LossOfEqualScoresIsFourMLogM) {
  for (int64_t m : {2, 3, 5}) {
    auto s = torch::full({m, m}, 0.3, f64());
    auto loss = scm_loss_from_scores(s, s, 10);
    EXPECT_NEAR(loss.local_images.item<double>(), m * std::log(double(m)), 1e-9);
    EXPECT_NEAR(loss.total.item<double>(), 4 * m * std::log(double(m)), 1e-9);
  }
}

TEST(ScmExamples, LossTwoByTwoOracle) {
  auto s = torch::tensor({{2.0, 0.0}, {0.0, 2.0}}, f64());
  auto loss = scm_loss_from_scores(s, s, 1);
  EXPECT_NEAR(loss.global_attributes.item<double>(), 0.253856022086, 1e-9);
  EXPECT_NEAR(loss.total.item<double>(), 1.015424088344, 1e-9);
}

TEST(ScmExamples, EmptyBatchIsContractViolation) {
  auto empty = torch::zeros({0, 0}, f64());
  EXPECT_THROW(scm_loss_from_scores(empty, empty, 1), ContractViolation);
}

TEST(ScmNormalization, AlphaRowsAndSbarColumns) {
  torch::manual_seed(13);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    const int64_t c = 1 + k % 6, n = 1 + (k / 6) % 7, r = 1 + k % 9;
    auto m = local_match(torch::randn({c, n}, f64()) * 2, torch::randn({c, r}, f64()) * 2, 5, 5);
    ASSERT_GE(m.region_weights.min().item<double>(), 0.0);
    worst = std::max(worst, (m.region_weights.sum(-1) - 1).abs().max().item<double>());
    worst = std::max(worst, (m.attr_weights.sum(-2) - 1).abs().max().item<double>());
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(ScmProperties, LossNonNegativeAndVanishesWithMargin) {
  torch::manual_seed(7);
  for (int k = 0; k < 100; ++k) {
    auto a = torch::randn({4, 4}, f64()), b = torch::randn({4, 4}, f64());
    EXPECT_GE(scm_loss_from_scores(a, b, 10).total.item<double>(), 0.0);
  }
  auto margin = torch::eye(3, f64()) * 50;
  EXPECT_LT(scm_loss_from_scores(margin, margin, 1).total.item<double>(), 1e-15);
}

TEST(ScmProperties, RelevanceScaleInvariantWithFixedAlpha) {
  torch::manual_seed(8);
  auto attrs = torch::randn({4, 3}, f64()), img = torch::randn({4, 5}, f64());
  auto alpha = local_match(attrs, img, 5, 5).region_weights;
  auto relevance = [&](const torch::Tensor& image) {
    auto c = torch::matmul(alpha, image.t());
    return afgan::cosine_similarity(c, attrs.t());
  };
  EXPECT_TRUE(torch::allclose(relevance(img), relevance(img * 7.5), 0, 1e-12));
}

TEST(ScmProperties, BatchLossMatchesPairwiseScores) {
  torch::manual_seed(9);
  auto la = torch::randn({3, 4, 2}, f64()), ga = torch::randn({3, 4}, f64());
  ImageFeatures img{torch::randn({3, 4, 5}, f64()), torch::randn({3, 4}, f64())};
  auto mat = local_match_matrix(la, img.local, 5, 5);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(mat[i][j].item<double>(), local_match(la[i], img.local[j], 5, 5).r_local.item<double>(), 1e-12);
    }
  }
  auto direct = scm_loss_from_scores(mat, global_match_matrix(ga, img.global), 10).total;
  EXPECT_NEAR(scm_batch_loss(la, ga, img, 5, 5, 10).total.item<double>(), direct.item<double>(), 1e-12);
}

TEST(ScmGradCheck, BatchLossInAttributeFeatures) {
  // M=2, C=4, R=4 (N=3 attributes), double precision.
  torch::manual_seed(10);
  auto la = torch::randn({2, 4, 3}, f64()), ga = torch::randn({2, 4}, f64());
  ImageFeatures img{torch::randn({2, 4, 4}, f64()), torch::randn({2, 4}, f64())};
  using afgan::testing::grad_mismatch;
  EXPECT_LE(grad_mismatch([&](auto x) { return scm_batch_loss(x, ga, img, 5, 5, 10).total; }, la, 1e-3), 1.0);
  EXPECT_LE(grad_mismatch([&](auto x) { return scm_batch_loss(la, x, img, 5, 5, 10).total; }, ga, 1e-3), 1.0);
  EXPECT_LE(grad_mismatch([&](auto x) {
              return scm_batch_loss(la, ga, {x, img.global}, 5, 5, 10).total;
            }, img.local, 1e-3), 1.0);
}

TEST(ScmGradCheck, CompositeGeneratorToScm) {
  // Attributes -> AEM -> CA -> three stages -> toy encoder -> similarity loss.
  TrainConfig c;
  c.n_attrs = 3;
  c.attr_dim = 4;
  c.z_dim = 4;
  c.ca_dim = 4;
  c.stage_resolutions = {8, 16, 32};
  c.stage_channels = {6, 4, 4};
  c.residual_blocks = 1;
  c.disc_channels = 4;
  c.encoder_channels = 4;
  c.encoder_global_dim = 4;
  torch::manual_seed(11);
  AfganModel model(c);
  model->to(torch::kFloat64);
  model->eval();
  auto bits = torch::tensor({{1.0, 0.0, 1.0}, {0.0, 1.0, 1.0}}, f64());
  auto z = torch::randn({2, 4}, f64()), eps = torch::randn({2, 4}, f64());
  auto loss = [&] {
    auto g = model->generate(bits, z, eps);
    auto feats = model->encode(g.final_image().pixels);
    return scm_batch_loss(g.attrs.local, g.attrs.global, feats, 5, 5, 10).total +
           kl_regularizer(g.cond);
  };
  std::vector<torch::Tensor> params;
  for (auto* m : std::initializer_list<torch::nn::Module*>{model->aem.get(), model->ca.get(),
                                                           model->generator.get()}) {
    for (auto& p : m->parameters()) params.push_back(p);
  }
  // ReLU units make the loss piecewise smooth; a sampled entry that lands on
  // a kink is skipped, at most a few of them.
  auto check = afgan::testing::param_grad_check(params, loss, 40, 3, 1e-3, 1e-7);
  EXPECT_LE(check.worst, 1.0);
  EXPECT_GE(check.checked, 36);
}
