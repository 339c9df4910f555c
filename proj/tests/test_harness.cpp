#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "afgan/errors.hpp"
#include "afgan/harness.hpp"
#include "afgan/metrics.hpp"
#include "test_util.hpp"

using namespace afgan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("afgan_harness_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.n_attrs = 3;
  c.attr_dim = 8;
  c.z_dim = 8;
  c.ca_dim = 8;
  c.stage_resolutions = {8, 16, 32};
  c.stage_channels = {16, 8, 4};
  c.residual_blocks = 1;
  c.disc_channels = 4;
  c.patch_grid = 2;
  c.batch_size = 4;
  c.epochs = 2;
  c.encoder_channels = 8;
  c.encoder_global_dim = 8;
  c.encoder_pretrain_steps = 5;
  c.scm_pretrain_steps = 5;
  c.attention_gate = true;
  return c;
}

ImageDataset tiny_data(const TrainConfig& c, int64_t n = 16) {
  SynthSpec spec;
  spec.n_attrs = c.n_attrs;
  spec.resolution = c.final_resolution();
  return render_dataset(spec, make_synth_records(spec, n, 3));
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Deterministic smooth test images, the same formula as
// tests/oracles/ssim_reference.py.
std::pair<torch::Tensor, torch::Tensor> pattern(int64_t res, double phase) {
  auto c = torch::arange(3, torch::kFloat64).view({3, 1, 1});
  auto i = torch::arange(res, torch::kFloat64).view({1, res, 1});
  auto j = torch::arange(res, torch::kFloat64).view({1, 1, res});
  auto x = 0.8 * torch::sin(0.3 * i + 0.2 * j + c);
  auto y = (x + 0.3 * torch::cos(0.5 * i - 0.1 * j * (c + 1) + phase)).clamp(-1, 1);
  return {x.unsqueeze(0), y.unsqueeze(0)};
}

}  // namespace

// ---------------------------------------------------------------------------
// MS-SSIM
// ---------------------------------------------------------------------------

TEST(HarnessExamples, SsimMatchesReference) {
  // scikit-image structural_similarity, Gaussian sigma 1.5, population
  // covariance; tests/oracles/ssim_reference.py
  auto [x32, y32] = pattern(32, 0.7);
  auto [x64, y64] = pattern(64, 0.7);
  EXPECT_NEAR(ssim(x32, y32).ssim.item<double>(), 0.820022130966, 1e-6);
  EXPECT_NEAR(ssim(x64, y64).ssim.item<double>(), 0.822726039312, 1e-6);
  EXPECT_NEAR(ms_ssim(x32, y32).item<double>(), 0.906322160768, 1e-6);
  EXPECT_NEAR(ms_ssim(x64, y64).item<double>(), 0.925612218941, 1e-6);
}

TEST(HarnessExamples, MsSsimOfImageWithItselfIsOne) {
  auto img = torch::rand({2, 3, 64, 64}) * 2 - 1;
  EXPECT_TRUE(torch::allclose(ms_ssim(img, img), torch::ones({2}, torch::kFloat64), 0, 1e-12));
}

TEST(HarnessExamples, MsSsimOfIndependentNoiseIsLow) {
  // Reference: 100 numpy noise pairs give mean 0.0285, max 0.111.
  torch::manual_seed(0);
  auto a = torch::rand({100, 3, 64, 64}) * 2 - 1, b = torch::rand({100, 3, 64, 64}) * 2 - 1;
  EXPECT_LT(ms_ssim(a, b).mean().item<double>(), 0.2);
  auto pool = torch::rand({30, 3, 64, 64}) * 2 - 1;
  EXPECT_LT(eval_msssim(pool, 100, 1), 0.2);
}

TEST(HarnessExamples, MsSsimScaleCount) {
  EXPECT_EQ(ms_ssim_scales(256), 5);
  EXPECT_EQ(ms_ssim_scales(64), 3);
  EXPECT_EQ(ms_ssim_scales(32), 2);
  EXPECT_EQ(ms_ssim_scales(16), 1);
  auto small = torch::zeros({2, 3, 16, 16});
  EXPECT_THROW(ms_ssim(small, small), ContractViolation);
  EXPECT_THROW(eval_msssim(torch::zeros({1, 3, 64, 64}), 4, 1), ContractViolation);
}

// ---------------------------------------------------------------------------
// Sampling, checkpoints
// ---------------------------------------------------------------------------

TEST(HarnessExamples, SampleCountsResolutionsAndSeed) {
  auto model = build_model(tiny_config());
  AttributeVector attrs({1, 0, 1}, model->attribute_names());
  auto a = sample(model, attrs, 4, 9), b = sample(model, attrs, 4, 9);
  EXPECT_EQ(a.image_count(), 12);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(a.stages[i].sizes(), (std::vector<int64_t>{4, 3, 8 << i, 8 << i}));
    EXPECT_TRUE(torch::equal(a.stages[i], b.stages[i]));
  }
  auto dir = temp_dir("samples");
  EXPECT_EQ(write_samples(a, dir).size(), 12u);
  fs::remove_all(dir);
  EXPECT_THROW(sample(model, AttributeVector({1, 0}), 1, 1), ConfigError);
}

TEST(HarnessProperties, CheckpointSaveLoadSaveIsIdentical) {
  auto dir = temp_dir("ckpt");
  auto model = build_model(tiny_config());
  save_checkpoint(dir / "a.ckpt", to_checkpoint(model));
  auto reloaded = load_model(dir / "a.ckpt");
  save_checkpoint(dir / "b.ckpt", to_checkpoint(reloaded));
  EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
  fs::remove_all(dir);
}

TEST(HarnessProperties, CheckpointConfigMismatchIsVersionedError) {
  auto model = build_model(tiny_config());
  auto ckpt = to_checkpoint(model);
  ckpt.config["attr_dim"] = 16;
  try {
    model_from_checkpoint(ckpt);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("v1"), std::string::npos);
  }
  ckpt = to_checkpoint(model);
  ckpt.config["no_such_key"] = 1;
  EXPECT_THROW(model_from_checkpoint(ckpt), CheckpointError);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TEST(HarnessProperties, MetricsLinePerGeneratorStepAndCheckpointPerEpoch) {
  auto dir = temp_dir("train");
  auto c = tiny_config();
  auto model = build_model(c);
  TrainOptions opts;
  opts.run_dir = dir;
  auto result = train(model, tiny_data(c), opts);
  // 16 images / batch 4 = 4 updates per epoch, cycle 1 D + 4 G.
  EXPECT_EQ(result.d_steps + result.g_steps, 8);
  EXPECT_EQ(static_cast<int64_t>(read_lines(dir / "metrics.jsonl").size()), result.g_steps);
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "epoch_001.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "epoch_002.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "final.ckpt"));
  auto line = nlohmann::json::parse(read_lines(dir / "metrics.jsonl").front());
  for (const char* key : {"step", "epoch", "g_total", "d_total", "per_stage_g", "per_stage_d", "scm", "kl", "lambda_scm"}) {
    EXPECT_TRUE(line.contains(key)) << key;
  }
  fs::remove_all(dir);
}

TEST(HarnessProperties, SeededRunsWriteIdenticalMetrics) {
  auto c = tiny_config();
  std::vector<std::string> logs[2];
  for (int k = 0; k < 2; ++k) {
    auto dir = temp_dir("det" + std::to_string(k));
    auto model = build_model(c);
    TrainOptions opts;
    opts.run_dir = dir;
    train(model, tiny_data(c), opts);
    logs[k] = read_lines(dir / "metrics.jsonl");
    fs::remove_all(dir);
  }
  EXPECT_FALSE(logs[0].empty());
  EXPECT_EQ(logs[0], logs[1]);
}

TEST(HarnessProperties, ConstantHalfDiscriminatorsGiveClosedFormLosses) {
  auto c = tiny_config();
  c.gan_loss = GanLoss::kLog;
  c.epochs = 1;
  auto model = build_model(c);
  {
    torch::NoGradGuard no_grad;
    for (auto& p : model->discriminators->parameters()) p.zero_();  // every logit 0, D = 0.5
  }
  auto dir = temp_dir("half");
  TrainOptions opts;
  opts.run_dir = dir;
  opts.update_discriminators = false;
  train(model, tiny_data(c), opts);
  auto lines = read_lines(dir / "metrics.jsonl");
  ASSERT_FALSE(lines.empty());
  for (const auto& l : lines) {
    auto r = nlohmann::json::parse(l).get<LossReport>();
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(r.per_stage_g[i], 0.693147180560, 1e-6);
      EXPECT_NEAR(r.per_stage_d[i], 1.386294361120, 1e-6);
    }
    EXPECT_EQ(r.g_total, (r.per_stage_g[0] + r.per_stage_g[1] + r.per_stage_g[2]) +
                             r.lambda_scm * r.scm + r.kl_weight * r.kl);
  }
  fs::remove_all(dir);
}

TEST(HarnessProperties, NonFiniteLossAborts) {
  auto c = tiny_config();
  auto data = tiny_data(c);
  data.images[0].fill_(std::nan(""));
  data.images[1].fill_(std::nan(""));
  c.encoder_pretrain_steps = 0;
  c.scm_pretrain_steps = 0;
  auto model = build_model(c);
  EXPECT_THROW(train(model, data), DivergenceError);
}

TEST(HarnessProperties, AblationsChangeOnlyTheirSwitch) {
  auto base = preset("desk");
  auto no_scm = preset("desk-no-scm"), no_aem = preset("desk-no-aem");
  EXPECT_EQ(no_scm.lambda_scm, 0.0);
  EXPECT_TRUE(no_scm.two_path);
  EXPECT_FALSE(no_aem.two_path);
  EXPECT_EQ(no_aem.lambda_scm, base.lambda_scm);
  EXPECT_EQ(base.stage_resolutions, (std::vector<int64_t>{16, 32, 64}));
  EXPECT_EQ(base.n_attrs, 6);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

TEST(HarnessExamples, RealImagesScorePerfectAccuracy) {
  SynthSpec spec;
  OracleClassifier oracle(spec);
  int64_t counter = 0;
  ImageSource renderer = [&](const torch::Tensor& bits) {
    std::vector<torch::Tensor> out;
    for (int64_t b = 0; b < bits.size(0); ++b) {
      out.push_back(from_rgb(synth_generate(spec, AttributeVector::from_tensor(bits[b]), counter++)));
    }
    return torch::stack(out);
  };
  auto pool = render_dataset(spec, make_synth_records(spec, 64, 2)).bits;
  auto report = eval_attr_accuracy(renderer, oracle, oracle.attribute_names(), pool, 200, 4);
  EXPECT_EQ(report.attr_accuracy, 1.0);
  EXPECT_EQ(report.sample_count, 200);
  EXPECT_EQ(report.per_attribute_accuracy.size(), 6u);
}

TEST(HarnessExamples, UntrainedGeneratorIsAtChance) {
  // 500 draws of uniform bits: a generator that ignores its input scores
  // 0.5 per bit up to the binomial spread, 3 sigma = 3 sqrt(0.25 / 500) = 0.067.
  auto c = preset("desk");
  auto model = build_model(c);
  SynthSpec spec;
  OracleClassifier oracle(spec);
  auto pool = render_dataset(spec, make_synth_records(spec, 512, 8)).bits;
  auto report = eval_attr_accuracy(model_source(model, 5), oracle, model->attribute_names(), pool, 500, 6);
  for (double a : report.per_attribute_accuracy) EXPECT_NEAR(a, 0.5, 0.067);
}

TEST(HarnessExamples, ClassifierAttributeMismatch) {
  SynthSpec spec;
  spec.n_attrs = 4;
  OracleClassifier oracle(spec);
  auto model = build_model(tiny_config());
  EXPECT_THROW(eval_attr_accuracy(model_source(model, 1), oracle, model->attribute_names(),
                                  torch::zeros({4, 3}), 4, 1),
               ConfigError);
}

TEST(HarnessExamples, PredictorClassifierUsesPretrainedHead) {
  auto c = tiny_config();
  c.encoder_pretrain_steps = 400;
  c.scm_pretrain_steps = 0;
  auto model = build_model(c);
  auto data = tiny_data(c, 64);
  pretrain_scm(model, data);
  PredictorClassifier predictor(model);
  auto agree = (predictor.classify_batch(data.images) == data.bits).to(torch::kFloat32).mean();
  EXPECT_GT(agree.item<float>(), 0.9f);
}

// ---------------------------------------------------------------------------
// Attention maps
// ---------------------------------------------------------------------------

TEST(HarnessExamples, AttentionMapsOnePerAttributeAndNormalised) {
  auto c = tiny_config();
  auto model = build_model(c);
  AttributeVector attrs({1, 0, 1}, model->attribute_names());
  SynthSpec spec;
  spec.n_attrs = 3;
  spec.resolution = 32;
  auto maps = export_attention_maps(model, attrs, from_rgb(synth_generate(spec, attrs, 1)));
  EXPECT_EQ(maps.weights.size(0), 3);
  EXPECT_EQ(maps.grid, 2);
  EXPECT_TRUE(torch::allclose(maps.weights.sum(1), torch::ones({3}), 0, 1e-6));
  auto dir = temp_dir("attn");
  auto paths = write_attention_maps(maps, dir);
  ASSERT_EQ(paths.size(), 3u);
  EXPECT_EQ(paths[0].filename(), "Bangs_1.pgm");
  EXPECT_EQ(paths[1].filename(), "Eyeglasses_0.pgm");
  EXPECT_TRUE(fs::exists(dir / "attention.json"));
  fs::remove_all(dir);
}

TEST(HarnessExamples, TopFractionIouAndEntropy) {
  auto w = torch::zeros({10, 10});
  w.slice(0, 0, 1).fill_(1.0);  // top row = the top 10%
  auto mask = torch::zeros({10, 10}, torch::kBool);
  mask.slice(0, 0, 2).fill_(true);
  EXPECT_NEAR(top_fraction_iou(w, mask, 0.1), 0.5, 1e-12);
  EXPECT_NEAR(entropy(torch::full({4}, 0.25)), std::log(4.0), 1e-6);
  EXPECT_EQ(entropy(torch::tensor({1.0, 0.0})), 0.0);
}
