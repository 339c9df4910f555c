#pragma once

#include <array>

#include <torch/torch.h>

#include "afgan/cond_augment.hpp"

namespace afgan {

// Hidden feature map passed between generator stages.
struct StageState {
  torch::Tensor h;  // (B, D_i, H_i, W_i)
  int stage_index = 0;
};

struct GeneratedImage {
  torch::Tensor pixels;  // (B, 3, H_i, W_i) in [-1, 1]
  int stage_index = 0;
};

// Attribute-content attention for one stage: one context vector per spatial
// region and the region-by-attribute weights behind it.
struct AttentionContext {
  torch::Tensor contexts;  // (B, D, R)
  torch::Tensor weights;   // (B, R, N), rows sum to one
};

/// Projects attribute columns with `proj` (D x C), scores every region of `h`
/// against every projected attribute, softmaxes over attributes and mixes the
/// projected columns per region. `local` is (C,N) or (B,C,N); `h` is
/// (B,D,H,W).
AttentionContext attn_content(const torch::Tensor& local, const torch::Tensor& h,
                              const torch::Tensor& proj);

struct SigmOptions {
  int64_t z_dim = 100;
  int64_t cond_dim = 100;
  int64_t attr_dim = 256;
  int64_t base_resolution = 64;
  std::array<int64_t, 3> channels = {256, 128, 64};
  int64_t residual_blocks = 2;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body{nullptr};
};
TORCH_MODULE(ResidualBlock);

// F_0: (z, condition) -> h_0 at the base resolution.
class InitialStageImpl : public torch::nn::Module {
 public:
  explicit InitialStageImpl(const SigmOptions& options);
  StageState forward(const torch::Tensor& z, const torch::Tensor& condition);

 private:
  int64_t channels_;
  torch::nn::Linear fc{nullptr};
  torch::nn::BatchNorm1d fc_bn{nullptr};
  torch::nn::Sequential upsample{nullptr};
};
TORCH_MODULE(InitialStage);

struct StageOutput {
  StageState state;
  AttentionContext attention;
};

// F_i for i = 1, 2: (h_{i-1}, attention contexts) -> h_i at twice the size.
class RefineStageImpl : public torch::nn::Module {
 public:
  RefineStageImpl(const SigmOptions& options, int stage_index);
  StageOutput forward(const StageState& prev, const torch::Tensor& local);

  int64_t joint_channels() const { return 2 * in_channels_; }

  torch::Tensor proj;  // (D_{i-1}, C)

 private:
  int stage_index_;
  int64_t in_channels_;
  torch::nn::Sequential joint{nullptr};
  torch::nn::Sequential residual{nullptr};
  torch::nn::Sequential upsample{nullptr};
};
TORCH_MODULE(RefineStage);

// G_i: 3x3 convolution + tanh.
class ImageHeadImpl : public torch::nn::Module {
 public:
  ImageHeadImpl(int64_t channels, int stage_index);
  GeneratedImage forward(const StageState& state);

 private:
  int stage_index_;
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(ImageHead);

struct GeneratorOutput {
  std::array<StageState, 3> states;
  std::array<GeneratedImage, 3> images;
  std::array<AttentionContext, 2> attention;  // stages 1 and 2
};

/// Stacked three-stage generator.
class StackedGeneratorImpl : public torch::nn::Module {
 public:
  explicit StackedGeneratorImpl(const SigmOptions& options);

  StageState stage0_forward(const torch::Tensor& z, const CondLatent& cond);
  /// Throws ContractViolation when prev is already the last stage.
  StageOutput stage_forward(const StageState& prev, const torch::Tensor& local);
  GeneratedImage to_image(const StageState& state);

  GeneratorOutput forward(const torch::Tensor& z, const CondLatent& cond,
                          const torch::Tensor& local);

  const SigmOptions& options() const { return options_; }
  int64_t resolution(int stage) const { return options_.base_resolution << stage; }

 private:
  SigmOptions options_;
  InitialStage stage0{nullptr};
  RefineStage stage1{nullptr}, stage2{nullptr};
  ImageHead head0{nullptr}, head1{nullptr}, head2{nullptr};
};
TORCH_MODULE(StackedGenerator);

}  // namespace afgan
