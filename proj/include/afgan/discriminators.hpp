#pragma once

#include <array>
#include <functional>
#include <optional>

#include <torch/torch.h>

#include "afgan/sigm.hpp"

namespace afgan {

enum class ScoreKind {
  kProbability,  // already in (0,1)
  kLogit,        // pre-sigmoid; log-loss consumers apply log-sigmoid
  kCritic,       // unbounded Wasserstein critic values
};

// Scores of the unconditional and conditional heads. Each is (B) for a
// scalar discriminator or (B,S,S) for the patch discriminator.
struct DiscOutput {
  torch::Tensor uncond;
  torch::Tensor cond;
  ScoreKind kind = ScoreKind::kCritic;

  /// Sigmoid-squashed scores for logits, the raw values otherwise.
  DiscOutput probabilities() const;
};

struct DiscOptions {
  int64_t resolution = 64;
  int64_t channels = 64;   // width of the first conv, doubled per downsample
  int64_t attr_dim = 256;  // width of the replicated global feature
  int64_t patch_grid = 0;  // 0: scalar heads on a 4x4 grid; >0: S x S patch scores
};

/// One stage's discriminator: a stride-2 conv stack down to a small grid,
/// then an unconditional head and a conditional head fed with the features
/// concatenated to the spatially replicated global attribute feature.
class StageDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit StageDiscriminatorImpl(const DiscOptions& options);

  /// Raw head outputs (logits or critic values).
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& image,
                                                  const torch::Tensor& global_feat);

  const DiscOptions& options() const { return options_; }
  bool is_patch() const { return options_.patch_grid > 0; }

 private:
  DiscOptions options_;
  int64_t grid_;
  torch::nn::Sequential features{nullptr};
  torch::nn::Sequential uncond_head{nullptr};
  torch::nn::Sequential cond_joint{nullptr};
  torch::nn::Sequential cond_head{nullptr};
};
TORCH_MODULE(StageDiscriminator);

/// Per-stage discriminators; the last one scores patches.
class DiscriminatorsImpl : public torch::nn::Module {
 public:
  DiscriminatorsImpl(int64_t base_resolution, int64_t channels, int64_t attr_dim,
                     int64_t patch_grid);

  /// Throws ContractViolation if the image resolution does not match `stage`.
  DiscOutput discriminate(const GeneratedImage& image, const torch::Tensor& global_feat,
                          int stage, ScoreKind kind);

  StageDiscriminator stage(int i) const { return stages_.at(i); }
  int64_t resolution(int stage) const { return base_resolution_ << stage; }

 private:
  int64_t base_resolution_;
  std::array<StageDiscriminator, 3> stages_{nullptr, nullptr, nullptr};
};
TORCH_MODULE(Discriminators);

/// Gradient penalty for a critic mapping images (B,...) to per-example scores
/// (any shape with leading B; non-batch dims are averaged). Interpolates
/// x = t real + (1-t) fake with t ~ U(0,1) per example and returns
/// mean_b (||grad_x critic(x)_b||_2 - 1)^2. The graph is kept so the penalty
/// can be backpropagated into the critic parameters.
torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic,
                               const torch::Tensor& real, const torch::Tensor& fake,
                               std::optional<at::Generator> generator = std::nullopt);

/// Penalty for both heads of one stage discriminator on the same
/// interpolates, averaged.
torch::Tensor gradient_penalty(StageDiscriminatorImpl& disc, const torch::Tensor& real,
                               const torch::Tensor& fake, const torch::Tensor& global_feat,
                               std::optional<at::Generator> generator = std::nullopt);

}  // namespace afgan
