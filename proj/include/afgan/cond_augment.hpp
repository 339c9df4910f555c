#pragma once

#include <optional>

#include <torch/torch.h>

namespace afgan {

struct CondLatent {
  torch::Tensor sample;   // mu + exp(0.5 log_var) * eps
  torch::Tensor mu;
  torch::Tensor log_var;
  torch::Tensor eps;
};

/// Reparameterised draw. log_var = -inf gives sample = mu exactly.
CondLatent reparameterize(const torch::Tensor& mu, const torch::Tensor& log_var,
                          const torch::Tensor& eps);

/// Mean over dimensions (and batch) of 0.5 (mu^2 + exp(log_var) - log_var - 1),
/// the KL divergence from N(mu, exp(log_var)) to N(0, I) per dimension.
torch::Tensor kl_regularizer(const torch::Tensor& mu, const torch::Tensor& log_var);
inline torch::Tensor kl_regularizer(const CondLatent& latent) {
  return kl_regularizer(latent.mu, latent.log_var);
}

/// Conditioning augmentation: two affine heads map the global attribute
/// feature to the mean and log-variance of a Gaussian condition.
class CondAugmentImpl : public torch::nn::Module {
 public:
  CondAugmentImpl(int64_t in_dim, int64_t out_dim);

  /// Noise comes from `generator` when given, otherwise from the global RNG.
  CondLatent forward(const torch::Tensor& global_feat,
                     std::optional<at::Generator> generator = std::nullopt);

  int64_t out_dim() const { return out_dim_; }

  torch::nn::Linear mu_head{nullptr}, log_var_head{nullptr};

 private:
  int64_t out_dim_;
};
TORCH_MODULE(CondAugment);

}  // namespace afgan
