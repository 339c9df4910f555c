#include "afgan/cond_augment.hpp"

namespace afgan {

CondLatent reparameterize(const torch::Tensor& mu, const torch::Tensor& log_var,
                          const torch::Tensor& eps) {
  return {mu + torch::exp(0.5 * log_var) * eps, mu, log_var, eps};
}

torch::Tensor kl_regularizer(const torch::Tensor& mu, const torch::Tensor& log_var) {
  return (0.5 * (mu.pow(2) + torch::exp(log_var) - log_var - 1)).mean();
}

CondAugmentImpl::CondAugmentImpl(int64_t in_dim, int64_t out_dim) : out_dim_(out_dim) {
  mu_head = register_module("mu_head", torch::nn::Linear(in_dim, out_dim));
  log_var_head = register_module("log_var_head", torch::nn::Linear(in_dim, out_dim));
}

CondLatent CondAugmentImpl::forward(const torch::Tensor& global_feat,
                                    std::optional<at::Generator> generator) {
  auto mu = mu_head->forward(global_feat);
  auto log_var = log_var_head->forward(global_feat);
  auto eps = torch::randn(mu.sizes(), generator, mu.options());
  return reparameterize(mu, log_var, eps);
}

}  // namespace afgan
