#pragma once

#include <torch/torch.h>

#include "afgan/attributes.hpp"

namespace afgan {

// Attribute embedding: binary attribute vector -> global feature (C) and a
// relation-aware local feature matrix (C x N, one column per attribute).
//
// The free functions take explicit parameter tensors so they can be driven
// with hand-built matrices; AttributeEmbedding owns trainable ones. Every
// function accepts an unbatched (N) / (C,N) input or a batched (B,N) /
// (B,C,N) one and returns the matching rank.
namespace aem {

/// W_global * bits.
torch::Tensor global_feature(const torch::Tensor& bits, const torch::Tensor& w_global);

/// Column i is embed_one[:, i] where bit i is 1 and embed_zero[:, i] where it
/// is 0. Throws ValidationError on non-binary bits.
torch::Tensor two_path_embedding(const torch::Tensor& bits,
                                 const torch::Tensor& embed_one,
                                 const torch::Tensor& embed_zero);

struct SelfAttention {
  torch::Tensor features;  // (C,N) or (B,C,N)
  torch::Tensor weights;   // beta: (N,N) or (B,N,N), entry [i][j]
};

/// Scores s_ij = f_i . g_j with f = W_f S, g = W_g S. beta normalises over
/// the first index i, so every column of beta sums to one. Output column j is
/// sum_i beta_ij (W_h S)_i.
SelfAttention self_attention(const torch::Tensor& local, const torch::Tensor& w_f,
                             const torch::Tensor& w_g, const torch::Tensor& w_h);

}  // namespace aem

struct AemOptions {
  int64_t n_attrs = 18;
  int64_t dim = 256;
  bool two_path = true;         // false: single table, zero vector for bit 0
  bool attention_gate = false;  // true: S + gamma * attn(S), gamma starts at 0
  double init_std = 0.02;
};

struct AemOutput {
  torch::Tensor global;     // (B,C)
  torch::Tensor local_raw;  // two-path embedding, (B,C,N)
  torch::Tensor local;      // after self-attention, (B,C,N)
  torch::Tensor attention;  // (B,N,N)
};

class AttributeEmbeddingImpl : public torch::nn::Module {
 public:
  explicit AttributeEmbeddingImpl(const AemOptions& options);

  AemOutput forward(const torch::Tensor& bits);
  torch::Tensor embed_global(const torch::Tensor& bits) const;
  torch::Tensor embed_two_path(const torch::Tensor& bits) const;
  aem::SelfAttention self_attention(const torch::Tensor& local) const;

  const AemOptions& options() const { return options_; }

  torch::Tensor w_global, embed_one, embed_zero, w_f, w_g, w_h, gate;

 private:
  AemOptions options_;
};
TORCH_MODULE(AttributeEmbedding);

}  // namespace afgan
