#include "afgan/aem.hpp"

#include "afgan/errors.hpp"

namespace afgan {
namespace aem {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

torch::Tensor global_feature(const torch::Tensor& bits, const torch::Tensor& w_global) {
  require(w_global.dim() == 2, "W_global must be a C x N matrix");
  require(bits.dim() == 1 || bits.dim() == 2, "attribute bits must be (N) or (B,N)");
  require(bits.size(-1) == w_global.size(1),
          "attribute count " + std::to_string(bits.size(-1)) +
              " does not match W_global with N = " + std::to_string(w_global.size(1)));
  return torch::matmul(bits.to(w_global.dtype()), w_global.t());
}

torch::Tensor two_path_embedding(const torch::Tensor& bits, const torch::Tensor& embed_one,
                                 const torch::Tensor& embed_zero) {
  require(embed_one.dim() == 2 && embed_one.sizes() == embed_zero.sizes(),
          "embedding tables must both be C x N");
  require(bits.dim() == 1 || bits.dim() == 2, "attribute bits must be (N) or (B,N)");
  require(bits.size(-1) == embed_one.size(1), "attribute count does not match embedding tables");
  check_binary(bits);
  // (.., 1, N) broadcasts against (C, N).
  auto b = bits.to(embed_one.dtype()).unsqueeze(-2);
  return embed_one * b + embed_zero * (1 - b);
}

SelfAttention self_attention(const torch::Tensor& local, const torch::Tensor& w_f,
                             const torch::Tensor& w_g, const torch::Tensor& w_h) {
  require(local.dim() == 2 || local.dim() == 3, "local feature must be (C,N) or (B,C,N)");
  const int64_t c = local.size(-2);
  for (const auto* w : {&w_f, &w_g, &w_h}) {
    require(w->dim() == 2 && w->size(0) == c && w->size(1) == c,
            "attention projections must be C x C");
  }
  auto f = torch::matmul(w_f, local);
  auto g = torch::matmul(w_g, local);
  auto h = torch::matmul(w_h, local);
  auto scores = torch::matmul(f.transpose(-2, -1), g);  // [i][j] = f_i . g_j
  auto beta = torch::softmax(scores, -2);
  return {torch::matmul(h, beta), beta};
}

}  // namespace aem

AttributeEmbeddingImpl::AttributeEmbeddingImpl(const AemOptions& options)
    : options_(options) {
  const int64_t c = options.dim;
  const int64_t n = options.n_attrs;
  if (c <= 0 || n <= 0) throw ConfigError("AEM dimensions must be positive");
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(c));
  w_global = register_parameter("w_global", torch::randn({c, n}) * options.init_std);
  embed_one = register_parameter("embed_one", torch::randn({c, n}) * options.init_std);
  if (options.two_path) {
    embed_zero = register_parameter("embed_zero", torch::randn({c, n}) * options.init_std);
  } else {
    embed_zero = register_buffer("embed_zero", torch::zeros({c, n}));
  }
  w_f = register_parameter("w_f", torch::randn({c, c}) * proj_std);
  w_g = register_parameter("w_g", torch::randn({c, c}) * proj_std);
  w_h = register_parameter("w_h", torch::randn({c, c}) * proj_std);
  if (options.attention_gate) gate = register_parameter("gate", torch::zeros({1}));
}

torch::Tensor AttributeEmbeddingImpl::embed_global(const torch::Tensor& bits) const {
  return aem::global_feature(bits, w_global);
}

torch::Tensor AttributeEmbeddingImpl::embed_two_path(const torch::Tensor& bits) const {
  return aem::two_path_embedding(bits, embed_one, embed_zero);
}

aem::SelfAttention AttributeEmbeddingImpl::self_attention(const torch::Tensor& local) const {
  auto attn = aem::self_attention(local, w_f, w_g, w_h);
  if (options_.attention_gate) attn.features = local + gate * attn.features;
  return attn;
}

AemOutput AttributeEmbeddingImpl::forward(const torch::Tensor& bits) {
  AemOutput out;
  out.global = embed_global(bits);
  out.local_raw = embed_two_path(bits);
  auto attn = self_attention(out.local_raw);
  out.local = attn.features;
  out.attention = attn.weights;
  return out;
}

}  // namespace afgan
