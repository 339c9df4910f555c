#pragma once

#include <functional>
#include <memory>
#include <string>

#include <torch/torch.h>

#include "afgan/sigm.hpp"

namespace afgan {

// ---------------------------------------------------------------------------
// Image encoder plug-in contract
// ---------------------------------------------------------------------------

struct EncoderDims {
  int64_t local_dim = 0;   // feature width of each spatial region
  int64_t global_dim = 0;  // width of the pooled global feature
  int64_t regions = 0;     // R for the declared input resolution
  int64_t input_resolution = 0;
};

// Backbone output before projection into the attribute space.
struct EncodedImage {
  torch::Tensor local;   // (B, F_loc, R)
  torch::Tensor global;  // (B, F_glob)
};

class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual std::string name() const = 0;
  virtual EncoderDims dims() const = 0;
  /// images: (B,3,H,W) in [-1,1] at dims().input_resolution.
  virtual EncodedImage encode(const torch::Tensor& images) = 0;
  /// The trainable module behind the encoder, or nullptr for opaque plug-ins.
  virtual std::shared_ptr<torch::nn::Module> as_module() { return nullptr; }
};

struct EncoderSpec {
  std::string name = "toy";  // "toy" or "torchscript"
  std::string path;          // model file for file-backed adapters
  int64_t n_attrs = 6;
  int64_t local_dim = 64;
  int64_t global_dim = 128;
  int64_t input_resolution = 64;
};

using EncoderFactory = std::function<std::shared_ptr<ImageEncoder>(const EncoderSpec&)>;

/// Adds or replaces a named adapter.
void register_encoder(const std::string& name, EncoderFactory factory);
/// Throws CapabilityError for unknown names or adapters that cannot load.
std::shared_ptr<ImageEncoder> make_encoder(const EncoderSpec& spec);
std::vector<std::string> registered_encoders();

/// In-repo attribute predictor. Non-overlapping patch convolutions
/// (4x4/4, 2x2/2, 2x2/2) give one local feature per 16x16 cell, so region r
/// sees exactly its own cell; the global feature is a dense layer over all
/// cells, and a linear head predicts attribute logits for pretraining.
class ToyEncoderImpl : public torch::nn::Module, public ImageEncoder {
 public:
  explicit ToyEncoderImpl(const EncoderSpec& spec);

  std::string name() const override { return "toy"; }
  EncoderDims dims() const override { return dims_; }
  EncodedImage encode(const torch::Tensor& images) override;
  std::shared_ptr<torch::nn::Module> as_module() override;

  /// Attribute logits (B,N) from the global feature.
  torch::Tensor predict_logits(const EncodedImage& encoded);

 private:
  EncoderDims dims_;
  torch::nn::Sequential backbone{nullptr};
  torch::nn::Sequential global_fc{nullptr};
  torch::nn::Linear attr_head{nullptr};
};
TORCH_MODULE(ToyEncoder);

// ---------------------------------------------------------------------------
// Similarity constraint: projections, matching scores and the batch loss
// ---------------------------------------------------------------------------

// Image features in the shared attribute space.
struct ImageFeatures {
  torch::Tensor local;   // (B,C,R)
  torch::Tensor global;  // (B,C)
};

/// Learned linear maps from backbone widths to the attribute dimension C.
class ScmHeadImpl : public torch::nn::Module {
 public:
  ScmHeadImpl(const EncoderDims& dims, int64_t attr_dim);
  ImageFeatures forward(const EncodedImage& encoded);

  torch::nn::Linear local_proj{nullptr}, global_proj{nullptr};
};
TORCH_MODULE(ScmHead);

/// Encodes and projects a batch of images. Throws ContractViolation when the
/// resolution differs from the encoder's declared input resolution.
ImageFeatures encode_image(const GeneratedImage& image, ImageEncoder& encoder, ScmHeadImpl& head);

/// Cosine similarity along the last dimension; 0 where either vector has
/// (near) zero norm.
torch::Tensor cosine_similarity(const torch::Tensor& a, const torch::Tensor& b, double eps = 1e-8);

struct MatchScore {
  torch::Tensor r_local;         // log-sum-exp of the per-attribute relevances
  torch::Tensor r_global;        // undefined from local_match alone
  torch::Tensor region_weights;  // alpha: (...,N,R), rows sum to one
  torch::Tensor attr_weights;    // s-bar: (...,N,R), columns sum to one
  torch::Tensor relevance;       // R(c_i, S_i): (...,N)
};

/// Attention matching between attribute columns (...,C,N) and image regions
/// (...,C,R); leading dims broadcast. s = S^T i_local, s-bar = softmax over
/// attributes, alpha = softmax over regions of gamma1 s-bar,
/// c_i = sum_j alpha_ij i_local_j, r_local = (1/gamma2) log sum_i
/// exp(gamma2 cos(c_i, S_i)).
MatchScore local_match(const torch::Tensor& local_attr, const torch::Tensor& image_local,
                       double gamma1, double gamma2);

/// cos(i_global, S_global) with broadcasting over leading dims.
torch::Tensor global_match(const torch::Tensor& global_attr, const torch::Tensor& image_global);

/// (M,K) matrices of scores between every attribute set i and image j.
torch::Tensor local_match_matrix(const torch::Tensor& local_attr, const torch::Tensor& image_local,
                                 double gamma1, double gamma2);
torch::Tensor global_match_matrix(const torch::Tensor& global_attr,
                                  const torch::Tensor& image_global);

struct ScmLoss {
  torch::Tensor total;
  torch::Tensor local_images;       // -sum_i log P(D_i | Q_i) on local scores
  torch::Tensor local_attributes;   // -sum_i log P(Q_i | D_i) on local scores
  torch::Tensor global_images;
  torch::Tensor global_attributes;
};

/// Both directions of the batch softmax matching loss on square score
/// matrices [i][j] = score(Q_i, D_j). Throws ContractViolation when M = 0.
ScmLoss scm_loss_from_scores(const torch::Tensor& local_scores,
                             const torch::Tensor& global_scores, double gamma3);

ScmLoss scm_batch_loss(const torch::Tensor& local_attr, const torch::Tensor& global_attr,
                       const ImageFeatures& images, double gamma1, double gamma2, double gamma3);

}  // namespace afgan
