#include "afgan/scm.hpp"

#include <filesystem>
#include <map>
#include <mutex>

#include <torch/script.h>

#include "afgan/errors.hpp"

namespace afgan {

namespace nn = torch::nn;

namespace {

nn::LeakyReLU lrelu() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

// Adapter for an external TorchScript backbone whose forward(images) returns
// a tuple (local (B,F,H,W) or (B,F,R), global (B,F')).
class TorchScriptEncoder : public ImageEncoder {
 public:
  explicit TorchScriptEncoder(const EncoderSpec& spec) {
    if (spec.path.empty() || !std::filesystem::exists(spec.path)) {
      throw CapabilityError("torchscript encoder: model file '" + spec.path + "' not found");
    }
    try {
      module_ = torch::jit::load(spec.path);
    } catch (const c10::Error& e) {
      throw CapabilityError("torchscript encoder: cannot load '" + spec.path + "': " + e.what());
    }
    module_.eval();
    dims_.input_resolution = spec.input_resolution;
    torch::NoGradGuard no_grad;
    auto probe = encode(torch::zeros({1, 3, spec.input_resolution, spec.input_resolution}));
    dims_.local_dim = probe.local.size(1);
    dims_.regions = probe.local.size(2);
    dims_.global_dim = probe.global.size(1);
  }

  std::string name() const override { return "torchscript"; }
  EncoderDims dims() const override { return dims_; }

  EncodedImage encode(const torch::Tensor& images) override {
    auto out = module_.forward({images});
    if (!out.isTuple() || out.toTuple()->elements().size() != 2) {
      throw CapabilityError("torchscript encoder must return (local, global)");
    }
    auto elems = out.toTuple()->elements();
    auto local = elems[0].toTensor();
    if (local.dim() == 4) local = local.flatten(2);
    return {local, elems[1].toTensor()};
  }

 private:
  torch::jit::Module module_;
  EncoderDims dims_;
};

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::map<std::string, EncoderFactory>& registry() {
  static std::map<std::string, EncoderFactory> r = {
      {"toy", [](const EncoderSpec& s) -> std::shared_ptr<ImageEncoder> {
         return std::make_shared<ToyEncoderImpl>(s);
       }},
      {"torchscript", [](const EncoderSpec& s) -> std::shared_ptr<ImageEncoder> {
         return std::make_shared<TorchScriptEncoder>(s);
       }},
  };
  return r;
}

torch::Tensor safe_norm(const torch::Tensor& x, double eps) {
  return x.pow(2).sum(-1).clamp_min(eps * eps).sqrt();
}

torch::Tensor batch_matching_loss(const torch::Tensor& logits, int dim) {
  return -torch::log_softmax(logits, dim).diagonal().sum();
}

}  // namespace

void register_encoder(const std::string& name, EncoderFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[name] = std::move(factory);
}

std::shared_ptr<ImageEncoder> make_encoder(const EncoderSpec& spec) {
  EncoderFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(spec.name);
    if (it == registry().end()) {
      throw CapabilityError("image encoder '" + spec.name + "' is not available");
    }
    factory = it->second;
  }
  return factory(spec);
}

std::vector<std::string> registered_encoders() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

ToyEncoderImpl::ToyEncoderImpl(const EncoderSpec& spec) {
  if (spec.input_resolution < 16 || spec.input_resolution % 16 != 0) {
    throw ConfigError("toy encoder needs an input resolution that is a multiple of 16");
  }
  const int64_t grid = spec.input_resolution / 16;
  dims_ = {spec.local_dim, spec.global_dim, grid * grid, spec.input_resolution};
  const int64_t mid = std::max<int64_t>(spec.local_dim / 2, 8);
  backbone = register_module(
      "backbone",
      nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, mid, 4).stride(4)), lrelu(),
                     nn::Conv2d(nn::Conv2dOptions(mid, spec.local_dim, 2).stride(2)), lrelu(),
                     nn::Conv2d(nn::Conv2dOptions(spec.local_dim, spec.local_dim, 2).stride(2)),
                     lrelu()));
  global_fc = register_module(
      "global_fc",
      nn::Sequential(nn::Linear(spec.local_dim * dims_.regions, spec.global_dim), lrelu()));
  attr_head = register_module("attr_head", nn::Linear(spec.global_dim, spec.n_attrs));
}

EncodedImage ToyEncoderImpl::encode(const torch::Tensor& images) {
  auto local = backbone->forward(images).flatten(2);  // (B,F,R)
  auto global = global_fc->forward(local.flatten(1));
  return {local, global};
}

std::shared_ptr<torch::nn::Module> ToyEncoderImpl::as_module() {
  return std::static_pointer_cast<torch::nn::Module>(shared_from_this());
}

torch::Tensor ToyEncoderImpl::predict_logits(const EncodedImage& encoded) {
  return attr_head->forward(encoded.global);
}

ScmHeadImpl::ScmHeadImpl(const EncoderDims& dims, int64_t attr_dim) {
  local_proj = register_module("local_proj",
                               nn::Linear(nn::LinearOptions(dims.local_dim, attr_dim).bias(false)));
  global_proj = register_module("global_proj", nn::Linear(dims.global_dim, attr_dim));
}

ImageFeatures ScmHeadImpl::forward(const EncodedImage& encoded) {
  auto local = local_proj->forward(encoded.local.transpose(1, 2)).transpose(1, 2);
  return {local, global_proj->forward(encoded.global)};
}

ImageFeatures encode_image(const GeneratedImage& image, ImageEncoder& encoder, ScmHeadImpl& head) {
  const auto res = encoder.dims().input_resolution;
  if (image.pixels.dim() != 4 || image.pixels.size(2) != res || image.pixels.size(3) != res) {
    throw ContractViolation("encoder '" + encoder.name() + "' expects " + std::to_string(res) +
                            "px images");
  }
  return head.forward(encoder.encode(image.pixels));
}

torch::Tensor cosine_similarity(const torch::Tensor& a, const torch::Tensor& b, double eps) {
  return (a * b).sum(-1) / (safe_norm(a, eps) * safe_norm(b, eps));
}

MatchScore local_match(const torch::Tensor& local_attr, const torch::Tensor& image_local,
                       double gamma1, double gamma2) {
  if (local_attr.size(-2) != image_local.size(-2)) {
    throw ConfigError("attribute and image features must share dimension C");
  }
  auto s = torch::matmul(local_attr.transpose(-2, -1), image_local);  // (...,N,R)
  auto s_bar = torch::softmax(s, -2);
  auto alpha = torch::softmax(gamma1 * s_bar, -1);
  auto contexts = torch::matmul(alpha, image_local.transpose(-2, -1));  // (...,N,C)
  auto relevance = afgan::cosine_similarity(contexts, local_attr.transpose(-2, -1));  // (...,N)
  auto r_local = torch::logsumexp(gamma2 * relevance, -1) / gamma2;
  MatchScore out;
  out.r_local = r_local;
  out.region_weights = alpha;
  out.attr_weights = s_bar;
  out.relevance = relevance;
  return out;
}

torch::Tensor global_match(const torch::Tensor& global_attr, const torch::Tensor& image_global) {
  if (global_attr.size(-1) != image_global.size(-1)) {
    throw ConfigError("attribute and image global features must share dimension C");
  }
  return afgan::cosine_similarity(image_global, global_attr);
}

torch::Tensor local_match_matrix(const torch::Tensor& local_attr, const torch::Tensor& image_local,
                                 double gamma1, double gamma2) {
  return local_match(local_attr.unsqueeze(1), image_local.unsqueeze(0), gamma1, gamma2).r_local;
}

torch::Tensor global_match_matrix(const torch::Tensor& global_attr,
                                  const torch::Tensor& image_global) {
  return global_match(global_attr.unsqueeze(1), image_global.unsqueeze(0));
}

ScmLoss scm_loss_from_scores(const torch::Tensor& local_scores,
                             const torch::Tensor& global_scores, double gamma3) {
  if (local_scores.dim() != 2 || local_scores.size(0) == 0 ||
      local_scores.size(0) != local_scores.size(1) ||
      global_scores.sizes() != local_scores.sizes()) {
    throw ContractViolation("similarity loss needs non-empty square M x M score matrices");
  }
  ScmLoss out;
  out.local_images = batch_matching_loss(gamma3 * local_scores, 1);
  out.local_attributes = batch_matching_loss(gamma3 * local_scores, 0);
  out.global_images = batch_matching_loss(gamma3 * global_scores, 1);
  out.global_attributes = batch_matching_loss(gamma3 * global_scores, 0);
  out.total = out.local_images + out.local_attributes + out.global_images + out.global_attributes;
  return out;
}

ScmLoss scm_batch_loss(const torch::Tensor& local_attr, const torch::Tensor& global_attr,
                       const ImageFeatures& images, double gamma1, double gamma2, double gamma3) {
  if (local_attr.dim() != 3 || local_attr.size(0) == 0) {
    throw ContractViolation("similarity loss needs a non-empty (M,C,N) attribute batch");
  }
  if (images.local.size(0) != local_attr.size(0) || global_attr.size(0) != local_attr.size(0)) {
    throw ContractViolation("attribute and image batches differ in size");
  }
  return scm_loss_from_scores(local_match_matrix(local_attr, images.local, gamma1, gamma2),
                              global_match_matrix(global_attr, images.global), gamma3);
}

}  // namespace afgan
