#include "afgan/discriminators.hpp"

#include "afgan/errors.hpp"

namespace afgan {

namespace nn = torch::nn;

namespace {

nn::LeakyReLU lrelu() { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); }

torch::Tensor per_example(const torch::Tensor& scores) {
  return scores.dim() == 1 ? scores : scores.flatten(1).mean(1);
}

// Gradient of sum_b score_b with respect to x; zeros when x does not reach it.
torch::Tensor input_gradient(const torch::Tensor& score, const torch::Tensor& x, bool retain) {
  if (!score.requires_grad()) return torch::zeros_like(x);
  auto grads = torch::autograd::grad({score.sum()}, {x}, {}, /*retain_graph=*/retain,
                                     /*create_graph=*/true, /*allow_unused=*/true);
  return grads[0].defined() ? grads[0] : torch::zeros_like(x);
}

torch::Tensor penalty_from_gradient(const torch::Tensor& grad) {
  auto norms = grad.flatten(1).norm(2, 1);
  return (norms - 1).pow(2).mean();
}

torch::Tensor interpolate(const torch::Tensor& real, const torch::Tensor& fake,
                          std::optional<at::Generator> generator) {
  if (real.sizes() != fake.sizes()) {
    throw ContractViolation("gradient penalty needs real and fake batches of equal shape");
  }
  std::vector<int64_t> t_shape(real.dim(), 1);
  t_shape[0] = real.size(0);
  auto t = torch::rand(t_shape, generator, real.options());
  return (t * real.detach() + (1 - t) * fake.detach()).requires_grad_(true);
}

}  // namespace

DiscOutput DiscOutput::probabilities() const {
  if (kind != ScoreKind::kLogit) return *this;
  return {torch::sigmoid(uncond), torch::sigmoid(cond), ScoreKind::kProbability};
}

StageDiscriminatorImpl::StageDiscriminatorImpl(const DiscOptions& o) : options_(o) {
  grid_ = o.patch_grid > 0 ? o.patch_grid : 4;
  if (o.resolution < 2 * grid_) {
    throw ConfigError("discriminator resolution " + std::to_string(o.resolution) +
                      " too small for a " + std::to_string(grid_) + " grid");
  }
  features = nn::Sequential();
  int64_t in = 3;
  int64_t out = o.channels;
  for (int64_t size = o.resolution; size > grid_; size /= 2) {
    features->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    features->push_back(lrelu());
    in = out;
    out = std::min(out * 2, o.channels * 8);
  }
  register_module("features", features);
  const int64_t f = in;
  if (is_patch()) {
    // 1x1 heads keep each patch score's receptive field that of the conv stack.
    uncond_head = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(f, 1, 1)));
    cond_joint = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(f + o.attr_dim, f, 1)), lrelu());
    cond_head = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(f, 1, 1)));
  } else {
    uncond_head = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(f, 1, 4)));
    cond_joint = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(f + o.attr_dim, f, 3).padding(1)),
                                lrelu());
    cond_head = nn::Sequential(nn::Conv2d(nn::Conv2dOptions(f, 1, 4)));
  }
  register_module("uncond_head", uncond_head);
  register_module("cond_joint", cond_joint);
  register_module("cond_head", cond_head);
}

std::pair<torch::Tensor, torch::Tensor> StageDiscriminatorImpl::forward(
    const torch::Tensor& image, const torch::Tensor& global_feat) {
  if (image.dim() != 4 || image.size(2) != options_.resolution ||
      image.size(3) != options_.resolution) {
    throw ContractViolation("discriminator expects " + std::to_string(options_.resolution) +
                            "px images");
  }
  auto feat = features->forward(image);
  auto g = global_feat.dim() == 1 ? global_feat.unsqueeze(0).expand({image.size(0), -1})
                                  : global_feat;
  auto replicated = g.view({g.size(0), g.size(1), 1, 1}).expand({-1, -1, grid_, grid_});
  auto uncond = uncond_head->forward(feat).squeeze(1);
  auto cond = cond_head->forward(cond_joint->forward(torch::cat({feat, replicated}, 1))).squeeze(1);
  if (!is_patch()) {
    uncond = uncond.flatten();
    cond = cond.flatten();
  }
  return {uncond, cond};
}

DiscriminatorsImpl::DiscriminatorsImpl(int64_t base_resolution, int64_t channels,
                                       int64_t attr_dim, int64_t patch_grid)
    : base_resolution_(base_resolution) {
  for (int i = 0; i < 3; ++i) {
    DiscOptions o;
    o.resolution = base_resolution << i;
    o.channels = channels;
    o.attr_dim = attr_dim;
    o.patch_grid = i == 2 ? patch_grid : 0;
    stages_[i] = register_module("stage" + std::to_string(i), StageDiscriminator(o));
  }
}

DiscOutput DiscriminatorsImpl::discriminate(const GeneratedImage& image,
                                            const torch::Tensor& global_feat, int stage,
                                            ScoreKind kind) {
  if (stage < 0 || stage > 2) throw ContractViolation("stage must be 0, 1 or 2");
  if (image.pixels.size(-1) != resolution(stage)) {
    throw ContractViolation("image of " + std::to_string(image.pixels.size(-1)) +
                            "px does not match stage " + std::to_string(stage) + " (" +
                            std::to_string(resolution(stage)) + "px)");
  }
  auto [uncond, cond] = stages_[stage]->forward(image.pixels, global_feat);
  return {uncond, cond, kind};
}

torch::Tensor gradient_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& critic,
                               const torch::Tensor& real, const torch::Tensor& fake,
                               std::optional<at::Generator> generator) {
  auto x = interpolate(real, fake, generator);
  auto score = per_example(critic(x));
  return penalty_from_gradient(input_gradient(score, x, /*retain=*/false));
}

torch::Tensor gradient_penalty(StageDiscriminatorImpl& disc, const torch::Tensor& real,
                               const torch::Tensor& fake, const torch::Tensor& global_feat,
                               std::optional<at::Generator> generator) {
  auto x = interpolate(real, fake, generator);
  auto [uncond, cond] = disc.forward(x, global_feat.detach());
  auto gu = input_gradient(per_example(uncond), x, /*retain=*/true);
  auto gc = input_gradient(per_example(cond), x, /*retain=*/true);
  return 0.5 * (penalty_from_gradient(gu) + penalty_from_gradient(gc));
}

}  // namespace afgan
