#include "afgan/sigm.hpp"

#include "afgan/errors.hpp"

namespace afgan {

namespace nn = torch::nn;

namespace {

nn::Conv2d conv3x3(int64_t in, int64_t out) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false));
}

// nearest x2 -> conv3x3 -> BN -> ReLU
void push_up_block(nn::Sequential& seq, int64_t in, int64_t out) {
  seq->push_back(nn::Upsample(
      nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest)));
  seq->push_back(conv3x3(in, out));
  seq->push_back(nn::BatchNorm2d(out));
  seq->push_back(nn::ReLU());
}

}  // namespace

AttentionContext attn_content(const torch::Tensor& local, const torch::Tensor& h,
                              const torch::Tensor& proj) {
  if (h.dim() != 4) throw ConfigError("hidden state must be (B,D,H,W)");
  if (proj.dim() != 2 || proj.size(0) != h.size(1) || proj.size(1) != local.size(-2)) {
    throw ConfigError("attention projection must be D x C");
  }
  auto attrs = torch::matmul(proj, local);  // (B,D,N)
  if (attrs.dim() == 2) attrs = attrs.unsqueeze(0).expand({h.size(0), -1, -1});
  auto regions = h.flatten(2);                                        // (B,D,R)
  auto scores = torch::matmul(regions.transpose(1, 2), attrs);        // (B,R,N)
  auto weights = torch::softmax(scores, -1);
  auto contexts = torch::matmul(attrs, weights.transpose(1, 2));      // (B,D,R)
  return {contexts, weights};
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
  body = register_module("body", nn::Sequential(conv3x3(channels, channels),
                                                 nn::BatchNorm2d(channels), nn::ReLU(),
                                                 conv3x3(channels, channels),
                                                 nn::BatchNorm2d(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + body->forward(x);
}

InitialStageImpl::InitialStageImpl(const SigmOptions& o) : channels_(o.channels[0]) {
  fc = register_module("fc", nn::Linear(nn::LinearOptions(o.z_dim + o.cond_dim,
                                                           channels_ * 16).bias(false)));
  fc_bn = register_module("fc_bn", nn::BatchNorm1d(channels_ * 16));
  upsample = nn::Sequential();
  for (int64_t size = 4; size < o.base_resolution; size *= 2) {
    push_up_block(upsample, channels_, channels_);
  }
  register_module("upsample", upsample);
}

StageState InitialStageImpl::forward(const torch::Tensor& z, const torch::Tensor& condition) {
  auto x = torch::relu(fc_bn->forward(fc->forward(torch::cat({z, condition}, 1))));
  x = x.view({-1, channels_, 4, 4});
  if (!upsample->is_empty()) x = upsample->forward(x);
  return {x, 0};
}

RefineStageImpl::RefineStageImpl(const SigmOptions& o, int stage_index)
    : stage_index_(stage_index), in_channels_(o.channels[stage_index - 1]) {
  const int64_t out_channels = o.channels[stage_index];
  proj = register_parameter(
      "proj", torch::randn({in_channels_, o.attr_dim}) / std::sqrt(static_cast<double>(o.attr_dim)));
  joint = register_module("joint", nn::Sequential(conv3x3(2 * in_channels_, in_channels_),
                                                  nn::BatchNorm2d(in_channels_), nn::ReLU()));
  residual = nn::Sequential();
  for (int64_t i = 0; i < o.residual_blocks; ++i) residual->push_back(ResidualBlock(in_channels_));
  register_module("residual", residual);
  upsample = nn::Sequential();
  push_up_block(upsample, in_channels_, out_channels);
  register_module("upsample", upsample);
}

StageOutput RefineStageImpl::forward(const StageState& prev, const torch::Tensor& local) {
  auto attention = attn_content(local, prev.h, proj);
  auto contexts = attention.contexts.view_as(prev.h);
  auto x = joint->forward(torch::cat({prev.h, contexts}, 1));
  if (!residual->is_empty()) x = residual->forward(x);
  x = upsample->forward(x);
  return {{x, stage_index_}, attention};
}

ImageHeadImpl::ImageHeadImpl(int64_t channels, int stage_index) : stage_index_(stage_index) {
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(channels, 3, 3).padding(1)));
}

GeneratedImage ImageHeadImpl::forward(const StageState& state) {
  return {torch::tanh(conv->forward(state.h)), stage_index_};
}

StackedGeneratorImpl::StackedGeneratorImpl(const SigmOptions& options) : options_(options) {
  if (options.base_resolution < 4 || (options.base_resolution & (options.base_resolution - 1))) {
    throw ConfigError("generator base resolution must be a power of two >= 4");
  }
  stage0 = register_module("stage0", InitialStage(options));
  stage1 = register_module("stage1", RefineStage(options, 1));
  stage2 = register_module("stage2", RefineStage(options, 2));
  head0 = register_module("head0", ImageHead(options.channels[0], 0));
  head1 = register_module("head1", ImageHead(options.channels[1], 1));
  head2 = register_module("head2", ImageHead(options.channels[2], 2));
}

StageState StackedGeneratorImpl::stage0_forward(const torch::Tensor& z, const CondLatent& cond) {
  return stage0->forward(z, cond.sample);
}

StageOutput StackedGeneratorImpl::stage_forward(const StageState& prev, const torch::Tensor& local) {
  switch (prev.stage_index) {
    case 0:
      return stage1->forward(prev, local);
    case 1:
      return stage2->forward(prev, local);
    default:
      throw ContractViolation("stage_forward called on stage " + std::to_string(prev.stage_index) +
                              "; only stages 0 and 1 can be refined");
  }
}

GeneratedImage StackedGeneratorImpl::to_image(const StageState& state) {
  switch (state.stage_index) {
    case 0:
      return head0->forward(state);
    case 1:
      return head1->forward(state);
    case 2:
      return head2->forward(state);
    default:
      throw ContractViolation("invalid stage index " + std::to_string(state.stage_index));
  }
}

GeneratorOutput StackedGeneratorImpl::forward(const torch::Tensor& z, const CondLatent& cond,
                                              const torch::Tensor& local) {
  GeneratorOutput out;
  out.states[0] = stage0_forward(z, cond);
  for (int i = 1; i < 3; ++i) {
    auto next = stage_forward(out.states[i - 1], local);
    out.states[i] = next.state;
    out.attention[i - 1] = next.attention;
  }
  for (int i = 0; i < 3; ++i) out.images[i] = to_image(out.states[i]);
  return out;
}

}  // namespace afgan
