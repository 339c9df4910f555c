#include "afgan/model.hpp"

#include "afgan/errors.hpp"

namespace afgan {

AfganModelImpl::AfganModelImpl(const TrainConfig& config) : config_(config) {
  config_.validate();
  names_ = config_.resolved_attribute_names();

  AemOptions aem_opts;
  aem_opts.n_attrs = config_.n_attrs;
  aem_opts.dim = config_.attr_dim;
  aem_opts.two_path = config_.two_path;
  aem_opts.attention_gate = config_.attention_gate;
  aem = register_module("aem", AttributeEmbedding(aem_opts));

  ca = register_module("ca", CondAugment(config_.attr_dim, config_.ca_dim));

  SigmOptions sigm;
  sigm.z_dim = config_.z_dim;
  sigm.cond_dim = config_.ca_dim;
  sigm.attr_dim = config_.attr_dim;
  sigm.base_resolution = config_.base_resolution();
  sigm.channels = {config_.stage_channels[0], config_.stage_channels[1], config_.stage_channels[2]};
  sigm.residual_blocks = config_.residual_blocks;
  generator = register_module("generator", StackedGenerator(sigm));

  discriminators = register_module(
      "discriminators", Discriminators(config_.base_resolution(), config_.disc_channels,
                                       config_.attr_dim, config_.patch_grid));

  EncoderSpec spec;
  spec.name = config_.encoder;
  spec.path = config_.encoder_path;
  spec.n_attrs = config_.n_attrs;
  spec.local_dim = config_.encoder_channels;
  spec.global_dim = config_.encoder_global_dim;
  spec.input_resolution = config_.final_resolution();
  encoder = make_encoder(spec);
  if (auto module = encoder->as_module()) {
    register_module("encoder", module);
    toy_ = std::dynamic_pointer_cast<ToyEncoderImpl>(module);
  }
  scm_head = register_module("scm_head", ScmHead(encoder->dims(), config_.attr_dim));
}

Generation AfganModelImpl::generate(const torch::Tensor& bits,
                                    std::optional<at::Generator> gen) {
  const int64_t batch = bits.size(0);
  auto z = torch::randn({batch, config_.z_dim}, gen, torch::kFloat32);
  auto eps = torch::randn({batch, config_.ca_dim}, gen, torch::kFloat32);
  return generate(bits, z, eps);
}

Generation AfganModelImpl::generate(const torch::Tensor& bits, const torch::Tensor& z,
                                    const torch::Tensor& eps) {
  Generation g;
  g.attrs = aem->forward(bits);
  g.cond = reparameterize(ca->mu_head->forward(g.attrs.global),
                          ca->log_var_head->forward(g.attrs.global), eps);
  g.out = generator->forward(z, g.cond, g.attrs.local);
  return g;
}

ImageFeatures AfganModelImpl::encode(const torch::Tensor& images) {
  return encode_image(GeneratedImage{images, 2}, *encoder, *scm_head);
}

Checkpoint to_checkpoint(const AfganModel& model) {
  Checkpoint ckpt;
  ckpt.config = model->config();
  for (const auto& [name, tensor] : collect_tensors(*model)) {
    ckpt.tensors[name] = tensor.detach().clone();
  }
  return ckpt;
}

AfganModel model_from_checkpoint(const Checkpoint& checkpoint) {
  TrainConfig config;
  try {
    from_json(checkpoint.config, config);
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint v" + std::to_string(kCheckpointVersion) +
                          ": embedded config rejected: " + e.what());
  }
  AfganModel model(config);
  restore_tensors(*model, checkpoint.tensors);
  return model;
}

AfganModel load_model(const std::filesystem::path& path) {
  return model_from_checkpoint(load_checkpoint(path));
}

torch::Tensor resize_images(const torch::Tensor& images, int64_t resolution) {
  const int64_t h = images.size(-2);
  if (h == resolution && images.size(-1) == resolution) return images;
  namespace F = torch::nn::functional;
  auto opts = F::InterpolateFuncOptions().size(std::vector<int64_t>{resolution, resolution});
  if (h > resolution) {
    opts.mode(torch::kArea);
  } else {
    opts.mode(torch::kBilinear).align_corners(false);
  }
  return F::interpolate(images, opts);
}

PredictorClassifier::PredictorClassifier(AfganModel model) : model_(std::move(model)) {
  if (!model_->toy_encoder()) {
    throw CapabilityError("the predictor classifier needs the in-repo encoder");
  }
}

torch::Tensor PredictorClassifier::classify_batch(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  auto* enc = model_->toy_encoder();
  auto x = resize_images(images.to(torch::kFloat32), enc->dims().input_resolution);
  auto logits = enc->predict_logits(enc->encode(x));
  return (logits > 0).to(torch::kFloat32);
}

}  // namespace afgan
