#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "afgan/aem.hpp"
#include "afgan/checkpoint.hpp"
#include "afgan/classifier.hpp"
#include "afgan/cond_augment.hpp"
#include "afgan/config.hpp"
#include "afgan/discriminators.hpp"
#include "afgan/scm.hpp"
#include "afgan/sigm.hpp"

namespace afgan {

// One forward pass from attribute bits to the three stage images.
struct Generation {
  AemOutput attrs;
  CondLatent cond;
  GeneratorOutput out;

  const GeneratedImage& final_image() const { return out.images[2]; }
};

/// Every trainable part of a run, built from a TrainConfig. The image encoder
/// is registered as a submodule when it exposes one (the toy backbone);
/// opaque plug-ins are called but never saved.
class AfganModelImpl : public torch::nn::Module {
 public:
  explicit AfganModelImpl(const TrainConfig& config);

  const TrainConfig& config() const { return config_; }
  std::vector<std::string> attribute_names() const { return names_; }

  /// bits (B,N). Noise for z and the condition draw comes from `generator`.
  Generation generate(const torch::Tensor& bits, std::optional<at::Generator> generator);
  /// Same, with explicit noise z (B, z_dim) and condition eps (B, ca_dim).
  Generation generate(const torch::Tensor& bits, const torch::Tensor& z, const torch::Tensor& eps);

  /// Encoder + projection for images at the final resolution.
  ImageFeatures encode(const torch::Tensor& images);

  /// The in-repo encoder, or nullptr for plug-ins.
  ToyEncoderImpl* toy_encoder() const { return toy_.get(); }

  AttributeEmbedding aem{nullptr};
  CondAugment ca{nullptr};
  StackedGenerator generator{nullptr};
  Discriminators discriminators{nullptr};
  std::shared_ptr<ImageEncoder> encoder;
  ScmHead scm_head{nullptr};

 private:
  TrainConfig config_;
  std::vector<std::string> names_;
  std::shared_ptr<ToyEncoderImpl> toy_;
};
TORCH_MODULE(AfganModel);

Checkpoint to_checkpoint(const AfganModel& model);
/// Rebuilds the model from the embedded config and restores every tensor.
/// A config or tensor layout that does not fit throws CheckpointError.
AfganModel model_from_checkpoint(const Checkpoint& checkpoint);
AfganModel load_model(const std::filesystem::path& path);

/// Attribute predictor on the pretrained toy encoder: per-bit 0.5 threshold
/// on the sigmoid of its attribute head. Images at any resolution are
/// resized to the encoder's input.
class PredictorClassifier : public AttributeClassifier {
 public:
  explicit PredictorClassifier(AfganModel model);
  torch::Tensor classify_batch(const torch::Tensor& images) const override;
  std::vector<std::string> attribute_names() const override { return model_->attribute_names(); }

 private:
  AfganModel model_;
};

/// Resizes (B,3,H,W) to `resolution` with area averaging (down) or bilinear
/// interpolation (up); identity at the same size.
torch::Tensor resize_images(const torch::Tensor& images, int64_t resolution);

}  // namespace afgan
