#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <ATen/core/Generator.h>
#include <json.hpp>
#include <torch/torch.h>

#include "afgan/attributes.hpp"
#include "afgan/classifier.hpp"
#include "afgan/data.hpp"
#include "afgan/model.hpp"
#include "afgan/objective.hpp"

namespace afgan {

/// CPU generator seeded for one purpose of a run.
at::Generator make_generator(uint64_t seed);

/// Seeds the global RNG (used for parameter init) and builds the model.
AfganModel build_model(const TrainConfig& config);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::filesystem::path run_dir;  // empty: nothing is written
  bool run_pretraining = true;    // false: the model already carries a pretrained SCM
  std::function<void(const std::string&)> log;  // progress lines; may be empty
  int64_t log_every = 50;
  bool update_discriminators = true;  // false: critics are scored but never stepped
};

struct PretrainReport {
  int64_t encoder_steps = 0;
  int64_t scm_steps = 0;
  double encoder_bce = 0;       // mean of the last logged window
  double encoder_accuracy = 0;  // per-bit accuracy of the attribute head on the same window
  double scm_loss = 0;
};

/// Two phases on real images. The toy encoder is fitted to the attribute
/// bits with binary cross-entropy; then, with the encoder fixed, the
/// projection head and the attribute embedding are fitted with the batch
/// matching loss. Plug-in encoders skip the first phase. Writes
/// pretrain.jsonl under run_dir when set.
PretrainReport pretrain_scm(AfganModel& model, const ImageDataset& data,
                            const TrainOptions& options = {});

struct TrainResult {
  int64_t g_steps = 0;
  int64_t d_steps = 0;
  int64_t epochs = 0;
  LossReport last;
  std::filesystem::path final_checkpoint;
};

/// Adversarial training. Each batch feeds one update; a cycle is
/// d_steps_per_cycle critic updates followed by g_steps_per_cycle generator
/// updates. The embedding and the similarity module stay fixed unless the
/// config says otherwise. One metrics line per generator step and one
/// checkpoint per epoch under run_dir. Throws DivergenceError on the first
/// non-finite loss.
TrainResult train(AfganModel& model, const ImageDataset& data, const TrainOptions& options = {});

/// Metrics line for one generator step.
nlohmann::json metrics_line(int64_t step, int64_t epoch, const LossReport& losses);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SampleSet {
  std::array<torch::Tensor, 3> stages;  // (K,3,H_i,W_i) in [-1,1]
  AttributeVector attrs;

  int64_t count() const { return stages[0].size(0); }
  int64_t image_count() const { return 3 * count(); }
};

/// `count` noise draws for one attribute vector, all three stages, in eval
/// mode. Deterministic in `seed`.
SampleSet sample(AfganModel& model, const AttributeVector& attrs, int64_t count, uint64_t seed);

/// Writes stage<i>_<k>.ppm for every image; returns the paths in order.
std::vector<std::filesystem::path> write_samples(const SampleSet& samples,
                                                 const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  double msssim_mean = -1;  // -1 when not measured
  double attr_accuracy = 0;
  std::vector<double> per_attribute_accuracy;
  std::vector<std::string> attribute_names;
  int64_t sample_count = 0;

  std::string table() const;
};

void to_json(nlohmann::json& j, const EvalReport& r);

/// Produces images (B,3,H,W) in [-1,1] for attribute rows (B,N).
using ImageSource = std::function<torch::Tensor(const torch::Tensor& bits)>;

/// Final-stage images from the model in eval mode, noise from `seed`.
ImageSource model_source(AfganModel model, uint64_t seed);

/// Draws `trials` attribute rows uniformly from `bit_pool` (the dataset's
/// empirical distribution), renders them with `source`, classifies and
/// reports per-bit agreement. Throws ConfigError when the classifier's
/// attribute names differ from `names`.
EvalReport eval_attr_accuracy(const ImageSource& source, const AttributeClassifier& classifier,
                              const std::vector<std::string>& names,
                              const torch::Tensor& bit_pool, int64_t trials, uint64_t seed,
                              int64_t batch = 50);

/// Accuracy over `trials` samples plus MS-SSIM over `pair_count` random pairs
/// of the first `msssim_images` of them.
EvalReport evaluate(AfganModel& model, const AttributeClassifier& classifier,
                    const torch::Tensor& bit_pool, int64_t trials, int64_t msssim_images,
                    int64_t pair_count, uint64_t seed);

// ---------------------------------------------------------------------------
// Attention maps
// ---------------------------------------------------------------------------

struct AttentionMaps {
  torch::Tensor weights;    // alpha, (N,R); rows sum to one
  torch::Tensor upsampled;  // (N,H,W), every region's weight spread over its cell
  torch::Tensor image;      // (3,H,W) in [-1,1]
  std::vector<std::string> names;
  std::vector<int> bits;
  int64_t grid = 0;  // regions per side
};

/// Region weights of every attribute against `image` (3,H,W) at the final
/// resolution.
AttentionMaps export_attention_maps(AfganModel& model, const AttributeVector& attrs,
                                    const torch::Tensor& image);

/// One grayscale overlay per attribute, <label>_<bit>.pgm, plus
/// attention.json with the raw weights. Returns the image paths.
std::vector<std::filesystem::path> write_attention_maps(const AttentionMaps& maps,
                                                        const std::filesystem::path& dir);

/// IoU between the top `fraction` of pixels by weight (ties broken by pixel
/// order) and a boolean mask, both (H,W).
double top_fraction_iou(const torch::Tensor& weights, const torch::Tensor& mask,
                        double fraction = 0.1);

/// Shannon entropy (nats) of a probability row.
double entropy(const torch::Tensor& probabilities);

}  // namespace afgan
