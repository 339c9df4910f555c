#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace afgan {

enum class GanLoss { kLog, kWganGp };

std::string to_string(GanLoss mode);
GanLoss parse_gan_loss(const std::string& text);

// Hyperparameters, dimensions and seeds for one run. Every field is written
// to and read from the run's config.json; unknown keys are rejected.
struct TrainConfig {
  // Attributes and embedding.
  int64_t n_attrs = 18;
  // Labels in bit order; empty means the built-in names for n_attrs
  // (the synthetic set up to six attributes, the CelebA selection otherwise).
  std::vector<std::string> attribute_names;
  int64_t attr_dim = 256;  // C
  bool two_path = true;    // false: single embedding table (ablation)
  bool attention_gate = false;

  // Generator.
  int64_t z_dim = 100;
  int64_t ca_dim = 100;
  std::vector<int64_t> stage_resolutions = {64, 128, 256};
  std::vector<int64_t> stage_channels = {256, 128, 64};
  int64_t residual_blocks = 2;

  // Discriminators.
  int64_t disc_channels = 64;
  int64_t patch_grid = 4;
  GanLoss gan_loss = GanLoss::kWganGp;
  double gp_weight = 10.0;

  // Objective.
  double lambda_scm = 5.0;
  double kl_weight = 1.0;
  double gamma1 = 5.0;
  double gamma2 = 5.0;
  double gamma3 = 10.0;

  // Optimisation.
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int64_t batch_size = 16;
  int64_t epochs = 30;
  int64_t max_steps = 0;  // generator steps; 0 = no cap
  // One cycle = d_steps_per_cycle critic updates then g_steps_per_cycle
  // generator updates.
  int64_t g_steps_per_cycle = 4;
  int64_t d_steps_per_cycle = 1;
  uint64_t seed = 1;

  // Similarity module and its pretraining.
  std::string encoder = "toy";
  std::string encoder_path;           // model file for file-backed encoders
  int64_t encoder_channels = 64;     // local feature dim of the toy backbone
  int64_t encoder_global_dim = 128;  // global feature dim of the toy backbone
  int64_t encoder_pretrain_steps = 600;
  int64_t scm_pretrain_steps = 600;
  double lr_pretrain = 1e-3;
  bool train_aem_in_gan = false;
  bool freeze_encoder_in_gan = true;

  // Synthetic dataset used when no data directory is given.
  int64_t synth_dataset_size = 2048;

  int64_t base_resolution() const { return stage_resolutions.front(); }
  int64_t final_resolution() const { return stage_resolutions.back(); }
  std::vector<std::string> resolved_attribute_names() const;

  /// Throws ConfigError if any field is out of range.
  void validate() const;
};

/// Named presets: "paper", "desk", "afgan-no-scm", "afgan-no-aem",
/// "desk-no-scm", "desk-no-aem".
TrainConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Applies an ablation on top of a config: "none", "no-scm" (lambda = 0) or
/// "no-aem" (two-path embedding replaced by a single table).
void apply_ablation(TrainConfig& config, const std::string& ablation);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Overlays the keys of `patch` on `config`; unknown keys throw ConfigError.
void merge_config(TrainConfig& config, const nlohmann::json& patch);

}  // namespace afgan
