#include "afgan/config.hpp"

#include <algorithm>
#include <set>

#include "afgan/data.hpp"
#include "afgan/errors.hpp"

namespace afgan {

std::string to_string(GanLoss mode) {
  return mode == GanLoss::kLog ? "log" : "wgan-gp";
}

GanLoss parse_gan_loss(const std::string& text) {
  if (text == "log") return GanLoss::kLog;
  if (text == "wgan-gp") return GanLoss::kWganGp;
  throw ConfigError("gan_loss must be 'log' or 'wgan-gp', got '" + text + "'");
}

void TrainConfig::validate() const {
  auto positive = [](int64_t v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(n_attrs, "n_attrs");
  positive(attr_dim, "attr_dim");
  positive(z_dim, "z_dim");
  positive(ca_dim, "ca_dim");
  positive(disc_channels, "disc_channels");
  positive(patch_grid, "patch_grid");
  positive(batch_size, "batch_size");
  positive(epochs, "epochs");
  positive(g_steps_per_cycle, "g_steps_per_cycle");
  positive(d_steps_per_cycle, "d_steps_per_cycle");
  positive(encoder_channels, "encoder_channels");
  positive(encoder_global_dim, "encoder_global_dim");
  if (residual_blocks < 0) throw ConfigError("residual_blocks must be >= 0");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (stage_resolutions.size() != 3 || stage_channels.size() != 3) {
    throw ConfigError("exactly three stage resolutions and channel widths are required");
  }
  for (int i = 0; i < 3; ++i) {
    positive(stage_channels[i], "stage_channels");
    if (i > 0 && stage_resolutions[i] != 2 * stage_resolutions[i - 1]) {
      throw ConfigError("stage resolutions must double consecutively");
    }
  }
  const int64_t base = stage_resolutions[0];
  if (base < 8 || (base & (base - 1)) != 0) {
    throw ConfigError("base resolution must be a power of two >= 8");
  }
  if (patch_grid > stage_resolutions[2] / 2 || (patch_grid & (patch_grid - 1)) != 0) {
    throw ConfigError("patch_grid must be a power of two below half the final resolution");
  }
  if (gamma1 <= 0 || gamma2 <= 0 || gamma3 <= 0) throw ConfigError("gammas must be positive");
  if (lambda_scm < 0 || kl_weight < 0 || gp_weight < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (lr_g <= 0 || lr_d <= 0 || lr_pretrain <= 0) throw ConfigError("learning rates must be positive");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (encoder_pretrain_steps < 0 || scm_pretrain_steps < 0) {
    throw ConfigError("pretraining step counts must be >= 0");
  }
  if (!attribute_names.empty() && static_cast<int64_t>(attribute_names.size()) != n_attrs) {
    throw ConfigError("attribute_names must list exactly n_attrs labels");
  }
  if (synth_dataset_size < 2) throw ConfigError("synth_dataset_size must be >= 2");
}

std::vector<std::string> TrainConfig::resolved_attribute_names() const {
  if (!attribute_names.empty()) return attribute_names;
  const auto& source = n_attrs <= static_cast<int64_t>(synth_attribute_names().size())
                           ? synth_attribute_names()
                           : celeba_default_selection();
  if (n_attrs > static_cast<int64_t>(source.size())) {
    throw ConfigError("no built-in names for " + std::to_string(n_attrs) + " attributes");
  }
  return {source.begin(), source.begin() + n_attrs};
}

namespace {

TrainConfig desk() {
  TrainConfig c;
  c.n_attrs = 6;
  c.attr_dim = 32;
  c.z_dim = 100;
  c.ca_dim = 32;
  c.stage_resolutions = {16, 32, 64};
  c.stage_channels = {32, 16, 8};
  c.residual_blocks = 1;
  c.disc_channels = 16;
  c.patch_grid = 4;
  c.attention_gate = true;
  c.batch_size = 16;
  c.epochs = 30;
  c.encoder_channels = 32;
  c.encoder_global_dim = 64;
  return c;
}

}  // namespace

TrainConfig preset(const std::string& name) {
  if (name == "paper") return TrainConfig{};
  if (name == "desk") return desk();
  if (name == "afgan-no-scm" || name == "afgan-no-aem") {
    TrainConfig c;
    apply_ablation(c, name.substr(6));
    return c;
  }
  if (name == "desk-no-scm" || name == "desk-no-aem") {
    TrainConfig c = desk();
    apply_ablation(c, name.substr(5));
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() {
  return {"paper", "desk", "afgan-no-scm", "afgan-no-aem", "desk-no-scm", "desk-no-aem"};
}

void apply_ablation(TrainConfig& config, const std::string& ablation) {
  if (ablation == "none" || ablation.empty()) return;
  if (ablation == "no-scm") {
    config.lambda_scm = 0.0;
  } else if (ablation == "no-aem") {
    config.two_path = false;
  } else {
    throw ConfigError("unknown ablation '" + ablation + "' (none | no-scm | no-aem)");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"n_attrs", c.n_attrs},
      {"attribute_names", c.attribute_names},
      {"attr_dim", c.attr_dim},
      {"two_path", c.two_path},
      {"attention_gate", c.attention_gate},
      {"z_dim", c.z_dim},
      {"ca_dim", c.ca_dim},
      {"stage_resolutions", c.stage_resolutions},
      {"stage_channels", c.stage_channels},
      {"residual_blocks", c.residual_blocks},
      {"disc_channels", c.disc_channels},
      {"patch_grid", c.patch_grid},
      {"gan_loss", to_string(c.gan_loss)},
      {"gp_weight", c.gp_weight},
      {"lambda_scm", c.lambda_scm},
      {"kl_weight", c.kl_weight},
      {"gamma1", c.gamma1},
      {"gamma2", c.gamma2},
      {"gamma3", c.gamma3},
      {"lr_g", c.lr_g},
      {"lr_d", c.lr_d},
      {"adam_beta1", c.adam_beta1},
      {"adam_beta2", c.adam_beta2},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"max_steps", c.max_steps},
      {"g_steps_per_cycle", c.g_steps_per_cycle},
      {"d_steps_per_cycle", c.d_steps_per_cycle},
      {"seed", c.seed},
      {"encoder", c.encoder},
      {"encoder_path", c.encoder_path},
      {"encoder_channels", c.encoder_channels},
      {"encoder_global_dim", c.encoder_global_dim},
      {"encoder_pretrain_steps", c.encoder_pretrain_steps},
      {"scm_pretrain_steps", c.scm_pretrain_steps},
      {"lr_pretrain", c.lr_pretrain},
      {"train_aem_in_gan", c.train_aem_in_gan},
      {"freeze_encoder_in_gan", c.freeze_encoder_in_gan},
      {"synth_dataset_size", c.synth_dataset_size},
  };
}

void merge_config(TrainConfig& c, const nlohmann::json& patch) {
  if (!patch.is_object()) throw ConfigError("config document must be a JSON object");
  nlohmann::json current = c;
  for (const auto& [key, value] : patch.items()) {
    if (!current.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    current[key] = value;
  }
  try {
    c.n_attrs = current.at("n_attrs").get<int64_t>();
    c.attribute_names = current.at("attribute_names").get<std::vector<std::string>>();
    c.attr_dim = current.at("attr_dim").get<int64_t>();
    c.two_path = current.at("two_path").get<bool>();
    c.attention_gate = current.at("attention_gate").get<bool>();
    c.z_dim = current.at("z_dim").get<int64_t>();
    c.ca_dim = current.at("ca_dim").get<int64_t>();
    c.stage_resolutions = current.at("stage_resolutions").get<std::vector<int64_t>>();
    c.stage_channels = current.at("stage_channels").get<std::vector<int64_t>>();
    c.residual_blocks = current.at("residual_blocks").get<int64_t>();
    c.disc_channels = current.at("disc_channels").get<int64_t>();
    c.patch_grid = current.at("patch_grid").get<int64_t>();
    c.gan_loss = parse_gan_loss(current.at("gan_loss").get<std::string>());
    c.gp_weight = current.at("gp_weight").get<double>();
    c.lambda_scm = current.at("lambda_scm").get<double>();
    c.kl_weight = current.at("kl_weight").get<double>();
    c.gamma1 = current.at("gamma1").get<double>();
    c.gamma2 = current.at("gamma2").get<double>();
    c.gamma3 = current.at("gamma3").get<double>();
    c.lr_g = current.at("lr_g").get<double>();
    c.lr_d = current.at("lr_d").get<double>();
    c.adam_beta1 = current.at("adam_beta1").get<double>();
    c.adam_beta2 = current.at("adam_beta2").get<double>();
    c.batch_size = current.at("batch_size").get<int64_t>();
    c.epochs = current.at("epochs").get<int64_t>();
    c.max_steps = current.at("max_steps").get<int64_t>();
    c.g_steps_per_cycle = current.at("g_steps_per_cycle").get<int64_t>();
    c.d_steps_per_cycle = current.at("d_steps_per_cycle").get<int64_t>();
    c.seed = current.at("seed").get<uint64_t>();
    c.encoder = current.at("encoder").get<std::string>();
    c.encoder_path = current.at("encoder_path").get<std::string>();
    c.encoder_channels = current.at("encoder_channels").get<int64_t>();
    c.encoder_global_dim = current.at("encoder_global_dim").get<int64_t>();
    c.encoder_pretrain_steps = current.at("encoder_pretrain_steps").get<int64_t>();
    c.scm_pretrain_steps = current.at("scm_pretrain_steps").get<int64_t>();
    c.lr_pretrain = current.at("lr_pretrain").get<double>();
    c.train_aem_in_gan = current.at("train_aem_in_gan").get<bool>();
    c.freeze_encoder_in_gan = current.at("freeze_encoder_in_gan").get<bool>();
    c.synth_dataset_size = current.at("synth_dataset_size").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  merge_config(c, j);
}

}  // namespace afgan
