// afgan: command-line entry point. Every subcommand writes into an output
// directory with a fixed layout:
//
//   <out>/config.json     resolved configuration
//   <out>/checkpoints/    epoch_NNN.ckpt, final.ckpt (scm.ckpt after pretrain-scm)
//   <out>/samples/        stage<i>_<k>.ppm
//   <out>/metrics.jsonl   one line per generator step
//   <out>/report.json     evaluation report (plus report.txt)

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "afgan/config.hpp"
#include "afgan/data.hpp"
#include "afgan/errors.hpp"
#include "afgan/harness.hpp"
#include "afgan/image_io.hpp"
#include "afgan/model.hpp"

namespace fs = std::filesystem;
using namespace afgan;

namespace {

// Keys a config file may carry besides TrainConfig fields.
struct RunPaths {
  std::string data;           // directory written by make-synth
  std::string celeba_attrs;   // list_attr_celeba.txt
  std::string celeba_images;  // directory of <stem>.ppm
  int64_t celeba_limit = 0;
};

struct TrainFlags {
  std::string preset = "desk";
  std::string ablation = "none";
  std::string config_file;
  std::optional<uint64_t> seed;
  std::optional<int64_t> epochs;
  std::optional<int64_t> max_steps;
  std::string out = "runs/afgan";
  RunPaths paths;
  bool quiet = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--preset", f.preset, "Base configuration: paper, desk, afgan-no-scm, "
                                        "afgan-no-aem, desk-no-scm, desk-no-aem")
      ->capture_default_str();
  cmd->add_option("--ablation", f.ablation, "Ablation applied on top: none, no-scm, no-aem")
      ->capture_default_str();
  cmd->add_option("--config", f.config_file,
                  "JSON file overriding config keys; may also set data, celeba_attrs, "
                  "celeba_images, celeba_limit");
  cmd->add_option("--seed", f.seed, "Seed for parameter init, data order and noise");
  cmd->add_option("--epochs", f.epochs, "Override the number of epochs");
  cmd->add_option("--max-steps", f.max_steps, "Stop after this many generator steps (0 = no cap)");
  cmd->add_option("--data", f.paths.data,
                  "Synthetic dataset directory from make-synth (default: render in memory)");
  cmd->add_option("--celeba-attrs", f.paths.celeba_attrs, "CelebA attribute list file");
  cmd->add_option("--celeba-images", f.paths.celeba_images,
                  "Directory of CelebA images converted to <stem>.ppm");
  cmd->add_option("--celeba-limit", f.paths.celeba_limit, "Use only the first N CelebA records");
  cmd->add_option("--out", f.out, "Run directory")->capture_default_str();
  cmd->add_flag("--quiet", f.quiet, "Suppress progress lines");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
}

TrainConfig resolve_config(TrainFlags& f) {
  TrainConfig config = preset(f.preset);
  if (!f.config_file.empty()) {
    auto doc = read_json(f.config_file);
    auto take = [&](const char* key, auto& dst) {
      if (doc.contains(key)) {
        if (dst == std::decay_t<decltype(dst)>{}) dst = doc[key].get<std::decay_t<decltype(dst)>>();
        doc.erase(key);
      }
    };
    take("data", f.paths.data);
    take("celeba_attrs", f.paths.celeba_attrs);
    take("celeba_images", f.paths.celeba_images);
    take("celeba_limit", f.paths.celeba_limit);
    merge_config(config, doc);
  }
  apply_ablation(config, f.ablation);
  if (f.seed) config.seed = *f.seed;
  if (f.epochs) config.epochs = *f.epochs;
  if (f.max_steps) config.max_steps = *f.max_steps;
  if (!f.paths.celeba_attrs.empty() && config.attribute_names.empty() &&
      config.n_attrs == static_cast<int64_t>(celeba_default_selection().size())) {
    config.attribute_names = celeba_default_selection();
  }
  config.validate();
  return config;
}

SynthSpec synth_spec_for(const TrainConfig& config) {
  SynthSpec spec;
  spec.n_attrs = config.n_attrs;
  spec.resolution = config.final_resolution();
  return spec;
}

ImageDataset load_data(const TrainConfig& config, const RunPaths& paths) {
  if (!paths.celeba_attrs.empty()) {
    if (paths.celeba_images.empty()) throw ConfigError("--celeba-images is required with --celeba-attrs");
    return load_celeba_dataset(paths.celeba_attrs, paths.celeba_images,
                               config.resolved_attribute_names(), config.final_resolution(),
                               paths.celeba_limit);
  }
  if (!paths.data.empty()) return load_synth_dataset(paths.data);
  auto spec = synth_spec_for(config);
  return render_dataset(spec, make_synth_records(spec, config.synth_dataset_size, config.seed));
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << "\n";
}

// Attribute input: either --attrs 1,0,1 or --set/--unset names on an all-zero
// vector.
AttributeVector resolve_attrs(const std::vector<std::string>& names, const std::string& bits,
                              const std::vector<std::string>& set,
                              const std::vector<std::string>& unset) {
  if (!bits.empty()) {
    if (!set.empty() || !unset.empty()) throw ConfigError("use either --attrs or --set/--unset");
    auto v = AttributeVector::parse_bits(bits);
    if (v.bits().size() != names.size()) {
      throw ConfigError("--attrs has " + std::to_string(v.bits().size()) + " bits, the model has " +
                        std::to_string(names.size()) + " attributes");
    }
    return AttributeVector(v.bits(), names);
  }
  AttributeVector v(std::vector<uint8_t>(names.size(), 0), names);
  for (const auto& n : set) v.set(v.index_of(n), true);
  for (const auto& n : unset) v.set(v.index_of(n), false);
  return v;
}

void add_attr_flags(CLI::App* cmd, std::string& bits, std::vector<std::string>& set,
                    std::vector<std::string>& unset) {
  cmd->add_option("--attrs", bits, "Comma-separated attribute bits in model order, e.g. 1,0,1,0,1,0");
  cmd->add_option("--set", set, "Attribute name to switch on (repeatable)");
  cmd->add_option("--unset", unset, "Attribute name to switch off (repeatable)");
}

std::function<void(const std::string&)> logger(bool quiet) {
  if (quiet) return {};
  return [](const std::string& line) { std::cerr << line << std::endl; };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AFGAN: attribute-conditioned face generation with attribute embedding and a "
               "similarity constraint"};
  app.require_subcommand(1);
  torch::set_num_threads(1);

  // make-synth
  int64_t synth_n = 1000, synth_attrs = 6, synth_res = 64;
  uint64_t synth_seed = 1;
  std::string synth_out = "data/synth";
  auto* make_synth = app.add_subcommand("make-synth", "Render a synthetic attribute dataset");
  make_synth->add_option("--n", synth_n, "Number of images")->capture_default_str();
  make_synth->add_option("--attrs", synth_attrs, "Number of attributes (1-6)")->capture_default_str();
  make_synth->add_option("--res", synth_res, "Resolution in pixels (multiple of 16)")->capture_default_str();
  make_synth->add_option("--seed", synth_seed, "Seed for bits and nuisance factors")->capture_default_str();
  make_synth->add_option("--out", synth_out, "Output directory")->capture_default_str();

  // pretrain-scm and train
  TrainFlags pre_flags, train_flags;
  auto* pretrain = app.add_subcommand("pretrain-scm",
                                      "Pretrain the image encoder, projection head and attribute "
                                      "embedding; writes checkpoints/scm.ckpt");
  add_train_flags(pretrain, pre_flags);
  std::string scm_checkpoint;
  auto* train_cmd = app.add_subcommand("train", "Pretrain (unless given) and train the GAN");
  add_train_flags(train_cmd, train_flags);
  train_cmd->add_option("--scm-checkpoint", scm_checkpoint,
                        "Checkpoint from pretrain-scm with the same config; skips pretraining");

  // sample
  std::string sample_ckpt, sample_bits, sample_out = "samples";
  std::vector<std::string> sample_set, sample_unset;
  int64_t sample_count = 4;
  uint64_t sample_seed = 1;
  auto* sample_cmd = app.add_subcommand("sample", "Generate all three stages for one attribute vector");
  sample_cmd->add_option("--checkpoint", sample_ckpt, "Model checkpoint")->required();
  add_attr_flags(sample_cmd, sample_bits, sample_set, sample_unset);
  sample_cmd->add_option("--count", sample_count, "Noise draws; writes 3 x count images")->capture_default_str();
  sample_cmd->add_option("--seed", sample_seed, "Noise seed")->capture_default_str();
  sample_cmd->add_option("--out", sample_out, "Output directory")->capture_default_str();

  // eval
  std::string eval_ckpt, eval_classifier = "oracle", eval_out;
  int64_t eval_trials = 500, eval_msssim_images = 100, eval_pairs = 100;
  uint64_t eval_seed = 1;
  RunPaths eval_paths;
  auto* eval_cmd = app.add_subcommand("eval", "Attribute accuracy and MS-SSIM of generated images");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--classifier", eval_classifier,
                       "oracle (synthetic rule-based) or predictor (pretrained attribute head)")
      ->capture_default_str();
  eval_cmd->add_option("--trials", eval_trials, "Generated samples to classify")->capture_default_str();
  eval_cmd->add_option("--msssim-images", eval_msssim_images, "Samples kept for MS-SSIM")
      ->capture_default_str();
  eval_cmd->add_option("--pairs", eval_pairs, "Random MS-SSIM pairs")->capture_default_str();
  eval_cmd->add_option("--seed", eval_seed, "Seed for attribute draws, noise and pairing")
      ->capture_default_str();
  eval_cmd->add_option("--data", eval_paths.data,
                       "Dataset whose attribute rows are sampled (default: the run's synthetic set)");
  eval_cmd->add_option("--out", eval_out, "Directory for report.json and report.txt (default: print only)");

  // attn-export
  std::string attn_ckpt, attn_bits, attn_image, attn_out = "attention";
  std::vector<std::string> attn_set, attn_unset;
  uint64_t attn_seed = 1;
  bool attn_render = false;
  auto* attn_cmd = app.add_subcommand("attn-export", "Write per-attribute region attention maps");
  attn_cmd->add_option("--checkpoint", attn_ckpt, "Model checkpoint")->required();
  add_attr_flags(attn_cmd, attn_bits, attn_set, attn_unset);
  attn_cmd->add_option("--image", attn_image, "PPM image to explain (default: a generated one)");
  attn_cmd->add_flag("--render", attn_render,
                     "Explain the synthetic renderer's image for the attributes instead");
  attn_cmd->add_option("--seed", attn_seed, "Noise or render seed")->capture_default_str();
  attn_cmd->add_option("--out", attn_out, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make_synth) {
      SynthSpec spec;
      spec.n_attrs = synth_attrs;
      spec.resolution = synth_res;
      spec.validate();
      auto records = make_synth_records(spec, synth_n, synth_seed);
      write_synth_dataset(synth_out, spec, records);
      std::cout << "wrote " << records.size() << " images and manifest.jsonl to " << synth_out << "\n";
    } else if (*pretrain) {
      auto config = resolve_config(pre_flags);
      const fs::path out = pre_flags.out;
      write_json(out / "config.json", config);
      auto data = load_data(config, pre_flags.paths);
      auto model = build_model(config);
      TrainOptions opts;
      opts.run_dir = out;
      opts.log = logger(pre_flags.quiet);
      auto report = pretrain_scm(model, data, opts);
      save_checkpoint(out / "checkpoints" / "scm.ckpt", to_checkpoint(model));
      std::cout << "encoder accuracy " << report.encoder_accuracy << ", scm loss "
                << report.scm_loss << "; wrote " << (out / "checkpoints" / "scm.ckpt").string()
                << "\n";
    } else if (*train_cmd) {
      auto config = resolve_config(train_flags);
      const fs::path out = train_flags.out;
      write_json(out / "config.json", config);
      auto data = load_data(config, train_flags.paths);
      auto model = build_model(config);
      TrainOptions opts;
      opts.run_dir = out;
      opts.log = logger(train_flags.quiet);
      if (!scm_checkpoint.empty()) {
        auto ckpt = load_checkpoint(scm_checkpoint);
        restore_tensors(*model, ckpt.tensors);
        opts.run_pretraining = false;
      }
      auto result = train(model, data, opts);
      write_json(out / "train_summary.json",
                 {{"g_steps", result.g_steps}, {"d_steps", result.d_steps}, {"epochs", result.epochs},
                  {"last", result.last}, {"checkpoint", result.final_checkpoint.string()}});
      std::cout << result.g_steps << " generator steps over " << result.epochs
                << " epochs; final checkpoint " << result.final_checkpoint.string() << "\n";
    } else if (*sample_cmd) {
      auto model = load_model(sample_ckpt);
      auto attrs = resolve_attrs(model->attribute_names(), sample_bits, sample_set, sample_unset);
      auto set = sample(model, attrs, sample_count, sample_seed);
      auto paths = write_samples(set, sample_out);
      std::cout << "wrote " << paths.size() << " images for " << attrs.to_string() << " to "
                << sample_out << "\n";
    } else if (*eval_cmd) {
      auto model = load_model(eval_ckpt);
      const auto& config = model->config();
      auto data = load_data(config, eval_paths);
      std::unique_ptr<AttributeClassifier> classifier;
      if (eval_classifier == "oracle") {
        classifier = std::make_unique<OracleClassifier>(synth_spec_for(config));
      } else if (eval_classifier == "predictor") {
        classifier = std::make_unique<PredictorClassifier>(model);
      } else {
        throw ConfigError("--classifier must be oracle or predictor");
      }
      auto report = evaluate(model, *classifier, data.bits, eval_trials, eval_msssim_images,
                             eval_pairs, eval_seed);
      std::cout << report.table();
      if (!eval_out.empty()) {
        write_json(fs::path(eval_out) / "report.json", report);
        std::ofstream(fs::path(eval_out) / "report.txt") << report.table();
      }
    } else if (*attn_cmd) {
      auto model = load_model(attn_ckpt);
      auto attrs = resolve_attrs(model->attribute_names(), attn_bits, attn_set, attn_unset);
      torch::Tensor image;
      if (!attn_image.empty()) {
        image = from_rgb(read_ppm(attn_image));
      } else if (attn_render) {
        image = from_rgb(synth_generate(synth_spec_for(model->config()), attrs, attn_seed));
      } else {
        image = sample(model, attrs, 1, attn_seed).stages[2][0];
      }
      auto maps = export_attention_maps(model, attrs, image);
      auto paths = write_attention_maps(maps, attn_out);
      write_ppm(fs::path(attn_out) / "image.ppm", to_rgb(maps.image));
      std::cout << "wrote " << paths.size() << " attention maps to " << attn_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "afgan: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
