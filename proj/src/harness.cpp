#include "afgan/harness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <ATen/CPUGeneratorImpl.h>

#include "afgan/errors.hpp"
#include "afgan/image_io.hpp"
#include "afgan/metrics.hpp"

namespace afgan {

namespace fs = std::filesystem;

at::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

AfganModel build_model(const TrainConfig& config) {
  torch::manual_seed(config.seed);
  return AfganModel(config);
}

namespace {

void say(const TrainOptions& options, const std::string& line) {
  if (options.log) options.log(line);
}

void set_trainable(torch::nn::Module& module, bool on) {
  for (auto& p : module.parameters()) p.set_requires_grad(on);
}

std::vector<torch::Tensor> params_of(std::initializer_list<torch::nn::Module*> modules) {
  std::vector<torch::Tensor> out;
  for (auto* m : modules) {
    for (auto& p : m->parameters()) out.push_back(p);
  }
  return out;
}

torch::optim::Adam make_adam(std::vector<torch::Tensor> params, double lr, const TrainConfig& c) {
  return torch::optim::Adam(
      std::move(params),
      torch::optim::AdamOptions(lr).betas({c.adam_beta1, c.adam_beta2}));
}

// Seeded reshuffle per pass; incomplete trailing batches are dropped so every
// batch holds at least two examples for the matching loss.
class BatchStream {
 public:
  BatchStream(const ImageDataset& data, int64_t batch, at::Generator gen)
      : data_(data), batch_(std::min(batch, data.size())), gen_(std::move(gen)) {
    if (data.size() < 2) throw ValidationError("the dataset needs at least two images");
    reshuffle();
  }

  int64_t batches_per_epoch() const { return data_.size() / batch_; }

  // Returns false when the current pass is exhausted (and starts the next).
  bool next(torch::Tensor& images, torch::Tensor& bits) {
    if (cursor_ + batch_ > data_.size()) {
      reshuffle();
      return false;
    }
    auto idx = order_.slice(0, cursor_, cursor_ + batch_);
    cursor_ += batch_;
    images = data_.images.index_select(0, idx);
    bits = data_.bits.index_select(0, idx);
    return true;
  }

 private:
  void reshuffle() {
    order_ = torch::randperm(data_.size(), gen_, torch::kLong);
    cursor_ = 0;
  }

  const ImageDataset& data_;
  int64_t batch_;
  at::Generator gen_;
  torch::Tensor order_;
  int64_t cursor_ = 0;
};

void check_dataset(const AfganModel& model, const ImageDataset& data) {
  if (data.bits.dim() != 2 || data.bits.size(1) != model->config().n_attrs) {
    throw ValidationError("dataset has " + std::to_string(data.bits.size(-1)) +
                          " attributes, the model expects " +
                          std::to_string(model->config().n_attrs));
  }
}

std::ofstream open_log(const fs::path& run_dir, const std::string& name) {
  std::ofstream out;
  if (run_dir.empty()) return out;
  fs::create_directories(run_dir);
  out.open(run_dir / name, std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + (run_dir / name).string());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

PretrainReport pretrain_scm(AfganModel& model, const ImageDataset& data,
                            const TrainOptions& options) {
  check_dataset(model, data);
  const auto& c = model->config();
  PretrainReport report;
  auto log = open_log(options.run_dir, "pretrain.jsonl");
  const int64_t final_res = c.final_resolution();
  model->train();

  auto* toy = model->toy_encoder();
  if (toy && c.encoder_pretrain_steps > 0) {
    BatchStream stream(data, c.batch_size, make_generator(c.seed * 7919 + 11));
    auto opt = make_adam(toy->parameters(), c.lr_pretrain, c);
    double bce_sum = 0, acc_sum = 0;
    int64_t window = 0;
    for (int64_t step = 1; step <= c.encoder_pretrain_steps; ++step) {
      torch::Tensor images, bits;
      while (!stream.next(images, bits)) {
      }
      images = resize_images(images, final_res);
      auto logits = toy->predict_logits(toy->encode(images));
      auto loss = torch::binary_cross_entropy_with_logits(logits, bits);
      opt.zero_grad();
      loss.backward();
      opt.step();
      bce_sum += loss.item<double>();
      acc_sum += ((logits > 0).to(torch::kFloat32) == bits).to(torch::kFloat32).mean().item<double>();
      ++window;
      if (step % options.log_every == 0 || step == c.encoder_pretrain_steps) {
        report.encoder_bce = bce_sum / window;
        report.encoder_accuracy = acc_sum / window;
        if (log) {
          log << nlohmann::json{{"phase", "encoder"}, {"step", step}, {"bce", report.encoder_bce},
                                {"accuracy", report.encoder_accuracy}}.dump()
              << "\n";
        }
        say(options, "encoder step " + std::to_string(step) + " bce " +
                         std::to_string(report.encoder_bce) + " acc " +
                         std::to_string(report.encoder_accuracy));
        bce_sum = acc_sum = 0;
        window = 0;
      }
    }
    report.encoder_steps = c.encoder_pretrain_steps;
  }

  if (c.scm_pretrain_steps > 0) {
    if (auto module = model->encoder->as_module()) set_trainable(*module, false);
    set_trainable(*model->aem, true);
    set_trainable(*model->scm_head, true);
    BatchStream stream(data, c.batch_size, make_generator(c.seed * 7919 + 23));
    auto opt = make_adam(params_of({model->aem.get(), model->scm_head.get()}), c.lr_pretrain, c);
    double sum = 0;
    int64_t window = 0;
    for (int64_t step = 1; step <= c.scm_pretrain_steps; ++step) {
      torch::Tensor images, bits;
      while (!stream.next(images, bits)) {
      }
      auto attrs = model->aem->forward(bits);
      auto feats = model->encode(resize_images(images, final_res));
      auto loss = scm_batch_loss(attrs.local, attrs.global, feats, c.gamma1, c.gamma2, c.gamma3);
      opt.zero_grad();
      loss.total.backward();
      opt.step();
      sum += loss.total.item<double>();
      ++window;
      if (step % options.log_every == 0 || step == c.scm_pretrain_steps) {
        report.scm_loss = sum / window;
        if (log) {
          log << nlohmann::json{{"phase", "scm"}, {"step", step}, {"loss", report.scm_loss}}.dump()
              << "\n";
        }
        say(options, "scm step " + std::to_string(step) + " loss " + std::to_string(report.scm_loss));
        sum = 0;
        window = 0;
      }
    }
    report.scm_steps = c.scm_pretrain_steps;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Adversarial training
// ---------------------------------------------------------------------------

nlohmann::json metrics_line(int64_t step, int64_t epoch, const LossReport& losses) {
  nlohmann::json j = losses;
  j["step"] = step;
  j["epoch"] = epoch;
  return j;
}

TrainResult train(AfganModel& model, const ImageDataset& data, const TrainOptions& options) {
  check_dataset(model, data);
  const auto& c = model->config();
  if (options.run_pretraining) pretrain_scm(model, data, options);

  const ScoreKind kind = c.gan_loss == GanLoss::kLog ? ScoreKind::kLogit : ScoreKind::kCritic;
  const bool train_encoder = !c.freeze_encoder_in_gan;
  auto encoder_module = model->encoder->as_module();

  // Parameter groups. Frozen parts never enter an optimizer.
  std::vector<torch::Tensor> g_params = params_of({model->ca.get(), model->generator.get()});
  if (c.train_aem_in_gan) {
    for (auto& p : model->aem->parameters()) g_params.push_back(p);
  }
  if (train_encoder) {
    if (encoder_module) {
      for (auto& p : encoder_module->parameters()) g_params.push_back(p);
    }
    for (auto& p : model->scm_head->parameters()) g_params.push_back(p);
  }
  auto opt_g = make_adam(g_params, c.lr_g, c);
  auto opt_d = make_adam(model->discriminators->parameters(), c.lr_d, c);

  set_trainable(*model->aem, c.train_aem_in_gan);
  set_trainable(*model->scm_head, train_encoder);
  if (encoder_module) set_trainable(*encoder_module, train_encoder);

  at::Generator noise = make_generator(c.seed * 7919 + 101);
  BatchStream stream(data, c.batch_size, make_generator(c.seed * 7919 + 37));
  auto metrics = open_log(options.run_dir, "metrics.jsonl");
  const fs::path ckpt_dir = options.run_dir.empty() ? fs::path() : options.run_dir / "checkpoints";
  if (!ckpt_dir.empty()) fs::create_directories(ckpt_dir);

  const int64_t final_res = c.final_resolution();
  const int64_t cycle = c.d_steps_per_cycle + c.g_steps_per_cycle;
  TrainResult result;
  std::array<double, 3> last_d{};
  double last_d_total = 0;
  int64_t update = 0;
  bool done = false;
  model->train();

  auto save = [&](const std::string& name) {
    if (ckpt_dir.empty()) return;
    result.final_checkpoint = ckpt_dir / name;
    save_checkpoint(result.final_checkpoint, to_checkpoint(model));
  };

  for (int64_t epoch = 1; epoch <= c.epochs && !done; ++epoch) {
    torch::Tensor real, bits;
    while (stream.next(real, bits)) {
      real = resize_images(real, final_res);
      const bool d_turn = (update % cycle) < c.d_steps_per_cycle;
      ++update;

      if (d_turn) {
        set_trainable(*model->discriminators, true);
        Generation fake;
        torch::Tensor real_global;
        {
          torch::NoGradGuard no_grad;
          fake = model->generate(bits, noise);
          real_global = fake.attrs.global;
        }
        torch::Tensor d_loss = torch::zeros({});
        for (int i = 0; i < 3; ++i) {
          const int64_t res = model->generator->resolution(i);
          GeneratedImage real_i{resize_images(real, res), i};
          auto real_out = model->discriminators->discriminate(real_i, real_global, i, kind);
          auto fake_out = model->discriminators->discriminate(fake.out.images[i], real_global, i, kind);
          torch::Tensor gp = torch::zeros({});
          if (c.gan_loss == GanLoss::kWganGp && c.gp_weight > 0) {
            gp = gradient_penalty(*model->discriminators->stage(i), real_i.pixels,
                                  fake.out.images[i].pixels, real_global, noise);
          }
          auto d_i = discriminator_loss(real_out, fake_out, gp, c.gp_weight, c.gan_loss);
          last_d[i] = d_i.item<double>();
          d_loss = d_loss + d_i;
        }
        if (options.update_discriminators) {
          opt_d.zero_grad();
          d_loss.backward();
          opt_d.step();
        }
        last_d_total = d_loss.item<double>();
        ++result.d_steps;
        if (!std::isfinite(last_d_total)) {
          throw DivergenceError("discriminator loss is not finite at update " +
                                std::to_string(update) + " (epoch " + std::to_string(epoch) + ")");
        }
        continue;
      }

      set_trainable(*model->discriminators, false);
      auto gen = model->generate(bits, noise);
      std::array<double, 3> per_stage{};
      torch::Tensor adv = torch::zeros({});
      for (int i = 0; i < 3; ++i) {
        auto out = model->discriminators->discriminate(gen.out.images[i], gen.attrs.global, i, kind);
        auto g_i = generator_loss(out, c.gan_loss);
        per_stage[i] = g_i.item<double>();
        adv = adv + g_i;
      }
      torch::Tensor scm;
      if (c.lambda_scm > 0) {
        auto feats = model->encode(gen.final_image().pixels);
        scm = scm_batch_loss(gen.attrs.local, gen.attrs.global, feats, c.gamma1, c.gamma2, c.gamma3)
                  .total;
      } else {
        torch::NoGradGuard no_grad;
        auto feats = model->encode(gen.final_image().pixels);
        scm = scm_batch_loss(gen.attrs.local, gen.attrs.global, feats, c.gamma1, c.gamma2, c.gamma3)
                  .total;
      }
      auto kl = kl_regularizer(gen.cond);
      auto total = adv + c.kl_weight * kl;
      if (c.lambda_scm > 0) total = total + c.lambda_scm * scm;
      opt_g.zero_grad();
      total.backward();
      opt_g.step();
      ++result.g_steps;

      auto report = total_loss(per_stage, scm.item<double>(), kl.item<double>(), c.lambda_scm,
                               c.kl_weight, last_d);
      report.d_total = last_d_total;
      result.last = report;
      if (metrics) metrics << metrics_line(result.g_steps, epoch, report).dump() << "\n";
      if (!report.all_finite()) {
        if (metrics) metrics.flush();
        throw DivergenceError("non-finite loss at generator step " + std::to_string(result.g_steps) +
                              ": " + nlohmann::json(report).dump());
      }
      if (result.g_steps % options.log_every == 0) {
        std::ostringstream line;
        line << "epoch " << epoch << " step " << result.g_steps << std::fixed << std::setprecision(4)
             << " g " << report.g_total << " d " << report.d_total << " scm " << report.scm
             << " kl " << report.kl;
        say(options, line.str());
      }
      if (c.max_steps > 0 && result.g_steps >= c.max_steps) {
        done = true;
        break;
      }
    }
    result.epochs = epoch;
    if (metrics) metrics.flush();
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03lld.ckpt", static_cast<long long>(epoch));
    save(name);
  }
  set_trainable(*model, true);
  if (!ckpt_dir.empty()) {
    save_checkpoint(ckpt_dir / "final.ckpt", to_checkpoint(model));
    result.final_checkpoint = ckpt_dir / "final.ckpt";
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

SampleSet sample(AfganModel& model, const AttributeVector& attrs, int64_t count, uint64_t seed) {
  if (count <= 0) throw ConfigError("sample count must be positive");
  if (static_cast<int64_t>(attrs.bits().size()) != model->config().n_attrs) {
    throw ConfigError("attribute vector has " + std::to_string(attrs.bits().size()) +
                      " bits, the model expects " + std::to_string(model->config().n_attrs));
  }
  torch::NoGradGuard no_grad;
  model->eval();
  auto bits = attrs.to_tensor().unsqueeze(0).expand({count, -1}).contiguous();
  auto gen = model->generate(bits, make_generator(seed));
  SampleSet out;
  out.attrs = attrs;
  for (int i = 0; i < 3; ++i) out.stages[i] = gen.out.images[i].pixels.clone();
  return out;
}

std::vector<fs::path> write_samples(const SampleSet& samples, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  for (int i = 0; i < 3; ++i) {
    for (int64_t k = 0; k < samples.count(); ++k) {
      char name[48];
      std::snprintf(name, sizeof name, "stage%d_%03lld.ppm", i, static_cast<long long>(k));
      paths.push_back(dir / name);
      write_ppm(paths.back(), to_rgb(samples.stages[i][k]));
    }
  }
  return paths;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::string EvalReport::table() const {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  out << "samples           " << sample_count << "\n";
  out << "attr accuracy     " << attr_accuracy << "\n";
  if (msssim_mean >= 0) out << "MS-SSIM           " << msssim_mean << "\n";
  for (size_t i = 0; i < per_attribute_accuracy.size(); ++i) {
    std::string name = i < attribute_names.size() ? attribute_names[i] : std::to_string(i);
    name.resize(std::max<size_t>(name.size(), 18), ' ');
    out << "  " << name << per_attribute_accuracy[i] << "\n";
  }
  return out.str();
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"attr_accuracy", r.attr_accuracy},
                     {"per_attribute_accuracy", r.per_attribute_accuracy},
                     {"attribute_names", r.attribute_names},
                     {"sample_count", r.sample_count}};
  j["msssim_mean"] = r.msssim_mean >= 0 ? nlohmann::json(r.msssim_mean) : nlohmann::json();
}

ImageSource model_source(AfganModel model, uint64_t seed) {
  auto gen = std::make_shared<at::Generator>(make_generator(seed));
  return [model, gen](const torch::Tensor& bits) mutable {
    torch::NoGradGuard no_grad;
    model->eval();
    return model->generate(bits, *gen).final_image().pixels;
  };
}

EvalReport eval_attr_accuracy(const ImageSource& source, const AttributeClassifier& classifier,
                              const std::vector<std::string>& names,
                              const torch::Tensor& bit_pool, int64_t trials, uint64_t seed,
                              int64_t batch) {
  if (classifier.attribute_names() != names) {
    throw ConfigError("classifier attributes do not match the model's attributes");
  }
  if (bit_pool.dim() != 2 || bit_pool.size(0) == 0 ||
      bit_pool.size(1) != static_cast<int64_t>(names.size())) {
    throw ConfigError("attribute pool must be (M,N) with N = " + std::to_string(names.size()));
  }
  if (trials <= 0 || batch <= 0) throw ConfigError("trials and batch must be positive");
  auto gen = make_generator(seed);
  auto rows = torch::randint(bit_pool.size(0), {trials}, gen, torch::kLong);
  auto agree = torch::zeros({static_cast<int64_t>(names.size())}, torch::kFloat64);
  for (int64_t start = 0; start < trials; start += batch) {
    auto idx = rows.slice(0, start, std::min(trials, start + batch));
    auto bits = bit_pool.index_select(0, idx).to(torch::kFloat32);
    auto predicted = classifier.classify_batch(source(bits));
    agree += (predicted.to(torch::kFloat32) == bits).to(torch::kFloat64).sum(0);
  }
  EvalReport report;
  report.attribute_names = names;
  report.sample_count = trials;
  auto per = agree / static_cast<double>(trials);
  for (int64_t i = 0; i < per.size(0); ++i) report.per_attribute_accuracy.push_back(per[i].item<double>());
  report.attr_accuracy = per.mean().item<double>();
  return report;
}

EvalReport evaluate(AfganModel& model, const AttributeClassifier& classifier,
                    const torch::Tensor& bit_pool, int64_t trials, int64_t msssim_images,
                    int64_t pair_count, uint64_t seed) {
  auto source = model_source(model, seed);
  std::vector<torch::Tensor> kept;
  int64_t kept_count = 0;
  ImageSource recording = [&](const torch::Tensor& bits) {
    auto images = source(bits);
    if (kept_count < msssim_images) {
      auto take = images.slice(0, 0, std::min(images.size(0), msssim_images - kept_count));
      kept.push_back(take);
      kept_count += take.size(0);
    }
    return images;
  };
  auto report = eval_attr_accuracy(recording, classifier, model->attribute_names(), bit_pool,
                                   trials, seed + 1);
  if (kept_count >= 2 && pair_count > 0) {
    report.msssim_mean = eval_msssim(torch::cat(kept), pair_count, seed + 2);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Attention maps
// ---------------------------------------------------------------------------

AttentionMaps export_attention_maps(AfganModel& model, const AttributeVector& attrs,
                                    const torch::Tensor& image) {
  const auto& c = model->config();
  if (static_cast<int64_t>(attrs.bits().size()) != c.n_attrs) {
    throw ConfigError("attribute vector length does not match the model");
  }
  torch::NoGradGuard no_grad;
  model->eval();
  auto pixels = image.dim() == 3 ? image.unsqueeze(0) : image;
  pixels = resize_images(pixels.to(torch::kFloat32), c.final_resolution());
  auto emb = model->aem->forward(attrs.to_tensor().unsqueeze(0));
  auto feats = model->encode(pixels);
  auto match = local_match(emb.local[0], feats.local[0], c.gamma1, c.gamma2);

  AttentionMaps maps;
  maps.weights = match.region_weights;  // (N,R)
  const int64_t regions = maps.weights.size(1);
  maps.grid = static_cast<int64_t>(std::lround(std::sqrt(static_cast<double>(regions))));
  if (maps.grid * maps.grid != regions) {
    throw CapabilityError("attention export needs a square region grid");
  }
  const int64_t res = pixels.size(-1);
  auto grid = maps.weights.reshape({1, -1, maps.grid, maps.grid});
  namespace F = torch::nn::functional;
  maps.upsampled =
      F::interpolate(grid, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{res, res})
                               .mode(torch::kNearest))[0];
  maps.image = pixels[0];
  maps.names = model->attribute_names();
  maps.bits.assign(attrs.bits().begin(), attrs.bits().end());
  return maps;
}

std::vector<fs::path> write_attention_maps(const AttentionMaps& maps, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  auto gray = ((maps.image + 1) / 2).mean(0).clamp(0, 1);  // (H,W)
  nlohmann::json raw = nlohmann::json::object();
  for (size_t i = 0; i < maps.names.size(); ++i) {
    auto heat = maps.upsampled[i];
    heat = heat / heat.max().clamp_min(1e-12);
    auto overlay = (0.35 * gray + 0.65 * heat).clamp(0, 1);
    auto bytes = (overlay * 255).round().to(torch::kUInt8).contiguous();
    const std::string stem = maps.names[i] + "_" + std::to_string(maps.bits[i]);
    paths.push_back(dir / (stem + ".pgm"));
    write_pgm(paths.back(), overlay.size(1), overlay.size(0),
              std::vector<uint8_t>(bytes.data_ptr<uint8_t>(),
                                   bytes.data_ptr<uint8_t>() + bytes.numel()));
    auto row = maps.weights[i].contiguous().to(torch::kFloat64);
    raw[stem] = std::vector<double>(row.data_ptr<double>(), row.data_ptr<double>() + row.numel());
  }
  std::ofstream(dir / "attention.json") << raw.dump(2) << "\n";
  return paths;
}

double top_fraction_iou(const torch::Tensor& weights, const torch::Tensor& mask, double fraction) {
  if (weights.sizes() != mask.sizes()) throw ContractViolation("weights and mask shapes differ");
  auto w = weights.flatten().to(torch::kFloat64);
  auto m = mask.flatten().to(torch::kBool);
  const int64_t k = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(fraction * w.numel())));
  auto order = std::get<1>(torch::sort(w, /*stable=*/true, /*dim=*/0, /*descending=*/true));
  auto top = torch::zeros_like(m);
  top.index_fill_(0, order.slice(0, 0, k), true);
  const double inter = (top & m).sum().item<double>();
  const double uni = (top | m).sum().item<double>();
  return uni > 0 ? inter / uni : 0.0;
}

double entropy(const torch::Tensor& probabilities) {
  auto p = probabilities.to(torch::kFloat64).flatten();
  return -(p * torch::log(p.clamp_min(1e-300))).sum().item<double>();
}

}  // namespace afgan
