#include "afgan/metrics.hpp"

#include <array>
#include <random>

#include "afgan/errors.hpp"

namespace afgan {

namespace {

constexpr std::array<double, 5> kScaleWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

torch::Tensor gaussian_window(int64_t channels, torch::TensorOptions options) {
  auto x = torch::arange(kSsimWindow, options) - (kSsimWindow - 1) / 2.0;
  auto g = torch::exp(-x.pow(2) / (2 * 1.5 * 1.5));
  g = g / g.sum();
  auto w = torch::outer(g, g);
  return w.expand({channels, 1, kSsimWindow, kSsimWindow}).contiguous();
}

torch::Tensor blur(const torch::Tensor& x, const torch::Tensor& window) {
  return torch::conv2d(x, window, torch::Tensor(), torch::IntArrayRef{1}, torch::IntArrayRef{0}, torch::IntArrayRef{1}, x.size(1));
}

}  // namespace

SsimTerms ssim(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes() || a.dim() != 4) {
    throw ContractViolation("ssim needs two (B,C,H,W) batches of equal shape");
  }
  if (a.size(2) < kSsimWindow || a.size(3) < kSsimWindow) {
    throw ContractViolation("ssim needs images of at least 11x11 pixels");
  }
  auto x = (a.to(torch::kFloat64) + 1) / 2;
  auto y = (b.to(torch::kFloat64) + 1) / 2;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  auto w = gaussian_window(x.size(1), x.options());
  auto mu_x = blur(x, w), mu_y = blur(y, w);
  auto sxx = blur(x * x, w) - mu_x.pow(2);
  auto syy = blur(y * y, w) - mu_y.pow(2);
  auto sxy = blur(x * y, w) - mu_x * mu_y;
  auto cs_map = (2 * sxy + c2) / (sxx + syy + c2);
  auto l_map = (2 * mu_x * mu_y + c1) / (mu_x.pow(2) + mu_y.pow(2) + c1);
  return {(l_map * cs_map).flatten(1).mean(1), cs_map.flatten(1).mean(1)};
}

int64_t ms_ssim_scales(int64_t resolution) {
  int64_t scales = 0;
  for (int64_t r = resolution; r >= kSsimWindow && scales < 5; r /= 2) ++scales;
  return scales;
}

torch::Tensor ms_ssim(const torch::Tensor& a, const torch::Tensor& b) {
  const int64_t side = std::min(a.size(-1), a.size(-2));
  const int64_t scales = ms_ssim_scales(side);
  if (scales < 2) {
    throw ContractViolation("MS-SSIM needs at least two scales; " + std::to_string(side) +
                            "px images are too small");
  }
  double total_weight = 0;
  for (int64_t i = 0; i < scales; ++i) total_weight += kScaleWeights[i];
  auto x = a, y = b;
  auto result = torch::ones({a.size(0)}, torch::kFloat64);
  for (int64_t i = 0; i < scales; ++i) {
    const double weight = kScaleWeights[i] / total_weight;
    auto terms = ssim(x, y);
    auto value = i + 1 == scales ? terms.ssim : terms.cs;
    result = result * value.clamp_min(0).pow(weight);
    if (i + 1 < scales) {
      x = torch::avg_pool2d(x, 2);
      y = torch::avg_pool2d(y, 2);
    }
  }
  return result;
}

double eval_msssim(const torch::Tensor& images, int64_t pair_count, uint64_t seed) {
  if (images.dim() != 4 || images.size(0) < 2) {
    throw ContractViolation("MS-SSIM evaluation needs at least two images");
  }
  if (pair_count <= 0) throw ContractViolation("pair_count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> pick(0, images.size(0) - 1);
  std::vector<int64_t> first, second;
  for (int64_t p = 0; p < pair_count; ++p) {
    const int64_t i = pick(rng);
    int64_t j = pick(rng);
    while (j == i) j = pick(rng);
    first.push_back(i);
    second.push_back(j);
  }
  auto a = images.index_select(0, torch::tensor(first));
  auto b = images.index_select(0, torch::tensor(second));
  torch::NoGradGuard no_grad;
  return ms_ssim(a, b).mean().item<double>();
}

}  // namespace afgan
