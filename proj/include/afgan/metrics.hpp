#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace afgan {

// Structural similarity with an 11x11 Gaussian window (sigma 1.5), valid
// filtering, K1 = 0.01, K2 = 0.03, on images mapped from [-1,1] to [0,1].

inline constexpr int64_t kSsimWindow = 11;

struct SsimTerms {
  torch::Tensor ssim;  // (B) mean luminance*contrast*structure
  torch::Tensor cs;    // (B) mean contrast*structure
};

/// Single-scale SSIM of (B,C,H,W) batches in [-1,1], averaged over channels
/// and pixels.
SsimTerms ssim(const torch::Tensor& a, const torch::Tensor& b);

/// Number of pyramid scales used for a given resolution: every 2x
/// downsampled level that is still at least the window size, at most five.
int64_t ms_ssim_scales(int64_t resolution);

/// Multi-scale SSIM per image pair, (B). The five standard weights
/// (0.0448, 0.2856, 0.3001, 0.2363, 0.1333) are truncated to the available
/// scales and renormalised. Throws ContractViolation below two scales.
torch::Tensor ms_ssim(const torch::Tensor& a, const torch::Tensor& b);

/// Mean MS-SSIM over `pair_count` random pairs of distinct images drawn
/// from `images` (K,3,H,W), K >= 2.
double eval_msssim(const torch::Tensor& images, int64_t pair_count, uint64_t seed);

}  // namespace afgan
