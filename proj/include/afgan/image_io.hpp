#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/types.h>

namespace afgan {

// 8-bit interleaved RGB, row-major.
struct RgbImage {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> data;  // width * height * 3

  uint8_t* pixel(int64_t x, int64_t y) { return &data[(y * width + x) * 3]; }
  const uint8_t* pixel(int64_t x, int64_t y) const { return &data[(y * width + x) * 3]; }
  bool operator==(const RgbImage&) const = default;
};

/// (3,H,W) in [-1,1] -> 8-bit with rounding and clamping.
RgbImage to_rgb(const torch::Tensor& image);
/// 8-bit -> (3,H,W) float in [-1,1].
torch::Tensor from_rgb(const RgbImage& image);

/// Binary PPM (P6) / PGM (P5).
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& gray);

}  // namespace afgan
