#include "afgan/image_io.hpp"

#include <fstream>

#include <torch/torch.h>

#include "afgan/errors.hpp"

namespace afgan {

RgbImage to_rgb(const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw ConfigError("expected a (3,H,W) image");
  auto hwc = ((image.detach().to(torch::kCPU, torch::kFloat64) + 1.0) * 127.5)
                 .round()
                 .clamp(0, 255)
                 .to(torch::kUInt8)
                 .permute({1, 2, 0})
                 .contiguous();
  RgbImage out;
  out.height = image.size(1);
  out.width = image.size(2);
  out.data.assign(hwc.data_ptr<uint8_t>(), hwc.data_ptr<uint8_t>() + hwc.numel());
  return out;
}

torch::Tensor from_rgb(const RgbImage& image) {
  auto t = torch::from_blob(const_cast<uint8_t*>(image.data.data()),
                            {image.height, image.width, 3}, torch::kUInt8)
               .permute({2, 0, 1})
               .to(torch::kFloat32);
  return t / 127.5 - 1.0;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()),
            static_cast<std::streamsize>(image.data.size()));
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string magic;
  int64_t max_value = 0;
  RgbImage image;
  in >> magic >> image.width >> image.height >> max_value;
  if (magic != "P6" || max_value != 255 || image.width <= 0 || image.height <= 0) {
    throw ParseError(path.string() + ": not an 8-bit binary PPM");
  }
  in.get();
  image.data.resize(image.width * image.height * 3);
  in.read(reinterpret_cast<char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
  if (!in) throw ParseError(path.string() + ": truncated pixel data");
  return image;
}

void write_pgm(const std::filesystem::path& path, int64_t width, int64_t height,
               const std::vector<uint8_t>& gray) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
}

}  // namespace afgan
