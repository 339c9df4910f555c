#include "afgan/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "afgan/errors.hpp"

namespace afgan {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kTag[] = "AFGANCKPT\n";
constexpr std::size_t kTagLen = sizeof(kTag) - 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CheckpointError("checkpoint truncated");
  return value;
}

uint8_t dtype_code(torch::Dtype d) {
  switch (d) {
    case torch::kFloat32:
      return 0;
    case torch::kFloat64:
      return 1;
    case torch::kInt64:
      return 2;
    default:
      throw CheckpointError("unsupported tensor dtype in checkpoint");
  }
}

torch::Dtype code_dtype(uint8_t code) {
  switch (code) {
    case 0:
      return torch::kFloat32;
    case 1:
      return torch::kFloat64;
    case 2:
      return torch::kInt64;
    default:
      throw CheckpointError("unknown dtype code " + std::to_string(code));
  }
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(kTag, kTagLen);
  put<uint32_t>(out, kCheckpointVersion);
  const std::string config = checkpoint.config.dump(2);
  put<uint64_t>(out, config.size());
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  put<uint64_t>(out, checkpoint.tensors.size());
  for (const auto& [name, tensor] : checkpoint.tensors) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint8_t>(out, dtype_code(t.scalar_type()));
    put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<int64_t>(out, d);
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
  }
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string tag(kTagLen, '\0');
  in.read(tag.data(), static_cast<std::streamsize>(kTagLen));
  if (!in || tag != kTag) throw CheckpointError(path.string() + " is not an AFGAN checkpoint");
  const auto version = get<uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ckpt;
  std::string config(get<uint64_t>(in), '\0');
  in.read(config.data(), static_cast<std::streamsize>(config.size()));
  if (!in) throw CheckpointError("checkpoint truncated in config");
  ckpt.config = nlohmann::json::parse(config);
  const auto count = get<uint64_t>(in);
  for (uint64_t i = 0; i < count; ++i) {
    std::string name(get<uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto dtype = code_dtype(get<uint8_t>(in));
    std::vector<int64_t> dims(get<uint32_t>(in));
    for (auto& d : dims) d = get<int64_t>(in);
    auto t = torch::empty(dims, dtype);
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    if (!in) throw CheckpointError("checkpoint truncated in tensor '" + name + "'");
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

std::map<std::string, torch::Tensor> collect_tensors(const torch::nn::Module& module,
                                                     const std::string& prefix) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& p : module.named_parameters()) out[join(prefix, p.key())] = p.value();
  for (const auto& b : module.named_buffers()) out[join(prefix, b.key())] = b.value();
  return out;
}

void restore_tensors(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& tensors,
                     const std::string& prefix) {
  torch::NoGradGuard no_grad;
  auto copy = [&](const std::string& key, torch::Tensor& dst) {
    auto it = tensors.find(join(prefix, key));
    if (it == tensors.end()) {
      throw CheckpointError("checkpoint (format v" + std::to_string(kCheckpointVersion) +
                            ") lacks tensor '" + join(prefix, key) + "'");
    }
    if (it->second.sizes() != dst.sizes()) {
      throw CheckpointError("checkpoint (format v" + std::to_string(kCheckpointVersion) +
                            ") tensor '" + join(prefix, key) +
                            "' has a shape that does not match the configured model");
    }
    dst.copy_(it->second);
  };
  for (auto& p : module.named_parameters()) copy(p.key(), p.value());
  for (auto& b : module.named_buffers()) copy(b.key(), b.value());
}

}  // namespace afgan
