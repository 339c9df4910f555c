#include "afgan/attributes.hpp"

#include <sstream>

#include <torch/torch.h>

#include "afgan/errors.hpp"

namespace afgan {

AttributeVector::AttributeVector(std::vector<uint8_t> bits,
                                 std::vector<std::string> names)
    : bits_(std::move(bits)), names_(std::move(names)) {
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] > 1) {
      throw ValidationError("attribute bit " + std::to_string(i) +
                            " is not 0 or 1");
    }
  }
  if (!names_.empty() && names_.size() != bits_.size()) {
    throw ConfigError("attribute vector has " + std::to_string(bits_.size()) +
                      " bits but " + std::to_string(names_.size()) + " names");
  }
}

AttributeVector AttributeVector::parse_bits(std::string_view text,
                                            std::vector<std::string> names) {
  std::vector<uint8_t> bits;
  std::string token;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, token, ',')) {
    const auto first = token.find_first_not_of(" \t");
    const auto last = token.find_last_not_of(" \t");
    if (first == std::string::npos) {
      throw ValidationError("empty attribute bit in '" + std::string(text) + "'");
    }
    token = token.substr(first, last - first + 1);
    if (token == "0") {
      bits.push_back(0);
    } else if (token == "1") {
      bits.push_back(1);
    } else {
      throw ValidationError("attribute bit '" + token + "' is not 0 or 1");
    }
  }
  return AttributeVector(std::move(bits), std::move(names));
}

AttributeVector AttributeVector::from_tensor(const torch::Tensor& bits,
                                             std::vector<std::string> names) {
  auto flat = bits.detach().to(torch::kCPU, torch::kFloat64).reshape({-1});
  check_binary(flat);
  std::vector<uint8_t> out(flat.numel());
  auto acc = flat.accessor<double, 1>();
  for (int64_t i = 0; i < flat.numel(); ++i) out[i] = acc[i] > 0.5 ? 1 : 0;
  return AttributeVector(std::move(out), std::move(names));
}

void AttributeVector::set(std::size_t i, bool value) {
  bits_.at(i) = value ? 1 : 0;
}

std::size_t AttributeVector::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw ConfigError("unknown attribute '" + std::string(name) + "'");
}

torch::Tensor AttributeVector::to_tensor(torch::Dtype dtype) const {
  auto t = torch::empty({static_cast<int64_t>(bits_.size())}, torch::kFloat64);
  auto acc = t.accessor<double, 1>();
  for (std::size_t i = 0; i < bits_.size(); ++i) acc[i] = bits_[i];
  return t.to(dtype);
}

std::string AttributeVector::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (i) s += ',';
    s += bits_[i] ? '1' : '0';
  }
  return s;
}

void check_binary(const torch::Tensor& bits) {
  if (bits.numel() == 0) return;
  auto b = bits.detach();
  auto ok = torch::logical_or(b == 0, b == 1).all().item<bool>();
  if (!ok) throw ValidationError("attribute tensor contains values other than 0 and 1");
}

torch::Tensor stack_attributes(const std::vector<AttributeVector>& attrs,
                               torch::Dtype dtype) {
  if (attrs.empty()) return torch::empty({0, 0}, dtype);
  std::vector<torch::Tensor> rows;
  rows.reserve(attrs.size());
  for (const auto& a : attrs) {
    if (a.size() != attrs.front().size()) {
      throw ConfigError("attribute vectors of differing lengths in one batch");
    }
    rows.push_back(a.to_tensor(dtype));
  }
  return torch::stack(rows);
}

}  // namespace afgan
