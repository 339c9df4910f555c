#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

namespace afgan {

/// Binary attribute flags, the generator's only semantic input.
///
/// Every element is 0 or 1. Names are optional; when present there is one
/// per bit.
class AttributeVector {
 public:
  AttributeVector() = default;
  explicit AttributeVector(std::vector<uint8_t> bits,
                           std::vector<std::string> names = {});

  /// Parses "1,0,1" (whitespace tolerated).
  static AttributeVector parse_bits(std::string_view text,
                                    std::vector<std::string> names = {});

  /// Reads a (N) or (1,N) tensor whose entries must be exactly 0 or 1.
  static AttributeVector from_tensor(const torch::Tensor& bits,
                                     std::vector<std::string> names = {});

  std::size_t size() const { return bits_.size(); }
  uint8_t operator[](std::size_t i) const { return bits_.at(i); }
  const std::vector<uint8_t>& bits() const { return bits_; }
  const std::vector<std::string>& names() const { return names_; }

  void set(std::size_t i, bool value);
  /// Index of a named attribute; throws ConfigError if absent.
  std::size_t index_of(std::string_view name) const;

  /// Float tensor of shape (N).
  torch::Tensor to_tensor(torch::Dtype dtype = torch::kFloat32) const;
  std::string to_string() const;

  bool operator==(const AttributeVector& other) const { return bits_ == other.bits_; }

 private:
  std::vector<uint8_t> bits_;
  std::vector<std::string> names_;
};

/// Throws ValidationError unless every entry of `bits` is exactly 0 or 1.
void check_binary(const torch::Tensor& bits);

/// Stacks attribute vectors into a (B,N) float tensor.
torch::Tensor stack_attributes(const std::vector<AttributeVector>& attrs,
                               torch::Dtype dtype = torch::kFloat32);

}  // namespace afgan
