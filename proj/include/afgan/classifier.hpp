#pragma once

#include <string>
#include <vector>

#include <torch/types.h>

namespace afgan {

// Anything that predicts attribute bits from images: the synthetic oracle or
// a trained predictor.
class AttributeClassifier {
 public:
  virtual ~AttributeClassifier() = default;
  /// images (B,3,H,W) in [-1,1] -> (B,N) float 0/1.
  virtual torch::Tensor classify_batch(const torch::Tensor& images) const = 0;
  virtual std::vector<std::string> attribute_names() const = 0;
};

}  // namespace afgan
