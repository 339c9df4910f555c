#pragma once

#include <array>

#include <json.hpp>
#include <torch/torch.h>

#include "afgan/config.hpp"
#include "afgan/discriminators.hpp"

namespace afgan {

/// Adversarial generator loss of one stage.
///   log:     -1/2 E[log D(x)] - 1/2 E[log D(x, S_global)]
///   wgan-gp: -1/2 E[D(x)]     - 1/2 E[D(x, S_global)]
torch::Tensor generator_loss(const DiscOutput& fake, GanLoss mode);

/// Discriminator loss of one stage.
///   log:     the four -1/2 log terms over real and fake, both heads
///   wgan-gp: 1/2 (E[D(fake)] - E[D(real)]) per head + gp_weight * gp
torch::Tensor discriminator_loss(const DiscOutput& real, const DiscOutput& fake,
                                 const torch::Tensor& gp, double gp_weight, GanLoss mode);

struct LossReport {
  double g_total = 0;
  double d_total = 0;
  std::array<double, 3> per_stage_g{};
  std::array<double, 3> per_stage_d{};
  double scm = 0;
  double kl = 0;
  double lambda_scm = 0;
  double kl_weight = 0;

  bool all_finite() const;
};

/// g_total = (g0 + g1 + g2) + lambda * scm + kl_weight * kl, evaluated in that
/// order; d_total = d0 + d1 + d2.
LossReport total_loss(const std::array<double, 3>& per_stage_g, double scm, double kl,
                      double lambda_scm, double kl_weight,
                      const std::array<double, 3>& per_stage_d = {});

void to_json(nlohmann::json& j, const LossReport& r);
void from_json(const nlohmann::json& j, LossReport& r);

}  // namespace afgan
