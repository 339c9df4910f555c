#include "afgan/objective.hpp"

#include <cmath>

namespace afgan {

namespace {

torch::Tensor log_p(const torch::Tensor& score, ScoreKind kind) {
  return kind == ScoreKind::kLogit ? torch::log_sigmoid(score) : torch::log(score);
}

torch::Tensor log_one_minus_p(const torch::Tensor& score, ScoreKind kind) {
  return kind == ScoreKind::kLogit ? torch::log_sigmoid(-score) : torch::log1p(-score);
}

}  // namespace

torch::Tensor generator_loss(const DiscOutput& fake, GanLoss mode) {
  if (mode == GanLoss::kLog) {
    return -0.5 * log_p(fake.uncond, fake.kind).mean() - 0.5 * log_p(fake.cond, fake.kind).mean();
  }
  return -0.5 * fake.uncond.mean() - 0.5 * fake.cond.mean();
}

torch::Tensor discriminator_loss(const DiscOutput& real, const DiscOutput& fake,
                                 const torch::Tensor& gp, double gp_weight, GanLoss mode) {
  if (mode == GanLoss::kLog) {
    return -0.5 * log_p(real.uncond, real.kind).mean() -
           0.5 * log_one_minus_p(fake.uncond, fake.kind).mean() -
           0.5 * log_p(real.cond, real.kind).mean() -
           0.5 * log_one_minus_p(fake.cond, fake.kind).mean();
  }
  auto loss = 0.5 * (fake.uncond.mean() - real.uncond.mean()) +
              0.5 * (fake.cond.mean() - real.cond.mean());
  if (gp.defined()) loss = loss + gp_weight * gp;
  return loss;
}

bool LossReport::all_finite() const {
  auto ok = [](double v) { return std::isfinite(v); };
  for (int i = 0; i < 3; ++i) {
    if (!ok(per_stage_g[i]) || !ok(per_stage_d[i])) return false;
  }
  return ok(g_total) && ok(d_total) && ok(scm) && ok(kl);
}

LossReport total_loss(const std::array<double, 3>& per_stage_g, double scm, double kl,
                      double lambda_scm, double kl_weight,
                      const std::array<double, 3>& per_stage_d) {
  LossReport r;
  r.per_stage_g = per_stage_g;
  r.per_stage_d = per_stage_d;
  r.scm = scm;
  r.kl = kl;
  r.lambda_scm = lambda_scm;
  r.kl_weight = kl_weight;
  r.g_total = (per_stage_g[0] + per_stage_g[1] + per_stage_g[2]) + lambda_scm * scm +
              kl_weight * kl;
  r.d_total = per_stage_d[0] + per_stage_d[1] + per_stage_d[2];
  return r;
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = nlohmann::json{{"g_total", r.g_total},       {"d_total", r.d_total},
                     {"per_stage_g", r.per_stage_g}, {"per_stage_d", r.per_stage_d},
                     {"scm", r.scm},               {"kl", r.kl},
                     {"lambda_scm", r.lambda_scm}, {"kl_weight", r.kl_weight}};
}

void from_json(const nlohmann::json& j, LossReport& r) {
  j.at("g_total").get_to(r.g_total);
  j.at("d_total").get_to(r.d_total);
  j.at("per_stage_g").get_to(r.per_stage_g);
  j.at("per_stage_d").get_to(r.per_stage_d);
  j.at("scm").get_to(r.scm);
  j.at("kl").get_to(r.kl);
  j.at("lambda_scm").get_to(r.lambda_scm);
  j.at("kl_weight").get_to(r.kl_weight);
}

}  // namespace afgan
