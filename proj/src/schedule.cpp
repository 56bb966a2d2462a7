#include "confill/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "confill/error.hpp"

namespace confill {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_1, double beta_T, double eta) {
  if (steps < 2) throw ConfigError("schedule requires T >= 2, got " + std::to_string(steps));
  if (!(beta_1 > 0.0) || !(beta_1 <= beta_T) || !(beta_T < 1.0))
    throw ConfigError("schedule requires 0 < beta_1 <= beta_T < 1");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta must lie in [0, 1]");
  NoiseSchedule s;
  s.steps_ = steps;
  s.beta_first_ = beta_1;
  s.beta_last_ = beta_T;
  s.eta_ = eta;
  s.beta_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  s.alpha_bar_.assign(static_cast<std::size_t>(steps) + 1, 1.0);
  s.sigma_.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  for (int t = 1; t <= steps; ++t) {
    const double f = static_cast<double>(t - 1) / static_cast<double>(steps - 1);
    const auto i = static_cast<std::size_t>(t);
    s.beta_[i] = (t == steps) ? beta_T : beta_1 + f * (beta_T - beta_1);
    s.alpha_bar_[i] = s.alpha_bar_[i - 1] * (1.0 - s.beta_[i]);
    const double prev = s.alpha_bar_[i - 1], cur = s.alpha_bar_[i];
    s.sigma_[i] = eta * std::sqrt((1.0 - prev) / (1.0 - cur)) * std::sqrt(1.0 - cur / prev);
  }
  return s;
}

namespace {

void check_t(int t, const NoiseSchedule& sched, const char* who) {
  if (t < 1 || t > sched.steps())
    throw ContractError(std::string(who) + ": timestep " + std::to_string(t) + " outside [1, " +
                        std::to_string(sched.steps()) + "]");
}

}  // namespace

Image q_sample(const Image& x0, int t, const Image& noise, const NoiseSchedule& sched) {
  check_t(t, sched, "q_sample");
  CONFILL_REQUIRE(x0.same_shape(noise), "q_sample: shape mismatch");
  const double a = std::sqrt(sched.alpha_bar(t)), b = std::sqrt(1.0 - sched.alpha_bar(t));
  Image out(x0.width(), x0.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

Image predict_x0_raw(const Image& x_t, const Image& eps_hat, int t, const NoiseSchedule& sched) {
  check_t(t, sched, "predict_x0");
  CONFILL_REQUIRE(x_t.same_shape(eps_hat), "predict_x0: shape mismatch");
  const double a = std::sqrt(sched.alpha_bar(t)), b = std::sqrt(1.0 - sched.alpha_bar(t));
  Image out(x_t.width(), x_t.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - b * eps_hat[i]) / a;
  return out;
}

Image predict_x0(const Image& x_t, const Image& eps_hat, int t, const NoiseSchedule& sched) {
  Image out = predict_x0_raw(x_t, eps_hat, t, sched);
  for (double& v : out.pixels()) v = std::clamp(v, kX0ClampLo, kX0ClampHi);
  return out;
}

Image reverse_mean(const Image& x_t, const Image& x0_hat, double alpha_bar_t, double alpha_bar_prev, double sigma) {
  CONFILL_REQUIRE(x_t.same_shape(x0_hat), "reverse_mean: shape mismatch");
  CONFILL_REQUIRE(alpha_bar_t > 0.0 && alpha_bar_t < 1.0 && alpha_bar_prev > 0.0 && alpha_bar_prev <= 1.0,
                  "reverse_mean: alpha_bar outside (0, 1)");
  double radicand = 1.0 - alpha_bar_prev - sigma * sigma;
  if (radicand < 0.0) {
    if (radicand < -1e-12) throw ContractError("reverse_mean: sigma_t^2 exceeds 1 - alpha_bar_{t-1}");
    radicand = 0.0;
  }
  const double c_dir = std::sqrt(radicand) / std::sqrt(1.0 - alpha_bar_t);
  const double s_prev = std::sqrt(alpha_bar_prev), s_t = std::sqrt(alpha_bar_t);
  Image out(x_t.width(), x_t.height());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x0_hat[i] * s_prev + (x_t[i] - x0_hat[i] * s_t) * c_dir;
  return out;
}

Image ddim_mean(const Image& x_t, const Image& x0_hat, int t, const NoiseSchedule& sched) {
  if (t < 2 || t > sched.steps())
    throw ContractError("ddim_mean: timestep " + std::to_string(t) + " outside [2, T]");
  return reverse_mean(x_t, x0_hat, sched.alpha_bar(t), sched.alpha_bar(t - 1), sched.sigma(t));
}

Image renoise(const Image& x, int from, int to, const Image& noise, const NoiseSchedule& sched) {
  CONFILL_REQUIRE(from >= 1 && to > from && to <= sched.steps(), "renoise: require 1 <= from < to <= T");
  CONFILL_REQUIRE(x.same_shape(noise), "renoise: shape mismatch");
  const double ratio = sched.alpha_bar(to) / sched.alpha_bar(from);
  const double a = std::sqrt(ratio), b = std::sqrt(1.0 - ratio);
  Image out(x.width(), x.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * noise[i];
  return out;
}

}  // namespace confill
