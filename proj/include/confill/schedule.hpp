#pragma once

#include <vector>

#include "confill/imaging.hpp"

namespace confill {

/// Linear-beta diffusion schedule with derived cumulative products and the
/// reverse-step standard deviations. Tables are indexed by timestep t with
/// t = 0 holding the noise-free sentinel (alpha_bar_0 = 1).
class NoiseSchedule {
 public:
  /// T >= 2 and 0 < beta_1 <= beta_T < 1; eta in [0,1].
  static NoiseSchedule linear(int steps, double beta_1, double beta_T, double eta = 1.0);

  int steps() const noexcept { return steps_; }
  double beta_first() const noexcept { return beta_first_; }
  double beta_last() const noexcept { return beta_last_; }
  double eta() const noexcept { return eta_; }

  double beta(int t) const { return beta_.at(static_cast<std::size_t>(t)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
  double sigma(int t) const { return sigma_.at(static_cast<std::size_t>(t)); }

  bool operator==(const NoiseSchedule&) const = default;

 private:
  int steps_ = 0;
  double beta_first_ = 0.0;
  double beta_last_ = 0.0;
  double eta_ = 1.0;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
};

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise; t in [1, T].
Image q_sample(const Image& x0, int t, const Image& noise, const NoiseSchedule& sched);

inline constexpr double kX0ClampLo = -0.1;
inline constexpr double kX0ClampHi = 1.1;

/// (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t), clamped to [-0.1, 1.1].
Image predict_x0(const Image& x_t, const Image& eps_hat, int t, const NoiseSchedule& sched);

/// Unclamped one-step prediction; callers that differentiate through the
/// clamp use it to find saturated pixels, whose derivative is zero.
Image predict_x0_raw(const Image& x_t, const Image& eps_hat, int t, const NoiseSchedule& sched);

/// x0_hat sqrt(ab_prev) + (x_t - x0_hat sqrt(ab_t)) / sqrt(1 - ab_t) * sqrt(1 - ab_prev - sigma^2).
/// Throws ContractError when sigma^2 exceeds 1 - ab_prev.
Image reverse_mean(const Image& x_t, const Image& x0_hat, double alpha_bar_t, double alpha_bar_prev, double sigma);

/// DDIM-style reverse mean using cumulative products; t >= 2.
Image ddim_mean(const Image& x_t, const Image& x0_hat, int t, const NoiseSchedule& sched);

/// Forward jump of an already-noised state from level `from` to level `to`
/// (to > from): mean sqrt(abar_to/abar_from) x, variance 1 - abar_to/abar_from.
Image renoise(const Image& x, int from, int to, const Image& noise, const NoiseSchedule& sched);

}  // namespace confill
