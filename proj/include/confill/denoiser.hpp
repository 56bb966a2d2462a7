#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "confill/imaging.hpp"
#include "confill/schedule.hpp"

namespace confill {

/// Time-embedding channels appended to the image channel.
inline constexpr int kEmbedChannels = 4;
/// Hidden width of both tanh layers.
inline constexpr int kHiddenChannels = 16;

/// sin/cos features of t/T at two frequencies.
std::array<double, kEmbedChannels> time_embedding(int t, int steps);

/// Flat parameter vector of the fixed three-layer convolutional noise
/// predictor. Declaration order: w1 [16][5][3][3], b1 [16], w2 [16][16][3][3],
/// b2 [16], w3 [1][16][3][3], b3 [1].
class DenoiserParams {
 public:
  static constexpr std::size_t kW1 = kHiddenChannels * (1 + kEmbedChannels) * 9;
  static constexpr std::size_t kB1 = kHiddenChannels;
  static constexpr std::size_t kW2 = kHiddenChannels * kHiddenChannels * 9;
  static constexpr std::size_t kB2 = kHiddenChannels;
  static constexpr std::size_t kW3 = kHiddenChannels * 9;
  static constexpr std::size_t kB3 = 1;
  static constexpr std::size_t kCount = kW1 + kB1 + kW2 + kB2 + kW3 + kB3;

  static constexpr std::size_t kOffW1 = 0;
  static constexpr std::size_t kOffB1 = kOffW1 + kW1;
  static constexpr std::size_t kOffW2 = kOffB1 + kB1;
  static constexpr std::size_t kOffB2 = kOffW2 + kW2;
  static constexpr std::size_t kOffW3 = kOffB2 + kB2;
  static constexpr std::size_t kOffB3 = kOffW3 + kW3;

  DenoiserParams() : values_(kCount, 0.0) {}
  explicit DenoiserParams(std::vector<double> values);

  /// Glorot-uniform weights (float32-representable), zero biases.
  static DenoiserParams initial(std::uint64_t seed);

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Rounds every value to the nearest float32, the checkpoint precision.
  void round_to_float();
  bool all_finite() const noexcept;

  bool operator==(const DenoiserParams&) const = default;

 private:
  std::vector<double> values_;
};

/// Human-readable architecture tag stored in checkpoints.
std::string architecture_descriptor();

/// Noise prediction eps_theta(x_t, t). Throws ContractError on non-finite input.
Image denoiser_forward(const DenoiserParams& params, const Image& x_t, int t, int steps);

/// Exact vector-Jacobian product of denoiser_forward with respect to x_t.
Image denoiser_vjp_input(const DenoiserParams& params, const Image& x_t, int t, int steps,
                         const Image& cotangent);

/// Forward output together with the input VJP for one cotangent, sharing
/// the activations of a single forward pass.
struct ForwardWithVjp {
  Image output;
  std::function<Image(const Image&)> vjp;
};
ForwardWithVjp denoiser_linearize(const DenoiserParams& params, const Image& x_t, int t, int steps);

struct TrainSample {
  const Image* x0 = nullptr;
  int t = 1;
  Image noise;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean over the batch and pixels of (eps_theta(x_t, t) - noise)^2 and its
/// exact gradient with respect to every parameter.
LossAndGrad grad_params(const DenoiserParams& params, std::span<const TrainSample> batch,
                        const NoiseSchedule& sched);

struct TrainConfig {
  int epochs = 60;
  int batch_size = 16;
  double learning_rate = 2e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  DenoiserParams params;
  std::vector<double> losses;  ///< per optimizer step
  /// Running mean over the first / last min(100, steps) steps.
  double initial_running_loss = 0.0;
  double final_running_loss = 0.0;
};

using TrainProgress = std::function<void(int step, int total, double loss)>;

/// Adaptive-moment training of the noise predictor. Deterministic given
/// (cfg.seed, dataset order). Throws NumericError on a non-finite loss.
TrainResult train(std::span<const Image> dataset, const NoiseSchedule& sched, const TrainConfig& cfg,
                  const TrainProgress& progress = {});

/// Parameters plus the schedule they were trained for.
struct Model {
  DenoiserParams params;
  NoiseSchedule schedule;
  std::uint64_t train_seed = 0;

  Image predict_noise(const Image& x_t, int t) const {
    return denoiser_forward(params, x_t, t, schedule.steps());
  }
};

std::vector<std::uint8_t> save_checkpoint(const Model& model);
Model load_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace confill
