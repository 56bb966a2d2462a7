#include "confill/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <memory>
#include <numeric>

#include <json.hpp>

#include "confill/error.hpp"
#include "confill/rng.hpp"

namespace confill {

std::array<double, kEmbedChannels> time_embedding(int t, int steps) {
  CONFILL_REQUIRE(t >= 1 && t <= steps, "time_embedding: t outside [1, T]");
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(steps);
  return {std::sin(phase), std::cos(phase), std::sin(2.0 * phase), std::cos(2.0 * phase)};
}

DenoiserParams::DenoiserParams(std::vector<double> values) : values_(std::move(values)) {
  CONFILL_REQUIRE(values_.size() == kCount, "DenoiserParams: wrong parameter count");
}

DenoiserParams DenoiserParams::initial(std::uint64_t seed) {
  DenoiserParams p;
  Rng rng(derive_seed(seed, "denoiser-init"));
  auto fill = [&](std::size_t off, std::size_t n, double fan_in, double fan_out, double gain) {
    const double a = gain * std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < n; ++i) p.values_[off + i] = rng.uniform(-a, a);
  };
  fill(kOffW1, kW1, (1 + kEmbedChannels) * 9.0, kHiddenChannels * 9.0, 1.0);
  fill(kOffW2, kW2, kHiddenChannels * 9.0, kHiddenChannels * 9.0, 1.0);
  fill(kOffW3, kW3, kHiddenChannels * 9.0, 9.0, 0.5);
  p.round_to_float();
  return p;
}

void DenoiserParams::round_to_float() {
  for (double& v : values_) v = static_cast<double>(static_cast<float>(v));
}

bool DenoiserParams::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string architecture_descriptor() {
  return "confill-eps-v1:conv3x3(1+4->16,tanh);conv3x3(16->16,tanh);conv3x3(16->1);"
         "pad=replicate;embed=sin/cos(2pi t/T,4pi t/T)";
}

// ---------------------------------------------------------------------------
// Convolution kernels on channel-major planes. Padded planes carry a
// one-pixel replicate border: (W+2) x (H+2).

namespace {

struct Geometry {
  int w;
  int h;
  std::size_t plane() const noexcept { return static_cast<std::size_t>(w) * h; }
  int pw() const noexcept { return w + 2; }
  std::size_t padded() const noexcept { return static_cast<std::size_t>(w + 2) * (h + 2); }
};

void pad_replicate(const double* src, double* dst, Geometry g) {
  const int pw = g.pw();
  for (int y = 0; y < g.h; ++y) {
    double* row = dst + static_cast<std::size_t>(y + 1) * pw;
    const double* s = src + static_cast<std::size_t>(y) * g.w;
    std::copy(s, s + g.w, row + 1);
    row[0] = s[0];
    row[g.w + 1] = s[g.w - 1];
  }
  std::copy(dst + pw, dst + 2 * pw, dst);
  std::copy(dst + static_cast<std::size_t>(g.h) * pw, dst + static_cast<std::size_t>(g.h + 1) * pw,
            dst + static_cast<std::size_t>(g.h + 1) * pw);
}

// Adjoint of pad_replicate: accumulates border gradients onto edge pixels.
void fold_replicate(const double* pad, double* dst, Geometry g) {
  const int pw = g.pw();
  for (int y = 0; y < g.h; ++y) {
    const double* row = pad + static_cast<std::size_t>(y + 1) * pw;
    double* d = dst + static_cast<std::size_t>(y) * g.w;
    std::copy(row + 1, row + 1 + g.w, d);
    d[0] += row[0];
    d[g.w - 1] += row[g.w + 1];
  }
  const double* top = pad;
  const double* bottom = pad + static_cast<std::size_t>(g.h + 1) * pw;
  double* first = dst;
  double* last = dst + static_cast<std::size_t>(g.h - 1) * g.w;
  for (int x = 0; x < pw; ++x) {
    const int cx = std::clamp(x - 1, 0, g.w - 1);
    first[cx] += top[x];
    last[cx] += bottom[x];
  }
}

// out[co] += sum_ci sum_k w[co*stride + ci*9 + k] * shift_k(in_pad[ci])
void conv_accumulate(const double* in_pad, int cin, const double* w, std::size_t co_stride, int cout,
                     double* out, Geometry g) {
  const int pw = g.pw();
  for (int co = 0; co < cout; ++co) {
    double* o = out + co * g.plane();
    for (int ci = 0; ci < cin; ++ci) {
      const double* ip = in_pad + ci * g.padded();
      const double* wk = w + co * co_stride + static_cast<std::size_t>(ci) * 9;
      for (int y = 0; y < g.h; ++y) {
        double* orow = o + static_cast<std::size_t>(y) * g.w;
        const double* r0 = ip + static_cast<std::size_t>(y) * pw;
        const double* r1 = r0 + pw;
        const double* r2 = r1 + pw;
        for (int x = 0; x < g.w; ++x) {
          orow[x] += wk[0] * r0[x] + wk[1] * r0[x + 1] + wk[2] * r0[x + 2] + wk[3] * r1[x] + wk[4] * r1[x + 1] +
                     wk[5] * r1[x + 2] + wk[6] * r2[x] + wk[7] * r2[x + 1] + wk[8] * r2[x + 2];
        }
      }
    }
  }
}

// din_pad[ci] = sum_co sum_k w[co][ci][k] * unshift_k(dout[co])  (overwrites)
void conv_backward_input(const double* dout, int cout, const double* w, std::size_t co_stride, int cin,
                         double* din_pad, Geometry g) {
  const int pw = g.pw();
  std::fill(din_pad, din_pad + cin * g.padded(), 0.0);
  for (int ci = 0; ci < cin; ++ci) {
    double* dp = din_pad + ci * g.padded();
    for (int co = 0; co < cout; ++co) {
      const double* go = dout + co * g.plane();
      const double* wk = w + co * co_stride + static_cast<std::size_t>(ci) * 9;
      for (int y = 0; y < g.h; ++y) {
        const double* grow = go + static_cast<std::size_t>(y) * g.w;
        double* r0 = dp + static_cast<std::size_t>(y) * pw;
        double* r1 = r0 + pw;
        double* r2 = r1 + pw;
        for (int x = 0; x < g.w; ++x) {
          const double v = grow[x];
          r0[x] += wk[0] * v;
          r0[x + 1] += wk[1] * v;
          r0[x + 2] += wk[2] * v;
          r1[x] += wk[3] * v;
          r1[x + 1] += wk[4] * v;
          r1[x + 2] += wk[5] * v;
          r2[x] += wk[6] * v;
          r2[x + 1] += wk[7] * v;
          r2[x + 2] += wk[8] * v;
        }
      }
    }
  }
}

// dw[co][ci][k] += sum_p dout[co][p] * shift_k(in_pad[ci])[p]
void conv_backward_weights(const double* dout, int cout, const double* in_pad, int cin, double* dw,
                           std::size_t co_stride, Geometry g) {
  const int pw = g.pw();
  for (int co = 0; co < cout; ++co) {
    const double* go = dout + co * g.plane();
    for (int ci = 0; ci < cin; ++ci) {
      const double* ip = in_pad + ci * g.padded();
      double acc[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
      for (int y = 0; y < g.h; ++y) {
        const double* grow = go + static_cast<std::size_t>(y) * g.w;
        const double* r0 = ip + static_cast<std::size_t>(y) * pw;
        const double* r1 = r0 + pw;
        const double* r2 = r1 + pw;
        for (int x = 0; x < g.w; ++x) {
          const double v = grow[x];
          acc[0] += v * r0[x];
          acc[1] += v * r0[x + 1];
          acc[2] += v * r0[x + 2];
          acc[3] += v * r1[x];
          acc[4] += v * r1[x + 1];
          acc[5] += v * r1[x + 2];
          acc[6] += v * r2[x];
          acc[7] += v * r2[x + 1];
          acc[8] += v * r2[x + 2];
        }
      }
      double* dk = dw + co * co_stride + static_cast<std::size_t>(ci) * 9;
      for (int k = 0; k < 9; ++k) dk[k] += acc[k];
    }
  }
}

struct Activations {
  Geometry g{};
  std::array<double, kEmbedChannels> embed{};
  std::vector<double> x_pad;
  std::vector<double> h1, h1_pad;
  std::vector<double> h2, h2_pad;
  std::vector<double> out;
};

Activations run_forward(const DenoiserParams& p, const Image& x, int t, int steps) {
  CONFILL_REQUIRE(x.all_finite(), "denoiser forward: non-finite input");
  CONFILL_REQUIRE(x.width() >= 1 && x.height() >= 1, "denoiser forward: empty input");
  Activations a;
  a.g = {x.width(), x.height()};
  const Geometry g = a.g;
  a.embed = time_embedding(t, steps);
  const double* w1 = p.values().data() + DenoiserParams::kOffW1;
  const double* b1 = p.values().data() + DenoiserParams::kOffB1;
  const double* w2 = p.values().data() + DenoiserParams::kOffW2;
  const double* b2 = p.values().data() + DenoiserParams::kOffB2;
  const double* w3 = p.values().data() + DenoiserParams::kOffW3;
  const double b3 = p[DenoiserParams::kOffB3];
  constexpr std::size_t w1_stride = (1 + kEmbedChannels) * 9;
  constexpr std::size_t w2_stride = kHiddenChannels * 9;

  a.x_pad.resize(g.padded());
  pad_replicate(x.pixels().data(), a.x_pad.data(), g);

  // Layer 1. The embedding channels are constant planes, and replicate
  // padding keeps them constant, so their contribution folds into a bias.
  a.h1.assign(kHiddenChannels * g.plane(), 0.0);
  for (int co = 0; co < kHiddenChannels; ++co) {
    double bias = b1[co];
    for (int e = 0; e < kEmbedChannels; ++e) {
      const double* wk = w1 + co * w1_stride + static_cast<std::size_t>(1 + e) * 9;
      bias += a.embed[static_cast<std::size_t>(e)] * std::accumulate(wk, wk + 9, 0.0);
    }
    std::fill(a.h1.begin() + static_cast<std::ptrdiff_t>(co * g.plane()),
              a.h1.begin() + static_cast<std::ptrdiff_t>((co + 1) * g.plane()), bias);
  }
  conv_accumulate(a.x_pad.data(), 1, w1, w1_stride, kHiddenChannels, a.h1.data(), g);
  for (double& v : a.h1) v = std::tanh(v);
  a.h1_pad.resize(kHiddenChannels * g.padded());
  for (int c = 0; c < kHiddenChannels; ++c)
    pad_replicate(a.h1.data() + c * g.plane(), a.h1_pad.data() + c * g.padded(), g);

  // Layer 2.
  a.h2.resize(kHiddenChannels * g.plane());
  for (int co = 0; co < kHiddenChannels; ++co)
    std::fill(a.h2.begin() + static_cast<std::ptrdiff_t>(co * g.plane()),
              a.h2.begin() + static_cast<std::ptrdiff_t>((co + 1) * g.plane()), b2[co]);
  conv_accumulate(a.h1_pad.data(), kHiddenChannels, w2, w2_stride, kHiddenChannels, a.h2.data(), g);
  for (double& v : a.h2) v = std::tanh(v);
  a.h2_pad.resize(kHiddenChannels * g.padded());
  for (int c = 0; c < kHiddenChannels; ++c)
    pad_replicate(a.h2.data() + c * g.plane(), a.h2_pad.data() + c * g.padded(), g);

  // Layer 3 (linear).
  a.out.assign(g.plane(), b3);
  conv_accumulate(a.h2_pad.data(), kHiddenChannels, w3, kHiddenChannels * 9, 1, a.out.data(), g);
  return a;
}

// Backpropagates `cot` (dL/d out). Returns dL/dx; accumulates parameter
// gradients into `dparams` when non-null.
std::vector<double> backprop(const DenoiserParams& p, const Activations& a, std::span<const double> cot,
                             double* dparams) {
  const Geometry g = a.g;
  const double* w1 = p.values().data() + DenoiserParams::kOffW1;
  const double* w2 = p.values().data() + DenoiserParams::kOffW2;
  const double* w3 = p.values().data() + DenoiserParams::kOffW3;
  constexpr std::size_t w1_stride = (1 + kEmbedChannels) * 9;
  constexpr std::size_t w2_stride = kHiddenChannels * 9;

  if (dparams) {
    conv_backward_weights(cot.data(), 1, a.h2_pad.data(), kHiddenChannels, dparams + DenoiserParams::kOffW3,
                          kHiddenChannels * 9, g);
    dparams[DenoiserParams::kOffB3] += std::accumulate(cot.begin(), cot.end(), 0.0);
  }

  std::vector<double> pad(kHiddenChannels * g.padded());
  std::vector<double> da2(kHiddenChannels * g.plane());
  conv_backward_input(cot.data(), 1, w3, kHiddenChannels * 9, kHiddenChannels, pad.data(), g);
  for (int c = 0; c < kHiddenChannels; ++c)
    fold_replicate(pad.data() + c * g.padded(), da2.data() + c * g.plane(), g);
  for (std::size_t i = 0; i < da2.size(); ++i) da2[i] *= 1.0 - a.h2[i] * a.h2[i];

  if (dparams) {
    conv_backward_weights(da2.data(), kHiddenChannels, a.h1_pad.data(), kHiddenChannels,
                          dparams + DenoiserParams::kOffW2, w2_stride, g);
    for (int c = 0; c < kHiddenChannels; ++c)
      dparams[DenoiserParams::kOffB2 + c] +=
          std::accumulate(da2.begin() + static_cast<std::ptrdiff_t>(c * g.plane()),
                          da2.begin() + static_cast<std::ptrdiff_t>((c + 1) * g.plane()), 0.0);
  }

  std::vector<double> da1(kHiddenChannels * g.plane());
  conv_backward_input(da2.data(), kHiddenChannels, w2, w2_stride, kHiddenChannels, pad.data(), g);
  for (int c = 0; c < kHiddenChannels; ++c)
    fold_replicate(pad.data() + c * g.padded(), da1.data() + c * g.plane(), g);
  for (std::size_t i = 0; i < da1.size(); ++i) da1[i] *= 1.0 - a.h1[i] * a.h1[i];

  if (dparams) {
    conv_backward_weights(da1.data(), kHiddenChannels, a.x_pad.data(), 1, dparams + DenoiserParams::kOffW1,
                          w1_stride, g);
    for (int c = 0; c < kHiddenChannels; ++c) {
      const double s = std::accumulate(da1.begin() + static_cast<std::ptrdiff_t>(c * g.plane()),
                                       da1.begin() + static_cast<std::ptrdiff_t>((c + 1) * g.plane()), 0.0);
      dparams[DenoiserParams::kOffB1 + c] += s;
      for (int e = 0; e < kEmbedChannels; ++e)
        for (int k = 0; k < 9; ++k)
          dparams[DenoiserParams::kOffW1 + c * w1_stride + static_cast<std::size_t>(1 + e) * 9 + k] +=
              a.embed[static_cast<std::size_t>(e)] * s;
    }
  }

  std::vector<double> dx(g.plane());
  conv_backward_input(da1.data(), kHiddenChannels, w1, w1_stride, 1, pad.data(), g);
  fold_replicate(pad.data(), dx.data(), g);
  return dx;
}

}  // namespace

Image denoiser_forward(const DenoiserParams& params, const Image& x_t, int t, int steps) {
  Activations a = run_forward(params, x_t, t, steps);
  return Image(x_t.width(), x_t.height(), std::move(a.out));
}

Image denoiser_vjp_input(const DenoiserParams& params, const Image& x_t, int t, int steps, const Image& cotangent) {
  CONFILL_REQUIRE(x_t.same_shape(cotangent), "denoiser_vjp_input: shape mismatch");
  const Activations a = run_forward(params, x_t, t, steps);
  return Image(x_t.width(), x_t.height(), backprop(params, a, cotangent.pixels(), nullptr));
}

ForwardWithVjp denoiser_linearize(const DenoiserParams& params, const Image& x_t, int t, int steps) {
  auto acts = std::make_shared<Activations>(run_forward(params, x_t, t, steps));
  Image out(x_t.width(), x_t.height(), acts->out);
  const int w = x_t.width(), h = x_t.height();
  return {std::move(out), [&params, acts, w, h](const Image& cot) {
            CONFILL_REQUIRE(cot.width() == w && cot.height() == h, "vjp: shape mismatch");
            return Image(w, h, backprop(params, *acts, cot.pixels(), nullptr));
          }};
}

LossAndGrad grad_params(const DenoiserParams& params, std::span<const TrainSample> batch, const NoiseSchedule& sched) {
  CONFILL_REQUIRE(!batch.empty(), "grad_params: empty batch");
  LossAndGrad r;
  r.grad.assign(DenoiserParams::kCount, 0.0);
  std::size_t total_pixels = 0;
  for (const auto& s : batch) total_pixels += s.noise.size();
  const double scale = 1.0 / static_cast<double>(total_pixels);
  for (const auto& s : batch) {
    CONFILL_REQUIRE(s.x0 && s.x0->same_shape(s.noise), "grad_params: sample shape mismatch");
    const Image x_t = q_sample(*s.x0, s.t, s.noise, sched);
    const Activations a = run_forward(params, x_t, s.t, sched.steps());
    std::vector<double> cot(a.out.size());
    for (std::size_t i = 0; i < cot.size(); ++i) {
      const double d = a.out[i] - s.noise[i];
      r.loss += d * d * scale;
      cot[i] = 2.0 * d * scale;
    }
    backprop(params, a, cot, r.grad.data());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("adam decay rates must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
}

TrainResult train(std::span<const Image> dataset, const NoiseSchedule& sched, const TrainConfig& cfg,
                  const TrainProgress& progress) {
  cfg.validate();
  CONFILL_REQUIRE(dataset.size() >= 32, "train: need at least 32 images");
  TrainResult result;
  result.params = DenoiserParams::initial(cfg.seed);
  auto theta = result.params.values();

  std::vector<double> m(DenoiserParams::kCount, 0.0), v(DenoiserParams::kCount, 0.0);
  Rng rng(derive_seed(cfg.seed, "train"));
  std::vector<std::size_t> order(dataset.size());
  const std::size_t per_epoch = (dataset.size() + cfg.batch_size - 1) / cfg.batch_size;
  const int total = static_cast<int>(per_epoch) * cfg.epochs;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      std::vector<TrainSample> batch;
      for (std::size_t k = b * cfg.batch_size; k < std::min(order.size(), (b + 1) * cfg.batch_size); ++k) {
        const Image& x0 = dataset[order[k]];
        TrainSample s;
        s.x0 = &x0;
        s.t = static_cast<int>(rng.integer(1, sched.steps()));
        s.noise = Image(x0.width(), x0.height());
        for (double& z : s.noise.pixels()) z = rng.normal();
        batch.push_back(std::move(s));
      }
      const LossAndGrad lg = grad_params(result.params, batch, sched);
      if (!std::isfinite(lg.loss))
        throw NumericError("training diverged: non-finite loss at step " + std::to_string(step));
      ++step;
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, step);
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, step);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * lg.grad[i];
        v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * lg.grad[i] * lg.grad[i];
        theta[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_epsilon);
      }
      if (!result.params.all_finite())
        throw NumericError("training diverged: non-finite parameters at step " + std::to_string(step));
      result.losses.push_back(lg.loss);
      if (progress) progress(step, total, lg.loss);
    }
  }
  result.params.round_to_float();
  if (!result.losses.empty()) {
    const std::size_t w = std::min<std::size_t>(100, result.losses.size());
    result.initial_running_loss =
        std::accumulate(result.losses.begin(), result.losses.begin() + static_cast<std::ptrdiff_t>(w), 0.0) / w;
    result.final_running_loss =
        std::accumulate(result.losses.end() - static_cast<std::ptrdiff_t>(w), result.losses.end(), 0.0) / w;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint: "CFCK" | u32 version | u32 len + descriptor | u64 count |
// f32[count] | u32 len + JSON sidecar. All integers little-endian.

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw ParseError(std::string("truncated checkpoint reading ") + what + ": expected " + std::to_string(n) +
                           " bytes, have " + std::to_string(bytes_.size() - pos_),
                       pos_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_ + b]) << (8 * b);
    pos_ += 8;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const noexcept { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const Model& model) {
  CONFILL_REQUIRE(model.params.all_finite(), "save_checkpoint: non-finite parameters");
  std::vector<std::uint8_t> out{'C', 'F', 'C', 'K'};
  put_u32(out, kCheckpointVersion);
  const std::string desc = architecture_descriptor();
  put_u32(out, static_cast<std::uint32_t>(desc.size()));
  out.insert(out.end(), desc.begin(), desc.end());
  put_u64(out, DenoiserParams::kCount);
  for (double v : model.params.values()) {
    const float f = static_cast<float>(v);
    std::uint32_t u = 0;
    std::memcpy(&u, &f, 4);
    put_u32(out, u);
  }
  const nlohmann::json sidecar = {{"T", model.schedule.steps()},
                                  {"beta_1", model.schedule.beta_first()},
                                  {"beta_T", model.schedule.beta_last()},
                                  {"eta", model.schedule.eta()},
                                  {"train_seed", model.train_seed}};
  const std::string js = sidecar.dump();
  put_u32(out, static_cast<std::uint32_t>(js.size()));
  out.insert(out.end(), js.begin(), js.end());
  return out;
}

Model load_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(4, "magic") != "CFCK") throw ParseError("bad checkpoint magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
  const std::uint32_t dlen = r.u32("descriptor length");
  const std::size_t desc_at = r.pos();
  if (r.str(dlen, "descriptor") != architecture_descriptor())
    throw ParseError("architecture descriptor mismatch", desc_at);
  const std::size_t count_at = r.pos();
  const std::uint64_t count = r.u64("parameter count");
  if (count != DenoiserParams::kCount)
    throw ParseError("parameter count " + std::to_string(count) + " != expected " +
                         std::to_string(DenoiserParams::kCount),
                     count_at);
  r.need(count * 4, "parameters");
  std::vector<double> values(count);
  for (auto& v : values) {
    const std::uint32_t u = r.u32("parameter");
    float f = 0.0f;
    std::memcpy(&f, &u, 4);
    v = f;
  }
  const std::uint32_t jlen = r.u32("sidecar length");
  const std::size_t json_at = r.pos();
  const std::string js = r.str(jlen, "sidecar");
  Model m;
  m.params = DenoiserParams(std::move(values));
  try {
    const auto j = nlohmann::json::parse(js);
    m.schedule = NoiseSchedule::linear(j.at("T").get<int>(), j.at("beta_1").get<double>(),
                                       j.at("beta_T").get<double>(), j.at("eta").get<double>());
    m.train_seed = j.at("train_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint sidecar: ") + e.what(), json_at);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("bad checkpoint schedule: ") + e.what(), json_at);
  }
  return m;
}

}  // namespace confill
