#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "confill/cad.hpp"
#include "confill/denoiser.hpp"
#include "confill/features.hpp"
#include "confill/imaging.hpp"
#include "confill/rng.hpp"
#include "confill/schedule.hpp"

namespace confill {

/// Discrepancy used for the completion constraint.
enum class ConstraintKind {
  Cad,               ///< full context-adaptive discrepancy
  PlainWasserstein,  ///< per-cell W2^2 with unit weight and scaling
  L2,                ///< mean squared known-pixel difference
};

ConstraintKind parse_constraint_kind(std::string_view name);
std::string_view to_string(ConstraintKind kind);

struct ConFillConfig {
  int gradient_steps = 2;     ///< G
  double step_size = 0.01;    ///< lambda
  int init_steps = 2;         ///< K_init
  int travel_interval = 10;   ///< rewind distance
  int travel_count = 1;       ///< jumps per checkpoint
  double clip_norm = 1.0;     ///< g_max, per-image gradient 2-norm cap
  double gamma_floor = 1e-4;  ///< lower bound of every gamma'^2
  int calib_images = 16;
  std::uint64_t seed = 0;
  ConstraintKind constraint = ConstraintKind::Cad;

  void validate() const;
};

/// gamma'^2_t for t = 1..T.
class GammaTable {
 public:
  GammaTable() = default;
  explicit GammaTable(std::vector<double> by_step);  ///< entry k is t = k + 1

  int steps() const noexcept { return static_cast<int>(values_.size()); }
  double at(int t) const;
  const std::vector<double>& values() const noexcept { return values_; }

  /// {"1": g1, "2": g2, ...}
  std::string to_json() const;
  static GammaTable from_json(std::string_view text);

  bool operator==(const GammaTable&) const = default;

 private:
  std::vector<double> values_;
};

/// Known-region discrepancy between a clean-image prediction and r0.
class Constraint {
 public:
  Constraint(ConstraintKind kind, const Image& r0, const Mask& mask, const FeatureConfig& features,
             std::uint64_t seed);

  /// Value at `x0_hat`; with `grad` non-null also its gradient.
  double evaluate(const Image& x0_hat, Image* grad = nullptr) const;

  ConstraintKind kind() const noexcept { return kind_; }
  const Image& reference() const noexcept { return r0_; }
  const Mask& mask() const noexcept { return mask_; }
  const std::optional<CellGrid>& grid() const noexcept { return grid_; }

 private:
  ConstraintKind kind_;
  Image r0_;
  Mask mask_;
  FeatureConfig features_;
  std::optional<CellGrid> grid_;
};

/// Noise prediction used during calibration; receives the clean image and
/// the true noise so tests can plug in an exact predictor.
using CalibrationPredictor =
    std::function<Image(const Image& x_t, int t, const Image& x0, const Image& noise)>;

CalibrationPredictor model_predictor(const Model& model);

/// Mask used for calibration: the left half of the columns unknown.
Mask calibration_mask(int width, int height);

/// Mean over calibration images of the known-region constraint between the
/// one-step prediction at level t and the clean image, floored at gamma_floor.
GammaTable calibrate_gamma(const CalibrationPredictor& predictor, const NoiseSchedule& sched,
                           std::span<const Image> images, const FeatureConfig& features, const ConFillConfig& cfg);

/// Calibration on `cfg.calib_images` toy images of the given size, drawn
/// from a stream derived from `cfg.seed`.
GammaTable calibrate_default(const Model& model, const FeatureConfig& features, const ConFillConfig& cfg, int size);

/// w_prior ||z - anchor||^2 + w_c C(predict_x0(z, eps(z, t), t)) and its gradient.
struct ObjectiveEval {
  double prior = 0.0;       ///< weighted prior term
  double constraint = 0.0;  ///< weighted constraint term
  double value = 0.0;
  Image grad;
  Image x0_hat;
};

ObjectiveEval evaluate_objective(const Model& model, const Constraint& constraint, const Image& z,
                                 const Image& anchor, int t, double prior_weight, double constraint_weight);

struct DescentResult {
  Image z;
  ObjectiveEval last;       ///< evaluation preceding the final update
  double grad_norm = 0.0;   ///< unclipped norm of the final gradient
  int steps_applied = 0;
  std::vector<double> step_norms;
};

/// `steps` clipped gradient-descent updates of the objective above.
DescentResult descend(const Model& model, const Constraint& constraint, Image z, const Image& anchor, int t,
                      double prior_weight, double constraint_weight, int steps, const ConFillConfig& cfg);

/// Standard-normal start followed by K_init ascent steps on
/// -1/2 ||x||^2 - C(predict_x0(x, T)) / (2 gamma'^2_T).
Image init_latent(const Model& model, const Constraint& constraint, const GammaTable& gamma,
                  const ConFillConfig& cfg, Rng& rng, std::vector<double>* objective_log = nullptr);

struct RefineOutcome {
  Image x_prev;       ///< refined sample at level t - 1
  Image x0_at_t;      ///< one-step prediction from the input at level t
  Image anchor;       ///< reverse mean
  double prior_term = 0.0;
  double constraint_term = 0.0;
  double grad_norm = 0.0;
  std::vector<double> step_norms;
};

/// One reverse step from level t >= 2: reverse-mean proposal plus noise,
/// then G descent steps on the posterior objective at level t - 1.
RefineOutcome refine_step(const Model& model, const Constraint& constraint, const GammaTable& gamma,
                          const ConFillConfig& cfg, const Image& x_t, int t, Rng& rng);

struct SamplerState {
  Image x;
  int t = 0;
  int jumps_left = 0;
};

/// Applies the rewind rule after a decrement. Returns true when a jump was
/// taken (x re-noised to level t + interval - 1).
bool time_travel(SamplerState& state, const NoiseSchedule& sched, const ConFillConfig& cfg, Rng& rng);

struct TraceRow {
  int step_index = 0;
  int t = 0;
  double prior_term = 0.0;
  double constraint_term = 0.0;
  double grad_norm = 0.0;
  bool jumped = false;
  double known_mae = 0.0;  ///< mean |s(x0 prediction) - r0| over known pixels
};

struct InpaintResult {
  Image raw;
  Image output;
  std::vector<TraceRow> trace;
  int jumps_taken = 0;
};

/// Full sampler. When `gamma` is null a table is calibrated on the fly.
InpaintResult inpaint(const Image& r0, const Mask& mask, const Model& model, const FeatureConfig& features,
                      const ConFillConfig& cfg, const GammaTable* gamma = nullptr);

void write_trace_tsv(std::ostream& out, const std::vector<TraceRow>& trace);

}  // namespace confill
