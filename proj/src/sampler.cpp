#include "confill/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "confill/error.hpp"

namespace confill {

ConstraintKind parse_constraint_kind(std::string_view name) {
  if (name == "cad") return ConstraintKind::Cad;
  if (name == "wd") return ConstraintKind::PlainWasserstein;
  if (name == "l2") return ConstraintKind::L2;
  throw ConfigError("unknown constraint kind '" + std::string(name) + "' (expected cad, wd or l2)");
}

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::Cad: return "cad";
    case ConstraintKind::PlainWasserstein: return "wd";
    case ConstraintKind::L2: return "l2";
  }
  return "cad";
}

void ConFillConfig::validate() const {
  if (gradient_steps < 0) throw ConfigError("gradient_steps must be >= 0");
  if (!(step_size > 0.0)) throw ConfigError("step_size must be > 0");
  if (init_steps < 0) throw ConfigError("init_steps must be >= 0");
  if (travel_interval < 1) throw ConfigError("travel_interval must be >= 1");
  if (travel_count < 0) throw ConfigError("travel_count must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
  if (!(gamma_floor > 0.0)) throw ConfigError("gamma_floor must be > 0");
  if (calib_images < 1) throw ConfigError("calib_images must be >= 1");
}

// ---------------------------------------------------------------------------
// GammaTable

GammaTable::GammaTable(std::vector<double> by_step) : values_(std::move(by_step)) {
  for (double v : values_)
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("gamma table entries must be positive and finite");
}

double GammaTable::at(int t) const {
  if (t < 1 || t > steps())
    throw ContractError("gamma table has no entry for t = " + std::to_string(t));
  return values_[static_cast<std::size_t>(t - 1)];
}

std::string GammaTable::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (int t = 1; t <= steps(); ++t) j[std::to_string(t)] = at(t);
  return j.dump(2);
}

GammaTable GammaTable::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("gamma table: ") + e.what(), e.byte);
  }
  if (!j.is_object() || j.empty()) throw ParseError("gamma table must be a non-empty object");
  std::vector<double> values(j.size(), 0.0);
  std::vector<bool> seen(j.size(), false);
  for (auto it = j.begin(); it != j.end(); ++it) {
    int t = 0;
    try {
      std::size_t used = 0;
      t = std::stoi(it.key(), &used);
      if (used != it.key().size()) t = 0;
    } catch (const std::exception&) {
      t = 0;
    }
    if (t < 1 || t > static_cast<int>(values.size()) || !it.value().is_number())
      throw ParseError("gamma table key '" + it.key() + "' is not a timestep in [1, T]");
    values[static_cast<std::size_t>(t - 1)] = it.value().get<double>();
    seen[static_cast<std::size_t>(t - 1)] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw ParseError("gamma table has gaps");
  return GammaTable(std::move(values));
}

// ---------------------------------------------------------------------------
// Constraint

Constraint::Constraint(ConstraintKind kind, const Image& r0, const Mask& mask, const FeatureConfig& features,
                       std::uint64_t seed)
    : kind_(kind), r0_(r0), mask_(mask), features_(features) {
  CONFILL_REQUIRE(mask.matches(r0), "constraint: mask shape mismatch");
  CONFILL_REQUIRE(mask.known_count() > 0, "constraint: mask has no known pixels");
  if (kind != ConstraintKind::L2) grid_ = build_cell_grid(r0, features, seed, &mask);
}

double Constraint::evaluate(const Image& x0_hat, Image* grad) const {
  CONFILL_REQUIRE(x0_hat.same_shape(r0_), "constraint: shape mismatch");
  if (kind_ == ConstraintKind::L2) {
    const double inv = 1.0 / static_cast<double>(mask_.known_count());
    if (grad) *grad = Image(r0_.width(), r0_.height());
    double acc = 0.0;
    for (std::size_t p = 0; p < r0_.size(); ++p) {
      if (!mask_.known(p)) continue;
      const double d = x0_hat[p] - r0_[p];
      acc += d * d;
      if (grad) (*grad)[p] = 2.0 * d * inv;
    }
    return acc * inv;
  }
  const CadVariant variant = kind_ == ConstraintKind::Cad ? CadVariant::Full : CadVariant::PlainWasserstein;
  return cad_evaluate(x0_hat, r0_, *grid_, features_, {variant, nullptr}, grad).total;
}

// ---------------------------------------------------------------------------
// Calibration

CalibrationPredictor model_predictor(const Model& model) {
  return [&model](const Image& x_t, int t, const Image&, const Image&) { return model.predict_noise(x_t, t); };
}

Mask calibration_mask(int width, int height) {
  Mask m(width, height, true);
  const int cols = (width + 1) / 2;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < cols; ++x) m.set(x, y, false);
  return m;
}

namespace {

Image normal_field(int w, int h, Rng& rng) {
  Image out(w, h);
  for (double& v : out.pixels()) v = rng.normal();
  return out;
}

double norm2(const Image& img) {
  double s = 0.0;
  for (double v : img.pixels()) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const Image& img) { return img.all_finite(); }

}  // namespace

GammaTable calibrate_gamma(const CalibrationPredictor& predictor, const NoiseSchedule& sched,
                           std::span<const Image> images, const FeatureConfig& features, const ConFillConfig& cfg) {
  cfg.validate();
  CONFILL_REQUIRE(!images.empty(), "calibrate_gamma: empty calibration set");
  const std::uint64_t base = derive_seed(cfg.seed, "calibration");
  std::vector<Constraint> constraints;
  constraints.reserve(images.size());
  for (const auto& img : images)
    constraints.emplace_back(cfg.constraint, img, calibration_mask(img.width(), img.height()), features,
                             derive_seed(base, "cells"));
  std::vector<double> table(static_cast<std::size_t>(sched.steps()), 0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    Rng rng(derive_seed(base, static_cast<std::uint64_t>(i)));
    for (int t = 1; t <= sched.steps(); ++t) {
      const Image noise = normal_field(images[i].width(), images[i].height(), rng);
      const Image x_t = q_sample(images[i], t, noise, sched);
      const Image x0_hat = predict_x0(x_t, predictor(x_t, t, images[i], noise), t, sched);
      table[static_cast<std::size_t>(t - 1)] += constraints[i].evaluate(x0_hat);
    }
  }
  for (double& v : table) v = std::max(cfg.gamma_floor, v / static_cast<double>(images.size()));
  return GammaTable(std::move(table));
}

GammaTable calibrate_default(const Model& model, const FeatureConfig& features, const ConFillConfig& cfg, int size) {
  ToyDatasetSpec spec;
  spec.count = cfg.calib_images;
  spec.size = size;
  spec.seed = derive_seed(cfg.seed, "calibration-set");
  return calibrate_gamma(model_predictor(model), model.schedule, gen_dataset(spec), features, cfg);
}

// ---------------------------------------------------------------------------
// Guided descent

ObjectiveEval evaluate_objective(const Model& model, const Constraint& constraint, const Image& z,
                                 const Image& anchor, int t, double prior_weight, double constraint_weight) {
  CONFILL_REQUIRE(z.same_shape(anchor), "objective: shape mismatch");
  const NoiseSchedule& sched = model.schedule;
  auto lin = denoiser_linearize(model.params, z, t, sched.steps());
  const Image raw = predict_x0_raw(z, lin.output, t, sched);
  ObjectiveEval e;
  e.x0_hat = raw;
  for (double& v : e.x0_hat.pixels()) v = std::clamp(v, kX0ClampLo, kX0ClampHi);

  Image cgrad;
  e.constraint = constraint_weight * constraint.evaluate(e.x0_hat, &cgrad);
  double prior = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) prior += (z[i] - anchor[i]) * (z[i] - anchor[i]);
  e.prior = prior_weight * prior;
  e.value = e.prior + e.constraint;

  // Chain rule through x0 = (z - b eps(z)) / a, with zero slope where clamped.
  const double a = std::sqrt(sched.alpha_bar(t)), b = std::sqrt(1.0 - sched.alpha_bar(t));
  Image u(z.width(), z.height());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const bool clamped = raw[i] < kX0ClampLo || raw[i] > kX0ClampHi;
    u[i] = clamped ? 0.0 : constraint_weight * cgrad[i];
  }
  const Image back = lin.vjp(u);
  e.grad = Image(z.width(), z.height());
  for (std::size_t i = 0; i < u.size(); ++i)
    e.grad[i] = 2.0 * prior_weight * (z[i] - anchor[i]) + (u[i] - b * back[i]) / a;
  return e;
}

DescentResult descend(const Model& model, const Constraint& constraint, Image z, const Image& anchor, int t,
                      double prior_weight, double constraint_weight, int steps, const ConFillConfig& cfg) {
  DescentResult r;
  Image prev_z, prev_grad;
  double prev_rate = 0.0;
  for (int k = 0; k < steps; ++k) {
    ObjectiveEval e = evaluate_objective(model, constraint, z, anchor, t, prior_weight, constraint_weight);
    double norm = norm2(e.grad);
    if (!std::isfinite(norm) || !all_finite(e.grad)) {
      // Undo the previous update, redo it at half the rate and re-evaluate once.
      if (k == 0) throw NumericError("non-finite refinement gradient at t = " + std::to_string(t));
      z = prev_z;
      for (std::size_t i = 0; i < z.size(); ++i) z[i] -= 0.5 * prev_rate * prev_grad[i];
      e = evaluate_objective(model, constraint, z, anchor, t, prior_weight, constraint_weight);
      norm = norm2(e.grad);
      if (!std::isfinite(norm) || !all_finite(e.grad))
        throw NumericError("refinement gradient stayed non-finite after halving the step at t = " +
                           std::to_string(t));
    }
    const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
    const double clipped_norm = norm * scale;
    const double rate = cfg.step_size / (1.0 + clipped_norm / cfg.clip_norm);
    prev_z = z;
    prev_grad = e.grad;
    for (double& g : prev_grad.pixels()) g *= scale;
    prev_rate = rate;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= rate * prev_grad[i];
    r.step_norms.push_back(rate * clipped_norm);
    r.grad_norm = norm;
    r.last = std::move(e);
    ++r.steps_applied;
  }
  r.z = std::move(z);
  return r;
}

Image init_latent(const Model& model, const Constraint& constraint, const GammaTable& gamma,
                  const ConFillConfig& cfg, Rng& rng, std::vector<double>* objective_log) {
  const int T = model.schedule.steps();
  const Image& r0 = constraint.reference();
  Image x = normal_field(r0.width(), r0.height(), rng);
  if (cfg.init_steps == 0) return x;
  const Image zero(r0.width(), r0.height());
  const double cw = 1.0 / (2.0 * gamma.at(T));
  if (!objective_log) return descend(model, constraint, x, zero, T, 0.5, cw, cfg.init_steps, cfg).z;
  for (int k = 0; k < cfg.init_steps; ++k) {
    DescentResult d = descend(model, constraint, x, zero, T, 0.5, cw, 1, cfg);
    objective_log->push_back(-d.last.value);
    x = std::move(d.z);
  }
  objective_log->push_back(-evaluate_objective(model, constraint, x, zero, T, 0.5, cw).value);
  return x;
}

RefineOutcome refine_step(const Model& model, const Constraint& constraint, const GammaTable& gamma,
                          const ConFillConfig& cfg, const Image& x_t, int t, Rng& rng) {
  const NoiseSchedule& sched = model.schedule;
  CONFILL_REQUIRE(t >= 2 && t <= sched.steps(), "refine_step: t must lie in [2, T]");
  RefineOutcome out;
  out.x0_at_t = predict_x0(x_t, model.predict_noise(x_t, t), t, sched);
  out.anchor = ddim_mean(x_t, out.x0_at_t, t, sched);
  const double sigma = sched.sigma(t);
  Image z = out.anchor;
  for (double& v : z.pixels()) v += sigma * rng.normal();
  if (cfg.gradient_steps == 0) {
    out.x_prev = std::move(z);
    return out;
  }
  const double pw = 1.0 / (2.0 * std::max(sigma * sigma, cfg.gamma_floor));
  const double cw = 1.0 / (2.0 * gamma.at(t - 1));
  DescentResult d = descend(model, constraint, std::move(z), out.anchor, t - 1, pw, cw, cfg.gradient_steps, cfg);
  out.x_prev = std::move(d.z);
  out.prior_term = d.last.prior;
  out.constraint_term = d.last.constraint;
  out.grad_norm = d.grad_norm;
  out.step_norms = std::move(d.step_norms);
  return out;
}

bool time_travel(SamplerState& state, const NoiseSchedule& sched, const ConFillConfig& cfg, Rng& rng) {
  const int T = sched.steps();
  if (!(state.t >= 1 && state.t <= T - cfg.travel_interval && state.t % cfg.travel_interval == 0)) return false;
  if (state.jumps_left == 0) {
    state.jumps_left = cfg.travel_count;
    return false;
  }
  const int to = state.t + cfg.travel_interval - 1;
  if (to > state.t) state.x = renoise(state.x, state.t, to, normal_field(state.x.width(), state.x.height(), rng), sched);
  state.t = to;
  --state.jumps_left;
  return true;
}

InpaintResult inpaint(const Image& r0, const Mask& mask, const Model& model, const FeatureConfig& features,
                      const ConFillConfig& cfg, const GammaTable* gamma) {
  cfg.validate();
  features.validate();
  CONFILL_REQUIRE(mask.matches(r0), "inpaint: image and mask shapes differ");
  CONFILL_REQUIRE(r0.all_finite(), "inpaint: non-finite reference image");
  const NoiseSchedule& sched = model.schedule;
  std::optional<GammaTable> own;
  if (!gamma) {
    CONFILL_REQUIRE(r0.width() == r0.height(), "inpaint: on-the-fly calibration needs a square image");
    own = calibrate_default(model, features, cfg, r0.width());
    gamma = &*own;
  }
  CONFILL_REQUIRE(gamma->steps() == sched.steps(), "inpaint: gamma table length differs from T");

  const Constraint constraint(cfg.constraint, r0, mask, features, derive_seed(cfg.seed, "cells"));
  Rng rng(derive_seed(cfg.seed, "sampler"));
  SamplerState state{init_latent(model, constraint, *gamma, cfg, rng), sched.steps(), cfg.travel_count};

  InpaintResult result;
  const double inv_known = 1.0 / static_cast<double>(mask.known_count());
  int index = 0;
  while (state.t > 0) {
    TraceRow row;
    row.step_index = index++;
    row.t = state.t;
    Image x0_pred;
    if (state.t >= 2) {
      RefineOutcome o = refine_step(model, constraint, *gamma, cfg, state.x, state.t, rng);
      x0_pred = std::move(o.x0_at_t);
      state.x = std::move(o.x_prev);
      row.prior_term = o.prior_term;
      row.constraint_term = o.constraint_term;
      row.grad_norm = o.grad_norm;
    } else {
      x0_pred = predict_x0(state.x, model.predict_noise(state.x, 1), 1, sched);
      result.raw = x0_pred;
    }
    double mae = 0.0;
    for (std::size_t p = 0; p < r0.size(); ++p)
      if (mask.known(p)) mae += std::abs(x0_pred[p] - r0[p]);
    row.known_mae = mae * inv_known;
    --state.t;
    if (state.t >= 1) row.jumped = time_travel(state, sched, cfg, rng);
    if (row.jumped) ++result.jumps_taken;
    result.trace.push_back(row);
  }
  Image generated = result.raw;
  for (double& v : generated.pixels()) v = std::clamp(v, 0.0, 1.0);
  result.output = composite(r0, generated, mask);
  return result;
}

void write_trace_tsv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "step_index\tt\tprior_term\tconstraint_term\tgrad_norm\tjumped\n";
  char buf[160];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d\t%d\t%.9g\t%.9g\t%.9g\t%d\n", r.step_index, r.t, r.prior_term,
                  r.constraint_term, r.grad_norm, r.jumped ? 1 : 0);
    out << buf;
  }
}

}  // namespace confill
