#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "confill/error.hpp"
#include "confill/sampler.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace confill;

namespace {

Model small_model(int steps, std::uint64_t seed = 1) {
  return {DenoiserParams::initial(seed), NoiseSchedule::linear(steps, 1e-4, 0.02), seed};
}

CalibrationPredictor exact_predictor() {
  return [](const Image&, int, const Image&, const Image& noise) { return noise; };
}

double distance(const Image& a, const Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("gamma tables serialize and validate") {
  const GammaTable g({0.5, 0.25, 1e-4});
  const GammaTable back = GammaTable::from_json(g.to_json());
  CHECK(back == g);
  CHECK(back.at(2) == 0.25);
  CHECK_THROWS_AS(back.at(0), ContractError);
  CHECK_THROWS_AS(back.at(4), ContractError);
  CHECK_THROWS_AS(GammaTable({1.0, -1.0}), ConfigError);
  CHECK_THROWS_AS(GammaTable::from_json("{"), ParseError);
  CHECK_THROWS_AS(GammaTable::from_json("[]"), ParseError);
  CHECK_THROWS_AS(GammaTable::from_json("{\"1\": 0.1, \"3\": 0.2}"), ParseError);
  CHECK_THROWS_AS(GammaTable::from_json("{\"1\": \"x\"}"), ParseError);
  CHECK_THROWS_AS(GammaTable::from_json("{\"0\": 0.1}"), ParseError);
  CHECK(GammaTable::from_json("{\"2\": 0.2, \"1\": 0.1}") == GammaTable({0.1, 0.2}));
}

TEST_CASE("calibration with the true noise lands on the floor") {
  const auto sched = NoiseSchedule::linear(30, 1e-4, 0.02);
  ToyDatasetSpec spec;
  spec.count = 3;
  spec.size = 16;
  const auto images = gen_dataset(spec);
  for (auto kind : {ConstraintKind::Cad, ConstraintKind::PlainWasserstein, ConstraintKind::L2}) {
    ConFillConfig cfg;
    cfg.constraint = kind;
    const GammaTable g = calibrate_gamma(exact_predictor(), sched, images, FeatureConfig{}, cfg);
    REQUIRE(g.steps() == 30);
    for (double v : g.values()) CHECK(v == cfg.gamma_floor);
  }
  ConFillConfig cfg;
  const auto zero = [](const Image& x, int, const Image&, const Image&) { return Image(x.width(), x.height()); };
  const GammaTable blind = calibrate_gamma(zero, sched, images, FeatureConfig{}, cfg);
  CHECK(blind.at(30) > blind.at(1));
  CHECK(blind.at(30) > cfg.gamma_floor);
}

TEST_CASE("constraint kinds") {
  const Image r0 = testing::random_image(16, 16, 1);
  const Mask mask = make_mask(MaskKind::HalfVertical, 0, 16);
  const Image x = testing::random_image(16, 16, 2);
  const Constraint l2(ConstraintKind::L2, r0, mask, FeatureConfig{}, 0);
  double want = 0.0;
  for (std::size_t i = 0; i < r0.size(); ++i)
    if (mask.known(i)) want += (x[i] - r0[i]) * (x[i] - r0[i]);
  CHECK(l2.evaluate(x) == doctest::Approx(want / static_cast<double>(mask.known_count())).epsilon(1e-14));
  CHECK(l2.evaluate(composite(r0, x, mask)) == 0.0);

  const Constraint cad(ConstraintKind::Cad, r0, mask, FeatureConfig{}, 4);
  CHECK(cad.evaluate(x) == cad_masked(x, r0, mask, *cad.grid(), FeatureConfig{}).total);
  CHECK_THROWS_AS(Constraint(ConstraintKind::Cad, r0, Mask(16, 16, false), FeatureConfig{}, 0), ContractError);
  CHECK(parse_constraint_kind(to_string(ConstraintKind::PlainWasserstein)) == ConstraintKind::PlainWasserstein);
  CHECK_THROWS_AS(parse_constraint_kind("ssim"), ConfigError);
}

TEST_CASE("refinement objective gradient matches finite differences") {
  const Model model = small_model(10, 3);
  const Image r0 = testing::random_image(8, 8, 1, 0.3, 0.7);
  const Mask mask = make_mask(MaskKind::HalfHorizontal, 0, 8);
  for (auto kind : {ConstraintKind::L2, ConstraintKind::PlainWasserstein}) {
    const Constraint c(kind, r0, mask, FeatureConfig{}, 2);
    for (int t : {2, 5, 9}) {
      const Image clean = testing::random_image(8, 8, static_cast<std::uint64_t>(t), 0.3, 0.7);
      const Image z = q_sample(clean, t, testing::normal_image(8, 8, 50 + static_cast<std::uint64_t>(t), 0.1), model.schedule);
      const Image anchor = testing::normal_image(8, 8, 7, 0.1);
      const ObjectiveEval e = evaluate_objective(model, c, z, anchor, t, 3.0, 0.7);
      for (double v : e.x0_hat.pixels()) REQUIRE((v > kX0ClampLo && v < kX0ClampHi));
      const auto fd = oracle::finite_diff_grad(
          [&](const std::vector<double>& v) {
            return evaluate_objective(model, c, testing::from_vec(8, 8, v), anchor, t, 3.0, 0.7).value;
          },
          testing::to_vec(z), 1e-6);
      CHECK(testing::gradient_mismatch(testing::to_vec(e.grad), fd, 1e-8) < 1e-4);
    }
  }
}

TEST_CASE("every refinement update is clipped") {
  const Model model = small_model(10, 4);
  const Image r0 = testing::random_image(8, 8, 2);
  const Mask mask = make_mask(MaskKind::HalfVertical, 0, 8);
  const Constraint c(ConstraintKind::Cad, r0, mask, FeatureConfig{}, 1);
  ConFillConfig cfg;
  cfg.step_size = 0.5;
  cfg.clip_norm = 0.3;
  const Image z = testing::normal_image(8, 8, 3);
  const DescentResult d = descend(model, c, z, Image(8, 8), 6, 50.0, 2.0, 5, cfg);
  REQUIRE(d.step_norms.size() == 5);
  CHECK(d.steps_applied == 5);
  for (double s : d.step_norms) CHECK(s <= cfg.step_size * cfg.clip_norm / 2.0 + 1e-15);
  const DescentResult one = descend(model, c, z, Image(8, 8), 6, 50.0, 2.0, 1, cfg);
  CHECK(distance(one.z, z) == doctest::Approx(one.step_norms[0]).epsilon(1e-12));
}

TEST_CASE("latent initialization") {
  const Model model = small_model(10);
  const Image r0 = testing::random_image(8, 8, 5);
  const Mask mask = make_mask(MaskKind::HalfVertical, 0, 8);
  const Constraint c(ConstraintKind::Cad, r0, mask, FeatureConfig{}, 1);
  const GammaTable gamma(std::vector<double>(10, 0.01));
  ConFillConfig cfg;
  cfg.init_steps = 0;
  Rng a(11), b(11);
  const Image x = init_latent(model, c, gamma, cfg, a);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == b.normal());

  cfg.init_steps = 3;
  Rng c1(12), c2(12);
  std::vector<double> log;
  const Image logged = init_latent(model, c, gamma, cfg, c1, &log);
  CHECK(log.size() == 4);
  CHECK(logged == init_latent(model, c, gamma, cfg, c2));
  CHECK(log.back() > log.front());
}

TEST_CASE("a vanishing constraint weight only pulls toward the reverse mean") {
  const Model model = small_model(10, 2);
  const Image r0 = testing::random_image(8, 8, 6);
  const Mask mask = make_mask(MaskKind::HalfVertical, 0, 8);
  const Constraint c(ConstraintKind::L2, r0, mask, FeatureConfig{}, 1);
  const GammaTable huge(std::vector<double>(10, 1e300));
  const Image x_t = testing::normal_image(8, 8, 1);
  ConFillConfig none;
  none.gradient_steps = 0;
  ConFillConfig some;
  some.gradient_steps = 3;
  for (int t : {3, 6, 10}) {
    Rng r1(5), r2(5);
    const RefineOutcome proposal = refine_step(model, c, huge, none, x_t, t, r1);
    const RefineOutcome refined = refine_step(model, c, huge, some, x_t, t, r2);
    CHECK(refined.anchor == proposal.anchor);
    CHECK(distance(refined.x_prev, refined.anchor) < distance(proposal.x_prev, proposal.anchor));
    CHECK(refined.constraint_term < 1e-290);
  }
  Rng r(0);
  CHECK_THROWS_AS(refine_step(model, c, huge, some, x_t, 1, r), ContractError);
}

TEST_CASE("processed timesteps follow the rewind schedule") {
  const Image r0 = testing::random_image(8, 8, 1);
  const Mask mask = make_mask(MaskKind::HalfVertical, 0, 8);
  struct Case {
    int T, interval, jumps;
  };
  for (const Case k : {Case{6, 3, 1}, Case{12, 4, 2}, Case{9, 10, 1}, Case{10, 1, 1}, Case{8, 2, 0}}) {
    const Model model = small_model(k.T);
    ConFillConfig cfg;
    cfg.travel_interval = k.interval;
    cfg.travel_count = k.jumps;
    cfg.gradient_steps = 1;
    cfg.init_steps = 0;
    const GammaTable gamma(std::vector<double>(static_cast<std::size_t>(k.T), 0.1));
    const InpaintResult r = inpaint(r0, mask, model, FeatureConfig{}, cfg, &gamma);
    std::vector<int> visited;
    int jumps = 0;
    for (const auto& row : r.trace) {
      visited.push_back(row.t);
      jumps += row.jumped;
    }
    CHECK(visited == oracle::trace_simulator(k.T, k.interval, k.jumps));
    CHECK(jumps == r.jumps_taken);
  }
  const std::vector<int> worked{6, 5, 4, 5, 4, 3, 2, 1};
  CHECK(oracle::trace_simulator(6, 3, 1) == worked);
}

TEST_CASE("inpainting output properties") {
  const Model model = small_model(12);
  const Image r0 = testing::random_image(8, 8, 3);
  const Mask mask = make_mask(MaskKind::Expand, 0, 8);
  const GammaTable gamma(std::vector<double>(12, 0.05));
  ConFillConfig cfg;
  cfg.travel_interval = 4;
  const InpaintResult a = inpaint(r0, mask, model, FeatureConfig{}, cfg, &gamma);
  const InpaintResult b = inpaint(r0, mask, model, FeatureConfig{}, cfg, &gamma);
  CHECK(a.output == b.output);
  CHECK(a.raw == b.raw);
  for (std::size_t i = 0; i < r0.size(); ++i) {
    if (mask.known(i)) CHECK(a.output[i] == r0[i]);
    CHECK(a.output[i] >= 0.0);
    CHECK(a.output[i] <= 1.0);
  }
  ConFillConfig other = cfg;
  other.seed = 1;
  CHECK(inpaint(r0, mask, model, FeatureConfig{}, other, &gamma).output != a.output);

  const InpaintResult full = inpaint(r0, Mask(8, 8, true), model, FeatureConfig{}, cfg, &gamma);
  CHECK(full.output == r0);

  const GammaTable short_table(std::vector<double>(5, 0.05));
  CHECK_THROWS_AS(inpaint(r0, mask, model, FeatureConfig{}, cfg, &short_table), ContractError);
  CHECK_THROWS_AS(inpaint(r0, Mask(4, 4, true), model, FeatureConfig{}, cfg, &gamma), ContractError);
  ConFillConfig bad = cfg;
  bad.clip_norm = 0.0;
  CHECK_THROWS_AS(inpaint(r0, mask, model, FeatureConfig{}, bad, &gamma), ConfigError);

  std::ostringstream tsv;
  write_trace_tsv(tsv, a.trace);
  const std::string text = tsv.str();
  CHECK(text.rfind("step_index\tt\tprior_term\tconstraint_term\tgrad_norm\tjumped\n", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == a.trace.size() + 1);
}
