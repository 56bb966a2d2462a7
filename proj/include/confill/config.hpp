#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "confill/denoiser.hpp"
#include "confill/features.hpp"
#include "confill/imaging.hpp"
#include "confill/sampler.hpp"
#include "confill/schedule.hpp"

namespace confill {

struct ScheduleConfig {
  int steps = 200;
  double beta_1 = 1e-4;
  double beta_T = 0.02;
  double eta = 1.0;

  NoiseSchedule build() const { return NoiseSchedule::linear(steps, beta_1, beta_T, eta); }
};

struct PathConfig {
  std::string data;
  std::string model;
  std::string gamma;
  std::string out;
};

/// Every tunable of the pipeline. JSON layout:
/// {"seed": n, "features": {...}, "schedule": {...}, "train": {...},
///  "sampler": {...}, "dataset": {...}, "paths": {...}}
struct RunConfig {
  std::uint64_t seed = 0;
  FeatureConfig features;
  ScheduleConfig schedule;
  TrainConfig train;
  ConFillConfig sampler;
  ToyDatasetSpec dataset;
  PathConfig paths;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Parses a full or partial document over the defaults. Unknown keys and
/// wrongly typed values raise ConfigError.
RunConfig parse_run_config(std::string_view json_text);

/// Applies a partial document on top of `base`.
RunConfig merge_run_config(const RunConfig& base, std::string_view json_patch);

/// Pretty-printed effective configuration; parse_run_config accepts it.
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace confill
