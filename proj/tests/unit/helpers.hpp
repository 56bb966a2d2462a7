#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "confill/imaging.hpp"
#include "confill/rng.hpp"

namespace testing {

inline confill::Image random_image(int w, int h, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  confill::Rng rng(seed);
  confill::Image img(w, h);
  for (double& v : img.pixels()) v = rng.uniform(lo, hi);
  return img;
}

inline confill::Image normal_image(int w, int h, std::uint64_t seed, double scale = 1.0) {
  confill::Rng rng(seed);
  confill::Image img(w, h);
  for (double& v : img.pixels()) v = scale * rng.normal();
  return img;
}

inline std::vector<double> to_vec(const confill::Image& img) { return {img.values().begin(), img.values().end()}; }

inline confill::Image from_vec(int w, int h, const std::vector<double>& v) { return confill::Image(w, h, v); }

inline double dot(const confill::Image& a, const confill::Image& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs_diff(const confill::Image& a, const confill::Image& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

/// Largest per-component disagreement between an analytic and a numerical
/// gradient. Components whose absolute difference is below `floor` (the
/// round-off level of the difference quotient) count as agreeing.
inline double gradient_mismatch(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                double floor = 1e-9) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::fabs(analytic[i] - numeric[i]);
    if (diff <= floor) continue;
    const double scale = std::max(std::fabs(analytic[i]), std::fabs(numeric[i]));
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

}  // namespace testing
