#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "confill/features.hpp"
#include "confill/imaging.hpp"

namespace confill {

/// Mean squared difference of the sorted samples: the squared 2-Wasserstein
/// distance between two equal-size empirical measures on the line.
double wasserstein_1d_sq(std::span<const double> a, std::span<const double> b);

/// Monotone rearrangement between two equal-size samples.
struct TransportMap {
  std::vector<double> source_sorted;
  std::vector<double> target_sorted;
  std::vector<std::size_t> source_order;  ///< stable argsort of the source
  std::vector<std::size_t> target_order;  ///< stable argsort of the target
  std::vector<std::size_t> assignment;    ///< source i is sent to target assignment[i]
  double cost = 0.0;                      ///< mean squared displacement
};

TransportMap brenier_map(std::span<const double> a, std::span<const double> b);

/// Per-cell breakdown; inactive cells carry zeros.
struct CadReport {
  double total = 0.0;
  std::vector<double> terms;        ///< f_i * W_i
  std::vector<double> weights;      ///< adaptability
  std::vector<double> scalings;     ///< contextual scaling
  std::vector<double> wasserstein;  ///< squared W2 of the paired samples
};

enum class CadVariant {
  Full,              ///< sum of weight * scaling * W2^2
  PlainWasserstein,  ///< weight and scaling fixed to 1
};

struct CadOptions {
  CadVariant variant = CadVariant::Full;
  /// When set, used instead of recomputing the contextual scalings, so the
  /// value is an exact function of the sampled pixel values alone.
  const std::vector<double>* frozen_scalings = nullptr;
};

/// Evaluates the discrepancy of `x` against `y` over the sampled pixels of
/// every active cell. With `grad` non-null it also receives the gradient with
/// respect to `x`, holding weights, scalings and the matching fixed.
CadReport cad_evaluate(const Image& x, const Image& y, const CellGrid& grid, const FeatureConfig& cfg,
                       const CadOptions& opts = {}, Image* grad = nullptr);

CadReport cad_total(const Image& x, const Image& y, const CellGrid& grid, const FeatureConfig& cfg);

/// Discrepancy restricted to the known region. `grid` must have been built
/// against the same mask; throws ContractError if no pixel is known.
CadReport cad_masked(const Image& x0_hat, const Image& r0, const Mask& mask, const CellGrid& grid,
                     const FeatureConfig& cfg, CadVariant variant = CadVariant::Full);

Image cad_grad(const Image& x, const Image& y, const CellGrid& grid, const FeatureConfig& cfg,
               CadVariant variant = CadVariant::Full);

}  // namespace confill
