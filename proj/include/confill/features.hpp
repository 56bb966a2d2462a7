#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "confill/imaging.hpp"

namespace confill {

/// Tunables of the contextual feature extractor and the adaptability /
/// scaling functions.
struct FeatureConfig {
  int cell_size = 8;
  int gabor_orientations = 4;
  double gabor_wavelength = 4.0;
  double edge_threshold = 0.1;  ///< Sobel magnitude above which a pixel counts as an edge
  double psi = 10.0;            ///< variance sensitivity of the texture term
  double alpha = 0.5;           ///< texture weight
  double beta = 0.5;            ///< structure weight
  double upsilon = 0.1;         ///< scaling amplitude
  double tau = 0.02;            ///< scaling sensitivity
  int max_samples = 0;          ///< 0 selects cell_size^2
  bool invert_texture_term = false;

  int effective_max_samples() const noexcept {
    return max_samples > 0 ? max_samples : cell_size * cell_size;
  }
  /// Throws ConfigError on any violated invariant.
  void validate() const;
  /// Dimension of the handcrafted context vector: mean, variance, mean
  /// Sobel magnitude, one mean |Gabor| per orientation.
  int context_dim() const noexcept { return 3 + gabor_orientations; }
};

/// Gabor kernels are 7x7.
inline constexpr int kGaborRadius = 3;

/// 3x3 Sobel gradient magnitude with kernels scaled by 1/8 and replicate
/// padding. Requires at least 3x3 pixels.
Image sobel_magnitude(const Image& img);

/// Real, zero-mean Gabor responses at orientations k*pi/K (k = 0..K-1).
/// Orientation 0 has its carrier along the y axis, so it responds most to
/// horizontal stripes.
std::vector<Image> gabor_bank(const Image& img, const FeatureConfig& cfg);

/// The 7x7 kernel used for orientation `theta`.
std::vector<double> gabor_kernel(double theta, const FeatureConfig& cfg);

/// Per-pixel channels consumed by context vectors.
struct FeatureMaps {
  Image sobel;
  std::vector<Image> gabor;
};

FeatureMaps compute_feature_maps(const Image& img, const FeatureConfig& cfg);

/// Optional externally supplied per-pixel feature channels ("CFEAT v1").
struct ExternalFeatures {
  int width = 0;
  int height = 0;
  int depth = 0;
  std::vector<float> data;  ///< row-major, feature-fastest

  float at(std::size_t pixel, int channel) const {
    return data[pixel * static_cast<std::size_t>(depth) + static_cast<std::size_t>(channel)];
  }
};

ExternalFeatures read_cfeat(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_cfeat(const ExternalFeatures& f);

/// Rectangle of the cell partition.
struct CellRect {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
};

/// Tiles the image with cell_size squares; a trailing strip narrower than
/// two pixels is merged into its neighbour so every cell has N >= 2.
std::vector<CellRect> partition_cells(int width, int height, int cell_size);

struct Cell {
  CellRect rect;
  /// Pixel indices eligible for sampling: every pixel of the cell, or only
  /// the known ones when the grid was built against a mask. Raster order.
  std::vector<std::size_t> pool;
  double variance = 0.0;
  double edge_density = 0.0;
  double weight = 0.0;  ///< adaptability value
  int samples = 0;      ///< S_i, 0 for inactive cells
  std::vector<std::size_t> sampled;
  std::vector<double> context;  ///< reference-side context vector

  bool active() const noexcept { return samples > 0; }
};

/// Cell partition plus per-cell statistics of a reference image. Immutable
/// once built; the sampler computes it once from r0 and reuses it.
class CellGrid {
 public:
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const std::vector<Cell>& cells() const noexcept { return cells_; }
  const std::optional<Mask>& mask() const noexcept { return mask_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::optional<ExternalFeatures>& external() const noexcept { return external_; }

  friend CellGrid build_cell_grid(const Image&, const FeatureConfig&, std::uint64_t,
                                  const Mask*, const ExternalFeatures*);

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Cell> cells_;
  std::optional<Mask> mask_;
  std::optional<ExternalFeatures> external_;
  std::uint64_t seed_ = 0;
};

/// Builds the grid on the reference image. With a mask, statistics are
/// taken over known pixels of s(reference) and cells with fewer than two
/// known pixels are inactive.
CellGrid build_cell_grid(const Image& reference, const FeatureConfig& cfg, std::uint64_t seed,
                         const Mask* mask = nullptr, const ExternalFeatures* external = nullptr);

/// Population variance over the given pixels.
double pool_variance(const Image& img, std::span<const std::size_t> pool);
std::vector<double> local_variance(const Image& img, const CellGrid& grid);

/// Fraction of pool pixels whose Sobel magnitude exceeds `threshold`.
double pool_edge_density(const Image& sobel, std::span<const std::size_t> pool, double threshold);
std::vector<double> edge_density(const Image& img, const CellGrid& grid, double threshold);

/// alpha*exp(-psi*Var*N/(N-1)) + beta*ED; N >= 2.
double adaptability(double variance, double edge_density, std::size_t n, const FeatureConfig& cfg);

/// max(1, min(pool_size, ceil(m * weight))).
int sample_count(double weight, std::size_t pool_size, const FeatureConfig& cfg);

/// Seeded draw of `count` pool entries without replacement, returned sorted.
std::vector<std::size_t> sample_pool(std::span<const std::size_t> pool, int count,
                                     std::uint64_t seed, std::size_t cell_index);

std::vector<double> context_vector(const Image& img, const FeatureMaps& maps,
                                   std::span<const std::size_t> pool, const FeatureConfig& cfg,
                                   const ExternalFeatures* external = nullptr);

/// Context vectors of `img` for every cell of `grid`, evaluated on s(img)
/// when the grid is masked. Inactive cells get an empty vector.
std::vector<std::vector<double>> context_vectors(const Image& img, const CellGrid& grid,
                                                 const FeatureConfig& cfg);

/// 1 + upsilon * exp(-tau * ||cx - cy||_2).
double scaling(std::span<const double> cx, std::span<const double> cy, const FeatureConfig& cfg);

}  // namespace confill
