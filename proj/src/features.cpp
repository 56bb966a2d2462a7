#include "confill/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <numeric>
#include <string>

#include "confill/error.hpp"
#include "confill/rng.hpp"

namespace confill {

void FeatureConfig::validate() const {
  if (cell_size < 2) throw ConfigError("cell_size must be >= 2");
  if (gabor_orientations < 1) throw ConfigError("gabor_orientations must be >= 1");
  if (!(gabor_wavelength > 0.0)) throw ConfigError("gabor_wavelength must be > 0");
  if (!(edge_threshold >= 0.0)) throw ConfigError("edge_threshold must be >= 0");
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0))
    throw ConfigError("alpha, beta must be >= 0 with alpha + beta > 0");
  if (!(upsilon >= 0.0)) throw ConfigError("upsilon must be >= 0");
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(psi > 0.0)) throw ConfigError("psi must be > 0");
  const int m = effective_max_samples();
  if (m < 1 || m > cell_size * cell_size)
    throw ConfigError("max_samples must lie in [1, cell_size^2]");
}

namespace {

// Replicate-padded read.
inline double clamped(const Image& img, int x, int y) {
  x = std::clamp(x, 0, img.width() - 1);
  y = std::clamp(y, 0, img.height() - 1);
  return img.at(x, y);
}

Image correlate(const Image& img, std::span<const double> kernel, int radius) {
  const int k = 2 * radius + 1;
  const int w = img.width(), h = img.height();
  const int pw = w + 2 * radius;
  std::vector<double> padded(static_cast<std::size_t>(pw) * (h + 2 * radius));
  for (int y = -radius; y < h + radius; ++y)
    for (int x = -radius; x < w + radius; ++x)
      padded[static_cast<std::size_t>(y + radius) * pw + (x + radius)] = clamped(img, x, y);
  Image out(w, h);
  for (int dy = 0; dy < k; ++dy)
    for (int dx = 0; dx < k; ++dx) {
      const double kv = kernel[static_cast<std::size_t>(dy * k + dx)];
      for (int y = 0; y < h; ++y) {
        const double* row = padded.data() + static_cast<std::size_t>(y + dy) * pw + dx;
        double* orow = &out.at(0, y);
        for (int x = 0; x < w; ++x) orow[x] += kv * row[x];
      }
    }
  return out;
}

}  // namespace

Image sobel_magnitude(const Image& img) {
  CONFILL_REQUIRE(img.width() >= 3 && img.height() >= 3, "sobel_magnitude: image smaller than 3x3");
  Image out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double gx = (clamped(img, x + 1, y - 1) + 2.0 * clamped(img, x + 1, y) + clamped(img, x + 1, y + 1) -
                         clamped(img, x - 1, y - 1) - 2.0 * clamped(img, x - 1, y) - clamped(img, x - 1, y + 1)) /
                        8.0;
      const double gy = (clamped(img, x - 1, y + 1) + 2.0 * clamped(img, x, y + 1) + clamped(img, x + 1, y + 1) -
                         clamped(img, x - 1, y - 1) - 2.0 * clamped(img, x, y - 1) - clamped(img, x + 1, y - 1)) /
                        8.0;
      out.at(x, y) = std::sqrt(gx * gx + gy * gy);
    }
  return out;
}

std::vector<double> gabor_kernel(double theta, const FeatureConfig& cfg) {
  constexpr int k = 2 * kGaborRadius + 1;
  const double sigma = 0.56 * cfg.gabor_wavelength;
  std::vector<double> kernel(k * k);
  for (int dy = -kGaborRadius; dy <= kGaborRadius; ++dy)
    for (int dx = -kGaborRadius; dx <= kGaborRadius; ++dx) {
      const double u = dx * std::sin(theta) + dy * std::cos(theta);
      kernel[static_cast<std::size_t>((dy + kGaborRadius) * k + dx + kGaborRadius)] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) *
          std::cos(2.0 * std::numbers::pi * u / cfg.gabor_wavelength);
    }
  // Remove the DC component so flat regions give no response.
  const double mean = std::accumulate(kernel.begin(), kernel.end(), 0.0) / kernel.size();
  for (double& v : kernel) v -= mean;
  return kernel;
}

std::vector<Image> gabor_bank(const Image& img, const FeatureConfig& cfg) {
  constexpr int k = 2 * kGaborRadius + 1;
  CONFILL_REQUIRE(img.width() >= k && img.height() >= k, "gabor_bank: image smaller than kernel support");
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(cfg.gabor_orientations));
  for (int o = 0; o < cfg.gabor_orientations; ++o) {
    const double theta = std::numbers::pi * o / cfg.gabor_orientations;
    out.push_back(correlate(img, gabor_kernel(theta, cfg), kGaborRadius));
  }
  return out;
}

FeatureMaps compute_feature_maps(const Image& img, const FeatureConfig& cfg) {
  return {sobel_magnitude(img), gabor_bank(img, cfg)};
}

// ---------------------------------------------------------------------------
// CFEAT v1

ExternalFeatures read_cfeat(std::span<const std::uint8_t> bytes) {
  const std::string magic = "CFEAT v1\n";
  if (bytes.size() < magic.size() || std::memcmp(bytes.data(), magic.data(), magic.size()) != 0)
    throw ParseError("bad feature file magic", 0);
  std::size_t pos = magic.size();
  const auto line_end = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), '\n');
  if (line_end == bytes.end()) throw ParseError("truncated feature header", pos);
  const std::string dims(bytes.begin() + static_cast<std::ptrdiff_t>(pos), line_end);
  ExternalFeatures f;
  if (std::sscanf(dims.c_str(), "%d %d %d", &f.width, &f.height, &f.depth) != 3 || f.width <= 0 ||
      f.height <= 0 || f.depth <= 0)
    throw ParseError("malformed feature dimensions line", pos);
  pos = static_cast<std::size_t>(line_end - bytes.begin()) + 1;
  const std::size_t n = static_cast<std::size_t>(f.width) * f.height * f.depth;
  if (bytes.size() - pos < n * 4)
    throw ParseError("truncated feature payload: expected " + std::to_string(n * 4) + " bytes, found " +
                         std::to_string(bytes.size() - pos),
                     pos);
  f.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[pos + i * 4 + b]) << (8 * b);
    std::memcpy(&f.data[i], &u, 4);
  }
  return f;
}

std::vector<std::uint8_t> write_cfeat(const ExternalFeatures& f) {
  const std::string header =
      "CFEAT v1\n" + std::to_string(f.width) + " " + std::to_string(f.height) + " " + std::to_string(f.depth) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (float v : f.data) {
    std::uint32_t u = 0;
    std::memcpy(&u, &v, 4);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cells

std::vector<CellRect> partition_cells(int width, int height, int cell_size) {
  CONFILL_REQUIRE(cell_size >= 2, "cell_size must be >= 2");
  auto spans = [cell_size](int extent) {
    std::vector<std::pair<int, int>> out;
    for (int s = 0; s < extent; s += cell_size) out.emplace_back(s, std::min(cell_size, extent - s));
    if (out.size() > 1 && out.back().second < 2) {
      out[out.size() - 2].second += out.back().second;
      out.pop_back();
    }
    return out;
  };
  std::vector<CellRect> cells;
  for (auto [y0, h] : spans(height))
    for (auto [x0, w] : spans(width)) cells.push_back({x0, y0, w, h});
  return cells;
}

double pool_variance(const Image& img, std::span<const std::size_t> pool) {
  if (pool.empty()) return 0.0;
  double mean = 0.0;
  for (auto p : pool) mean += img[p];
  mean /= static_cast<double>(pool.size());
  double var = 0.0;
  for (auto p : pool) var += (img[p] - mean) * (img[p] - mean);
  return var / static_cast<double>(pool.size());
}

double pool_edge_density(const Image& sobel, std::span<const std::size_t> pool, double threshold) {
  if (pool.empty()) return 0.0;
  const auto edges = std::count_if(pool.begin(), pool.end(), [&](std::size_t p) { return sobel[p] > threshold; });
  return static_cast<double>(edges) / static_cast<double>(pool.size());
}

double adaptability(double variance, double edge_density, std::size_t n, const FeatureConfig& cfg) {
  CONFILL_REQUIRE(n >= 2, "adaptability requires at least two pixels per cell");
  const double corrected = variance * static_cast<double>(n) / static_cast<double>(n - 1);
  double texture = std::exp(-cfg.psi * corrected);
  if (cfg.invert_texture_term) texture = 1.0 - texture;
  return cfg.alpha * texture + cfg.beta * edge_density;
}

int sample_count(double weight, std::size_t pool_size, const FeatureConfig& cfg) {
  const double m = cfg.effective_max_samples();
  const double raw = std::ceil(m * weight);
  const double capped = std::min(raw, static_cast<double>(pool_size));
  return std::max(1, static_cast<int>(capped));
}

std::vector<std::size_t> sample_pool(std::span<const std::size_t> pool, int count, std::uint64_t seed,
                                     std::size_t cell_index) {
  CONFILL_REQUIRE(count >= 0 && static_cast<std::size_t>(count) <= pool.size(), "sample_pool: count exceeds pool");
  std::vector<std::size_t> items(pool.begin(), pool.end());
  Rng rng(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(cell_index)), static_cast<std::uint64_t>(count)));
  for (int k = 0; k < count; ++k) {
    const auto j = static_cast<std::size_t>(rng.integer(k, static_cast<std::int64_t>(items.size()) - 1));
    std::swap(items[static_cast<std::size_t>(k)], items[j]);
  }
  items.resize(static_cast<std::size_t>(count));
  std::sort(items.begin(), items.end());
  return items;
}

std::vector<double> context_vector(const Image& img, const FeatureMaps& maps, std::span<const std::size_t> pool,
                                   const FeatureConfig& cfg, const ExternalFeatures* external) {
  std::vector<double> c(static_cast<std::size_t>(cfg.context_dim()) + (external ? external->depth : 0), 0.0);
  if (pool.empty()) return c;
  const double n = static_cast<double>(pool.size());
  double mean = 0.0, sob = 0.0;
  for (auto p : pool) {
    mean += img[p];
    sob += maps.sobel[p];
  }
  c[0] = mean / n;
  c[1] = pool_variance(img, pool);
  c[2] = sob / n;
  for (int o = 0; o < cfg.gabor_orientations; ++o) {
    double acc = 0.0;
    for (auto p : pool) acc += std::abs(maps.gabor[static_cast<std::size_t>(o)][p]);
    c[static_cast<std::size_t>(3 + o)] = acc / n;
  }
  if (external) {
    for (int d = 0; d < external->depth; ++d) {
      double acc = 0.0;
      for (auto p : pool) acc += external->at(p, d);
      c[static_cast<std::size_t>(cfg.context_dim() + d)] = acc / n;
    }
  }
  return c;
}

CellGrid build_cell_grid(const Image& reference, const FeatureConfig& cfg, std::uint64_t seed, const Mask* mask,
                         const ExternalFeatures* external) {
  cfg.validate();
  if (mask) CONFILL_REQUIRE(mask->matches(reference), "build_cell_grid: mask shape mismatch");
  if (external)
    CONFILL_REQUIRE(external->width == reference.width() && external->height == reference.height(),
                    "build_cell_grid: feature file shape mismatch");
  CellGrid grid;
  grid.width_ = reference.width();
  grid.height_ = reference.height();
  grid.seed_ = seed;
  if (mask) grid.mask_ = *mask;
  if (external) grid.external_ = *external;

  const Image base = mask ? select_known(reference, *mask) : reference;
  const FeatureMaps maps = compute_feature_maps(base, cfg);
  const auto rects = partition_cells(reference.width(), reference.height(), cfg.cell_size);
  grid.cells_.reserve(rects.size());
  for (std::size_t i = 0; i < rects.size(); ++i) {
    Cell cell;
    cell.rect = rects[i];
    for (int y = cell.rect.y0; y < cell.rect.y0 + cell.rect.h; ++y)
      for (int x = cell.rect.x0; x < cell.rect.x0 + cell.rect.w; ++x) {
        const auto p = static_cast<std::size_t>(y) * reference.width() + x;
        if (!mask || mask->known(p)) cell.pool.push_back(p);
      }
    if (cell.pool.size() >= 2) {
      cell.variance = pool_variance(base, cell.pool);
      cell.edge_density = pool_edge_density(maps.sobel, cell.pool, cfg.edge_threshold);
      cell.weight = adaptability(cell.variance, cell.edge_density, cell.pool.size(), cfg);
      cell.samples = sample_count(cell.weight, cell.pool.size(), cfg);
      cell.sampled = sample_pool(cell.pool, cell.samples, seed, i);
      cell.context = context_vector(base, maps, cell.pool, cfg, external);
    }
    grid.cells_.push_back(std::move(cell));
  }
  return grid;
}

std::vector<double> local_variance(const Image& img, const CellGrid& grid) {
  std::vector<double> out;
  for (const auto& c : grid.cells()) out.push_back(pool_variance(img, c.pool));
  return out;
}

std::vector<double> edge_density(const Image& img, const CellGrid& grid, double threshold) {
  const Image sob = sobel_magnitude(img);
  std::vector<double> out;
  for (const auto& c : grid.cells()) out.push_back(pool_edge_density(sob, c.pool, threshold));
  return out;
}

std::vector<std::vector<double>> context_vectors(const Image& img, const CellGrid& grid, const FeatureConfig& cfg) {
  CONFILL_REQUIRE(img.width() == grid.width() && img.height() == grid.height(), "context_vectors: shape mismatch");
  const Image base = grid.mask() ? select_known(img, *grid.mask()) : img;
  const FeatureMaps maps = compute_feature_maps(base, cfg);
  const ExternalFeatures* ext = grid.external() ? &*grid.external() : nullptr;
  std::vector<std::vector<double>> out;
  out.reserve(grid.cells().size());
  for (const auto& c : grid.cells())
    out.push_back(c.active() ? context_vector(base, maps, c.pool, cfg, ext) : std::vector<double>{});
  return out;
}

double scaling(std::span<const double> cx, std::span<const double> cy, const FeatureConfig& cfg) {
  CONFILL_REQUIRE(cx.size() == cy.size(), "scaling: context dimension mismatch");
  double d2 = 0.0;
  for (std::size_t k = 0; k < cx.size(); ++k) d2 += (cx[k] - cy[k]) * (cx[k] - cy[k]);
  return 1.0 + cfg.upsilon * std::exp(-cfg.tau * std::sqrt(d2));
}

}  // namespace confill
