#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "confill/denoiser.hpp"
#include "confill/features.hpp"
#include "confill/imaging.hpp"
#include "confill/sampler.hpp"

namespace confill {

enum class MethodId { ConFillCad, ConFillWd, ConFillL2, Blend };

MethodId parse_method(std::string_view name);
std::string_view to_string(MethodId method);

/// Reverse pass that overwrites the known region with a noised copy of r0
/// after every step; composited at the end.
Image blend_baseline(const Image& r0, const Mask& mask, const Model& model, std::uint64_t seed);

inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Map of local SSIM for every fully contained 7x7 window, indexed by the
/// window's top-left corner.
Image ssim_map(const Image& a, const Image& b);
/// Mean local SSIM.
double ssim(const Image& a, const Image& b);
/// Mean local SSIM over windows that contain at least one unknown pixel.
double ssim_masked(const Image& a, const Image& b, const Mask& mask);

/// Mean squared error over unknown pixels.
double masked_mse(const Image& a, const Image& b, const Mask& mask);
/// 10 log10(1 / mse); +infinity when mse is zero.
double psnr_from_mse(double mse);
double psnr(const Image& a, const Image& b, const Mask& mask);

struct BenchRow {
  int image_id = 0;
  MaskKind mask_kind = MaskKind::HalfVertical;
  MethodId method = MethodId::Blend;
  std::uint64_t seed = 0;
  double masked_mse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double wall_ms = 0.0;
  int steps_processed = 0;
  int jumps_taken = 0;
  bool known_region_exact = true;  ///< output equals r0 on every known pixel
};

struct BenchAggregate {
  MaskKind mask_kind = MaskKind::HalfVertical;
  MethodId method = MethodId::Blend;
  int count = 0;
  double mean_mse = 0.0;
  double median_mse = 0.0;
  double mean_psnr = 0.0;  ///< over finite values
  double median_psnr = 0.0;
  double mean_ssim = 0.0;
  double median_ssim = 0.0;
};

struct BenchOptions {
  std::vector<MaskKind> masks;
  std::vector<MethodId> methods;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool record_timing = false;  ///< otherwise wall_ms is written as 0
  /// Tables per constraint kind; missing ones are calibrated once up front.
  std::map<ConstraintKind, GammaTable> gamma;
};

struct BenchReport {
  std::vector<BenchRow> rows;  ///< image-major, then mask kind, then method
  std::vector<BenchAggregate> aggregates;
};

using BenchProgress = std::function<void(std::size_t done, std::size_t total)>;

/// Cartesian sweep over images x mask kinds x methods. Results do not
/// depend on `jobs`.
BenchReport run_benchmark(std::span<const Image> images, const Model& model, const FeatureConfig& features,
                          const ConFillConfig& sampler, const BenchOptions& opts,
                          const BenchProgress& progress = {});

/// Seed of one sweep cell.
std::uint64_t bench_cell_seed(std::uint64_t global, int image_id, MaskKind mask, MethodId method);
/// Seed of the mask shared by every method for one (image, mask kind).
std::uint64_t bench_mask_seed(std::uint64_t global, int image_id, MaskKind mask);

void write_bench_csv(std::ostream& out, const BenchReport& report);
void write_bench_summary_csv(std::ostream& out, const BenchReport& report);

/// Quotes a CSV field when it contains a comma, quote or line break.
std::string csv_field(std::string_view s);

}  // namespace confill
