#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace confill {

/// Dense row-major single-channel grid. File-boundary images hold
/// intensities in [0,1]; latents and noise fields reuse the same type with
/// unrestricted real values.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0);
  Image(int width, int height, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int x, int y) { return data_[index(x, y)]; }
  double at(int x, int y) const { return data_[index(x, y)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> pixels() noexcept { return data_; }
  std::span<const double> pixels() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }
  /// True when every value lies in [0,1].
  bool in_unit_range() const noexcept;
  bool all_finite() const noexcept;

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Known/unknown partition; `true` marks a known (preserved) pixel.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, bool known = true);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return known_.size(); }

  bool known(std::size_t i) const { return known_[i] != 0; }
  bool known(int x, int y) const { return known_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(std::size_t i, bool k) { known_[i] = k ? 1 : 0; }
  void set(int x, int y, bool k) { known_[static_cast<std::size_t>(y) * width_ + x] = k ? 1 : 0; }

  std::size_t known_count() const noexcept;
  std::size_t unknown_count() const noexcept { return size() - known_count(); }
  double unknown_fraction() const noexcept;

  bool matches(const Image& img) const noexcept {
    return width_ == img.width() && height_ == img.height();
  }
  bool operator==(const Mask&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> known_;
};

enum class PatternKind { Gradient, Stripes, Checker, Blobs, Rings };
enum class MaskKind { Narrow, Wide1, Wide2, HalfVertical, HalfHorizontal, Expand };

PatternKind parse_pattern_kind(std::string_view name);
std::string_view to_string(PatternKind kind);
MaskKind parse_mask_kind(std::string_view name);
std::string_view to_string(MaskKind kind);
std::vector<PatternKind> all_pattern_kinds();

struct ToyDatasetSpec {
  int count = 1;
  int size = 32;
  std::uint64_t seed = 0;
  std::vector<PatternKind> kinds = all_pattern_kinds();

  void validate() const;
};

/// Deterministic procedural pattern; `size` must be at least 8.
Image gen_toy_image(PatternKind kind, std::uint64_t seed, int size);

/// Image i of a dataset cycles through the configured kinds and draws its
/// pattern seed from the dataset seed stream.
Image gen_dataset_image(const ToyDatasetSpec& spec, int index);
std::vector<Image> gen_dataset(const ToyDatasetSpec& spec);

Mask make_mask(MaskKind kind, std::uint64_t seed, int size);

/// Number of 4-connected components of unknown pixels.
int unknown_components(const Mask& mask);

// PGM: reads P2 and P5 with maxval 255, writes P5.
Image read_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_pgm(const Image& img);
/// Mask files use 255 for known and 0 for unknown; any byte >= 128 reads as known.
Mask read_mask_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_mask_pgm(const Mask& mask);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

Image load_pgm(const std::string& path);
void save_pgm(const Image& img, const std::string& path);

/// r0 at known pixels, `generated` elsewhere.
Image composite(const Image& r0, const Image& generated, const Mask& mask);

/// s(.) : unknown pixels replaced by zero.
Image select_known(const Image& img, const Mask& mask);

}  // namespace confill
