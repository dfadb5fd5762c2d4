#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace illumnet {

using Rgb = std::array<double, 3>;

/// Light color: nonnegative, finite RGB with unit 2-norm.
class Illuminant {
 public:
  /// Normalizes `rgb` to unit length. Throws NumericError when a component is
  /// negative or non-finite, or when all components are zero.
  static Illuminant from_rgb(const Rgb& rgb);

  /// Achromatic light, (1,1,1)/sqrt(3).
  static Illuminant neutral();

  const Rgb& rgb() const { return rgb_; }
  double operator[](std::size_t c) const { return rgb_[c]; }

  bool operator==(const Illuminant&) const = default;

 private:
  explicit Illuminant(const Rgb& rgb) : rgb_(rgb) {}
  Rgb rgb_;
};

/// Floating-point linear-RGB raster, interleaved, row-major. The optional mask
/// marks pixels excluded from estimation (e.g. a color-checker region).
class LinearImage {
 public:
  LinearImage() = default;
  explicit LinearImage(int width, int height, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const { return width_ == 0 || height_ == 0; }

  float& at(int x, int y, int c) { return data_[index(x, y) + static_cast<std::size_t>(c)]; }
  float at(int x, int y, int c) const {
    return data_[index(x, y) + static_cast<std::size_t>(c)];
  }
  Rgb pixel(int x, int y) const;
  void set_pixel(int x, int y, const Rgb& value);

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool has_mask() const { return mask_.has_value(); }
  /// Throws DataError when the mask size differs from the image size.
  void set_mask(std::vector<std::uint8_t> mask);
  void clear_mask() { mask_.reset(); }
  bool masked(int x, int y) const {
    return mask_ && (*mask_)[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  const std::optional<std::vector<std::uint8_t>>& mask() const { return mask_; }
  std::size_t unmasked_count() const;

  /// Nonnegative and finite everywhere.
  bool is_valid() const;

  bool operator==(const LinearImage&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
  std::optional<std::vector<std::uint8_t>> mask_;
};

struct Patch {
  int x = 0;
  int y = 0;
  int size = 0;
  /// size*size*3 values, interleaved RGB, row-major.
  std::vector<double> pixels;
  bool valid = true;

  double at(int px, int py, int c) const {
    return pixels[(static_cast<std::size_t>(py) * size + px) * 3 + c];
  }
};

/// Grid of per-patch illuminant estimates. Cell (gx, gy) covers pixels
/// [gx*patch_size, (gx+1)*patch_size) x [gy*patch_size, (gy+1)*patch_size).
class EstimateMap {
 public:
  EstimateMap() = default;
  explicit EstimateMap(int grid_width, int grid_height, int patch_size);

  int grid_width() const { return grid_width_; }
  int grid_height() const { return grid_height_; }
  int patch_size() const { return patch_size_; }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(grid_width_) * static_cast<std::size_t>(grid_height_);
  }

  bool valid(int gx, int gy) const { return valid_[cell(gx, gy)] != 0; }
  const Rgb& estimate(int gx, int gy) const { return estimates_[cell(gx, gy)]; }
  /// Stores the normalized estimate and marks the cell valid.
  void set(int gx, int gy, const Illuminant& estimate);
  void invalidate(int gx, int gy);

  std::size_t valid_count() const;
  std::vector<Rgb> valid_estimates() const;

 private:
  std::size_t cell(int gx, int gy) const {
    return static_cast<std::size_t>(gy) * static_cast<std::size_t>(grid_width_) +
           static_cast<std::size_t>(gx);
  }

  int grid_width_ = 0;
  int grid_height_ = 0;
  int patch_size_ = 0;
  std::vector<Rgb> estimates_;
  std::vector<std::uint8_t> valid_;
};

double norm(const Rgb& v);

/// Row-major tiling. Patches that do not fit entirely are discarded; patches
/// touching a masked pixel are returned with valid = false.
std::vector<Patch> extract_patches(const LinearImage& img, int patch_size, int stride);

/// Copies one square patch; `valid` reflects the mask.
Patch extract_patch(const LinearImage& img, int x, int y, int size);

enum class Exposure {
  /// Plain diag(1/I) division.
  Raw,
  /// Illuminant rescaled to unit green so the green channel is unchanged.
  PreserveGreen,
};

inline constexpr double kDivisionEpsilon = 1e-6;

/// Per-channel division by a global illuminant. Throws NumericError when a
/// channel is below kDivisionEpsilon.
LinearImage von_kries_correct(const LinearImage& img, const Rgb& illuminant,
                              Exposure exposure = Exposure::Raw);

/// Per-pixel division by an illuminant field of the same size.
LinearImage von_kries_correct(const LinearImage& img, const LinearImage& field,
                              Exposure exposure = Exposure::Raw);

/// Per-pixel division by an estimate map bilinearly upsampled to the image.
LinearImage von_kries_correct(const LinearImage& img, const EstimateMap& map,
                              Exposure exposure = Exposure::Raw);

/// Bilinear upsampling of the estimate grid to a width x height field with
/// unit-norm pixels. Invalid cells take the value of the nearest valid cell.
/// Throws DataError when no cell is valid.
LinearImage upsample_estimate_map(const EstimateMap& map, int width, int height);

/// Field with every pixel set to `rgb`.
LinearImage constant_field(int width, int height, const Rgb& rgb);

/// Bilinear downscale so that max(width, height) == target. Smaller images are
/// returned unchanged; the mask is resampled by nearest neighbour.
LinearImage resize_max_side(const LinearImage& img, int target);

/// Separable Gaussian blur truncated at 3 sigma with clamped borders.
/// sigma == 0 returns the input.
LinearImage gaussian_blur(const LinearImage& img, double sigma);

/// Discrete Gaussian taps for offsets -radius..radius, summing to one.
std::vector<double> gaussian_kernel(double sigma, int radius);

}  // namespace illumnet
