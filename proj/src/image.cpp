#include "illumnet/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "illumnet/error.hpp"

namespace illumnet {

double norm(const Rgb& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

Illuminant Illuminant::from_rgb(const Rgb& rgb) {
  for (double c : rgb) {
    if (!std::isfinite(c) || c < 0.0)
      throw NumericError("illuminant components must be finite and nonnegative");
  }
  const double n = norm(rgb);
  if (!(n > 0.0)) throw NumericError("illuminant must have at least one positive component");
  return Illuminant({rgb[0] / n, rgb[1] / n, rgb[2] / n});
}

Illuminant Illuminant::neutral() { return from_rgb({1.0, 1.0, 1.0}); }

// ---------------------------------------------------------------------------
// LinearImage

LinearImage::LinearImage(int width, int height, float fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw UsageError("image dimensions must be nonnegative");
  data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, fill);
}

Rgb LinearImage::pixel(int x, int y) const {
  const std::size_t i = index(x, y);
  return {data_[i], data_[i + 1], data_[i + 2]};
}

void LinearImage::set_pixel(int x, int y, const Rgb& value) {
  const std::size_t i = index(x, y);
  for (int c = 0; c < 3; ++c) data_[i + c] = static_cast<float>(value[c]);
}

void LinearImage::set_mask(std::vector<std::uint8_t> mask) {
  if (mask.size() != pixel_count())
    throw DataError("mask size " + std::to_string(mask.size()) + " does not match image size " +
                    std::to_string(pixel_count()));
  mask_ = std::move(mask);
}

std::size_t LinearImage::unmasked_count() const {
  if (!mask_) return pixel_count();
  return static_cast<std::size_t>(std::count(mask_->begin(), mask_->end(), std::uint8_t{0}));
}

bool LinearImage::is_valid() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f; });
}

// ---------------------------------------------------------------------------
// EstimateMap

EstimateMap::EstimateMap(int grid_width, int grid_height, int patch_size)
    : grid_width_(grid_width), grid_height_(grid_height), patch_size_(patch_size) {
  if (grid_width < 0 || grid_height < 0 || patch_size <= 0)
    throw UsageError("invalid estimate map geometry");
  estimates_.assign(cell_count(), Rgb{0.0, 0.0, 0.0});
  valid_.assign(cell_count(), 0);
}

void EstimateMap::set(int gx, int gy, const Illuminant& estimate) {
  estimates_[cell(gx, gy)] = estimate.rgb();
  valid_[cell(gx, gy)] = 1;
}

void EstimateMap::invalidate(int gx, int gy) {
  estimates_[cell(gx, gy)] = Rgb{0.0, 0.0, 0.0};
  valid_[cell(gx, gy)] = 0;
}

std::size_t EstimateMap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid_.begin(), valid_.end(), std::uint8_t{1}));
}

std::vector<Rgb> EstimateMap::valid_estimates() const {
  std::vector<Rgb> out;
  out.reserve(valid_count());
  for (std::size_t i = 0; i < estimates_.size(); ++i)
    if (valid_[i]) out.push_back(estimates_[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Patches

Patch extract_patch(const LinearImage& img, int x, int y, int size) {
  if (size <= 0 || x < 0 || y < 0 || x + size > img.width() || y + size > img.height())
    throw UsageError("patch outside image bounds");
  Patch p;
  p.x = x;
  p.y = y;
  p.size = size;
  p.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  std::size_t k = 0;
  for (int py = 0; py < size; ++py) {
    for (int px = 0; px < size; ++px) {
      for (int c = 0; c < 3; ++c) p.pixels[k++] = img.at(x + px, y + py, c);
      if (img.masked(x + px, y + py)) p.valid = false;
    }
  }
  return p;
}

std::vector<Patch> extract_patches(const LinearImage& img, int patch_size, int stride) {
  if (patch_size <= 0) throw UsageError("patch size must be positive");
  if (stride < 1) throw UsageError("stride must be at least 1");
  if (patch_size > std::min(img.width(), img.height()))
    throw UsageError("patch size " + std::to_string(patch_size) + " exceeds image dimensions " +
                     std::to_string(img.width()) + "x" + std::to_string(img.height()));
  std::vector<Patch> patches;
  for (int y = 0; y + patch_size <= img.height(); y += stride)
    for (int x = 0; x + patch_size <= img.width(); x += stride)
      patches.push_back(extract_patch(img, x, y, patch_size));
  return patches;
}

// ---------------------------------------------------------------------------
// von Kries

namespace {

Rgb exposure_adjusted(const Rgb& illum, Exposure exposure) {
  for (double c : illum)
    if (!(c >= kDivisionEpsilon))
      throw NumericError("illuminant channel below division epsilon");
  if (exposure == Exposure::PreserveGreen) return {illum[0] / illum[1], 1.0, illum[2] / illum[1]};
  return illum;
}

}  // namespace

LinearImage von_kries_correct(const LinearImage& img, const Rgb& illuminant, Exposure exposure) {
  const Rgb divisor = exposure_adjusted(illuminant, exposure);
  LinearImage out = img;
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<float>(static_cast<double>(data[i]) / divisor[i % 3]);
  return out;
}

LinearImage von_kries_correct(const LinearImage& img, const LinearImage& field,
                              Exposure exposure) {
  if (field.width() != img.width() || field.height() != img.height())
    throw DataError("illuminant field size does not match image size");
  LinearImage out = img;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const Rgb divisor = exposure_adjusted(field.pixel(x, y), exposure);
      for (int c = 0; c < 3; ++c)
        out.at(x, y, c) = static_cast<float>(static_cast<double>(img.at(x, y, c)) / divisor[c]);
    }
  }
  return out;
}

LinearImage von_kries_correct(const LinearImage& img, const EstimateMap& map, Exposure exposure) {
  return von_kries_correct(img, upsample_estimate_map(map, img.width(), img.height()), exposure);
}

LinearImage constant_field(int width, int height, const Rgb& rgb) {
  LinearImage field(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) field.set_pixel(x, y, rgb);
  return field;
}

LinearImage upsample_estimate_map(const EstimateMap& map, int width, int height) {
  const int gw = map.grid_width();
  const int gh = map.grid_height();
  if (map.valid_count() == 0) throw DataError("estimate map has no valid cells");

  // Fill invalid cells from the nearest valid cell (row-major tie-break).
  std::vector<Rgb> filled(map.cell_count());
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      if (map.valid(gx, gy)) {
        filled[static_cast<std::size_t>(gy) * gw + gx] = map.estimate(gx, gy);
        continue;
      }
      long best = std::numeric_limits<long>::max();
      Rgb value{};
      for (int vy = 0; vy < gh; ++vy) {
        for (int vx = 0; vx < gw; ++vx) {
          if (!map.valid(vx, vy)) continue;
          const long d = static_cast<long>(vx - gx) * (vx - gx) + static_cast<long>(vy - gy) * (vy - gy);
          if (d < best) {
            best = d;
            value = map.estimate(vx, vy);
          }
        }
      }
      filled[static_cast<std::size_t>(gy) * gw + gx] = value;
    }
  }

  const double ps = map.patch_size();
  LinearImage field(width, height);
  for (int y = 0; y < height; ++y) {
    const double v = std::clamp((y + 0.5) / ps - 0.5, 0.0, static_cast<double>(gh - 1));
    const int y0 = static_cast<int>(std::floor(v));
    const int y1 = std::min(y0 + 1, gh - 1);
    const double fy = v - y0;
    for (int x = 0; x < width; ++x) {
      const double u = std::clamp((x + 0.5) / ps - 0.5, 0.0, static_cast<double>(gw - 1));
      const int x0 = static_cast<int>(std::floor(u));
      const int x1 = std::min(x0 + 1, gw - 1);
      const double fx = u - x0;
      const Rgb& a = filled[static_cast<std::size_t>(y0) * gw + x0];
      const Rgb& b = filled[static_cast<std::size_t>(y0) * gw + x1];
      const Rgb& c = filled[static_cast<std::size_t>(y1) * gw + x0];
      const Rgb& d = filled[static_cast<std::size_t>(y1) * gw + x1];
      Rgb mix{};
      for (int ch = 0; ch < 3; ++ch)
        mix[ch] = (1 - fy) * ((1 - fx) * a[ch] + fx * b[ch]) + fy * ((1 - fx) * c[ch] + fx * d[ch]);
      const double n = norm(mix);
      for (int ch = 0; ch < 3; ++ch) mix[ch] /= n;
      field.set_pixel(x, y, mix);
    }
  }
  return field;
}

// ---------------------------------------------------------------------------
// Resampling and smoothing

LinearImage resize_max_side(const LinearImage& img, int target) {
  if (target <= 0) throw UsageError("resize target must be positive");
  const int longest = std::max(img.width(), img.height());
  if (longest <= target) return img;

  const double scale = static_cast<double>(target) / longest;
  const int nw = std::max(1, static_cast<int>(std::lround(img.width() * scale)));
  const int nh = std::max(1, static_cast<int>(std::lround(img.height() * scale)));
  const double sx = static_cast<double>(img.width()) / nw;
  const double sy = static_cast<double>(img.height()) / nh;

  LinearImage out(nw, nh);
  for (int y = 0; y < nh; ++y) {
    const double v = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(std::floor(v));
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double fy = v - y0;
    for (int x = 0; x < nw; ++x) {
      const double u = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(std::floor(u));
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double fx = u - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
        const double bottom = (1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
        out.at(x, y, c) = static_cast<float>((1 - fy) * top + fy * bottom);
      }
    }
  }

  if (img.has_mask()) {
    std::vector<std::uint8_t> mask(out.pixel_count());
    for (int y = 0; y < nh; ++y) {
      const int src_y = std::min(img.height() - 1, static_cast<int>((y + 0.5) * sy));
      for (int x = 0; x < nw; ++x) {
        const int src_x = std::min(img.width() - 1, static_cast<int>((x + 0.5) * sx));
        mask[static_cast<std::size_t>(y) * nw + x] = img.masked(src_x, src_y) ? 1 : 0;
      }
    }
    out.set_mask(std::move(mask));
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * k * k / (sigma * sigma));
    taps[static_cast<std::size_t>(k + radius)] = w;
    sum += w;
  }
  for (double& w : taps) w /= sum;
  return taps;
}

LinearImage gaussian_blur(const LinearImage& img, double sigma) {
  if (sigma < 0.0) throw UsageError("sigma must be nonnegative");
  if (sigma == 0.0 || img.empty()) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const auto taps = gaussian_kernel(sigma, radius);
  const int w = img.width();
  const int h = img.height();

  std::vector<double> tmp(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int k = -radius; k <= radius; ++k) {
        const int sx = std::clamp(x + k, 0, w - 1);
        const double t = taps[static_cast<std::size_t>(k + radius)];
        for (int c = 0; c < 3; ++c) acc[c] += t * img.at(sx, y, c);
      }
      for (int c = 0; c < 3; ++c) tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc[c];
    }
  }
  LinearImage out = img;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int k = -radius; k <= radius; ++k) {
        const int sy = std::clamp(y + k, 0, h - 1);
        const double t = taps[static_cast<std::size_t>(k + radius)];
        for (int c = 0; c < 3; ++c) acc[c] += t * tmp[(static_cast<std::size_t>(sy) * w + x) * 3 + c];
      }
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = static_cast<float>(acc[c]);
    }
  }
  return out;
}

}  // namespace illumnet
