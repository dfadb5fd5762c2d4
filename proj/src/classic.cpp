#include "illumnet/classic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "illumnet/error.hpp"

namespace illumnet {

namespace {

constexpr std::array<NamedEstimator, 6> kNamed{{
    {"GW", {0, 1.0, 0.0}},
    {"WP", {0, MinkowskiConfig::kInfinity, 0.0}},
    {"SoG", {0, 4.0, 0.0}},
    {"gGW", {0, 9.0, 9.0}},
    {"GE1", {1, 1.0, 6.0}},
    {"GE2", {2, 1.0, 1.0}},
}};

using Plane = std::vector<double>;

Plane channel_plane(const LinearImage& img, int c) {
  Plane plane(img.pixel_count());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      plane[static_cast<std::size_t>(y) * img.width() + x] = img.at(x, y, c);
  return plane;
}

Plane smooth(const Plane& in, int w, int h, double sigma) {
  if (sigma == 0.0) return in;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const auto taps = gaussian_kernel(sigma, radius);
  Plane tmp(in.size());
  Plane out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += taps[static_cast<std::size_t>(k + radius)] *
               in[static_cast<std::size_t>(y) * w + std::clamp(x + k, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k)
        acc += taps[static_cast<std::size_t>(k + radius)] *
               tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

Plane derivative_magnitude(const Plane& f, int w, int h, int order) {
  if (order == 0) {
    Plane out(f.size());
    std::transform(f.begin(), f.end(), out.begin(), [](double v) { return std::abs(v); });
    return out;
  }
  auto at = [&](int x, int y) {
    return f[static_cast<std::size_t>(std::clamp(y, 0, h - 1)) * w + std::clamp(x, 0, w - 1)];
  };
  Plane out(f.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double m;
      if (order == 1) {
        const double dx = 0.5 * (at(x + 1, y) - at(x - 1, y));
        const double dy = 0.5 * (at(x, y + 1) - at(x, y - 1));
        m = std::sqrt(dx * dx + dy * dy);
      } else {
        const double dxx = at(x + 1, y) - 2.0 * at(x, y) + at(x - 1, y);
        const double dyy = at(x, y + 1) - 2.0 * at(x, y) + at(x, y - 1);
        const double dxy =
            0.25 * (at(x + 1, y + 1) - at(x + 1, y - 1) - at(x - 1, y + 1) + at(x - 1, y - 1));
        m = std::sqrt(dxx * dxx + 2.0 * dxy * dxy + dyy * dyy);
      }
      out[static_cast<std::size_t>(y) * w + x] = m;
    }
  }
  return out;
}

double minkowski_mean(const Plane& values, const LinearImage& img, double p) {
  double peak = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (img.masked(x, y)) continue;
      peak = std::max(peak, values[static_cast<std::size_t>(y) * img.width() + x]);
      ++count;
    }
  }
  if (std::isinf(p) || peak == 0.0) return peak;
  // Scaled by the peak so large p cannot overflow.
  double sum = 0.0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      if (img.masked(x, y)) continue;
      const double v = values[static_cast<std::size_t>(y) * img.width() + x] / peak;
      sum += p == 1.0 ? v : std::pow(v, p);
    }
  }
  const double mean = sum / static_cast<double>(count);
  return peak * (p == 1.0 ? mean : std::pow(mean, 1.0 / p));
}

}  // namespace

void MinkowskiConfig::validate() const {
  if (order < 0 || order > 2) throw UsageError("derivative order must be 0, 1 or 2");
  if (!(p >= 1.0)) throw UsageError("Minkowski norm must be >= 1");
  if (!(sigma >= 0.0) || std::isinf(sigma)) throw UsageError("sigma must be finite and >= 0");
}

std::span<const NamedEstimator> named_estimators() { return kNamed; }

std::optional<MinkowskiConfig> find_estimator(std::string_view name) {
  for (const auto& e : kNamed)
    if (e.name == name) return e.config;
  return std::nullopt;
}

Illuminant estimate_minkowski(const LinearImage& img, const MinkowskiConfig& cfg) {
  cfg.validate();
  if (img.empty()) throw DataError("empty image");
  if (img.unmasked_count() == 0) throw DataError("image is fully masked");

  Rgb stat{};
  for (int c = 0; c < 3; ++c) {
    const Plane smoothed = smooth(channel_plane(img, c), img.width(), img.height(), cfg.sigma);
    const Plane magnitude = derivative_magnitude(smoothed, img.width(), img.height(), cfg.order);
    stat[c] = minkowski_mean(magnitude, img, cfg.p);
  }
  if (!(norm(stat) > 0.0))
    throw NumericError("degenerate estimate: statistic is zero in every channel");
  return Illuminant::from_rgb(stat);
}

Illuminant run_named(const LinearImage& img, std::string_view name) {
  const auto cfg = find_estimator(name);
  if (!cfg) throw UsageError("unknown estimator: " + std::string(name));
  return estimate_minkowski(img, *cfg);
}

}  // namespace illumnet
