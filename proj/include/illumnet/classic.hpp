#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "illumnet/image.hpp"

namespace illumnet {

/// One instance of the (n, p, sigma) statistical estimator family.
struct MinkowskiConfig {
  static constexpr double kInfinity = std::numeric_limits<double>::infinity();

  int order = 0;        ///< derivative order n in {0, 1, 2}
  double p = 1.0;       ///< Minkowski norm, >= 1; kInfinity selects the maximum
  double sigma = 0.0;   ///< Gaussian pre-smoothing in pixels; 0 disables it

  void validate() const;
};

struct NamedEstimator {
  std::string_view name;
  MinkowskiConfig config;
};

/// GW, WP, SoG, gGW, GE1, GE2 with their standard parameter bindings.
std::span<const NamedEstimator> named_estimators();

/// Looks up a binding by name; nullopt if unknown.
std::optional<MinkowskiConfig> find_estimator(std::string_view name);

/// Minkowski-p mean of the n-th order gradient magnitude of the smoothed
/// image, per channel, over unmasked pixels; normalized to unit length.
///
/// Smoothing is a separable Gaussian truncated at 3 sigma with clamped
/// borders. Derivatives are central differences with clamped borders; the
/// first-order magnitude is sqrt(dx^2 + dy^2) and the second-order magnitude
/// is sqrt(dxx^2 + 2 dxy^2 + dyy^2).
///
/// Throws DataError for an empty or fully masked image and NumericError when
/// every channel statistic is zero.
Illuminant estimate_minkowski(const LinearImage& img, const MinkowskiConfig& cfg);

/// Throws UsageError for an unknown name.
Illuminant run_named(const LinearImage& img, std::string_view name);

}  // namespace illumnet
