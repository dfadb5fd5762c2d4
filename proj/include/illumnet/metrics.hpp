#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "illumnet/image.hpp"

namespace illumnet {

/// Angle in degrees between two RGB triplets, in [0, 180]. The cosine is
/// clamped to [-1, 1] before arccos. Throws UsageError for zero, negative or
/// non-finite input.
double angular_error(const Rgb& a, const Rgb& b);

struct ErrorStats {
  double median = 0.0;  ///< mean of the two middle values for even counts
  double mean = 0.0;
  double pct90 = 0.0;   ///< nearest rank: sorted[ceil(0.9 n) - 1]
  double max = 0.0;
  std::size_t count = 0;
};

/// Throws UsageError on empty input or negative / non-finite values.
ErrorStats error_stats(std::span<const double> errors);

/// Per-pixel angular error in degrees (row-major). Pixels masked in `gt` are
/// reported as NaN so statistics can skip them.
std::vector<double> pixelwise_error_map(const LinearImage& estimate, const LinearImage& gt);

/// Mean over the non-NaN entries of a pixelwise error map.
double mean_error(std::span<const double> error_map);

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
};

/// Fixed-width histogram from 0 to the first bin edge at or above the
/// maximum value.
std::vector<HistogramBin> error_histogram(std::span<const double> errors, double bin_width);

}  // namespace illumnet
