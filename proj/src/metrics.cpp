#include "illumnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "illumnet/error.hpp"

namespace illumnet {

double angular_error(const Rgb& a, const Rgb& b) {
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(a[c]) || !std::isfinite(b[c]) || a[c] < 0.0 || b[c] < 0.0)
      throw UsageError("angular_error needs finite nonnegative vectors");
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) throw UsageError("angular_error of a zero vector");
  const double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  const double cosine = std::clamp(dot / (na * nb), -1.0, 1.0);
  return std::acos(cosine) * 180.0 / std::numbers::pi;
}

ErrorStats error_stats(std::span<const double> errors) {
  if (errors.empty()) throw UsageError("error_stats of an empty sequence");
  std::vector<double> sorted(errors.begin(), errors.end());
  for (double e : sorted)
    if (!std::isfinite(e) || e < 0.0) throw UsageError("errors must be finite and nonnegative");
  std::sort(sorted.begin(), sorted.end());

  const std::size_t n = sorted.size();
  ErrorStats s;
  s.count = n;
  s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  double sum = 0.0;
  for (double e : sorted) sum += e;
  s.mean = sum / static_cast<double>(n);
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(n)));
  s.pct90 = sorted[std::max<std::size_t>(rank, 1) - 1];
  s.max = sorted.back();
  return s;
}

std::vector<double> pixelwise_error_map(const LinearImage& estimate, const LinearImage& gt) {
  if (estimate.width() != gt.width() || estimate.height() != gt.height())
    throw DataError("estimate and ground-truth maps differ in size");
  std::vector<double> out(gt.pixel_count());
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * gt.width() + x;
      out[i] = gt.masked(x, y) ? std::numeric_limits<double>::quiet_NaN()
                               : angular_error(estimate.pixel(x, y), gt.pixel(x, y));
    }
  }
  return out;
}

double mean_error(std::span<const double> error_map) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double e : error_map) {
    if (std::isnan(e)) continue;
    sum += e;
    ++n;
  }
  if (n == 0) throw DataError("error map has no unmasked pixels");
  return sum / static_cast<double>(n);
}

std::vector<HistogramBin> error_histogram(std::span<const double> errors, double bin_width) {
  if (!(bin_width > 0.0)) throw UsageError("histogram bin width must be positive");
  double top = 0.0;
  for (double e : errors) top = std::max(top, e);
  const auto bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(top / bin_width)) + 1);
  std::vector<HistogramBin> hist(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    hist[i].lower = static_cast<double>(i) * bin_width;
    hist[i].upper = static_cast<double>(i + 1) * bin_width;
  }
  for (double e : errors) {
    const auto i = std::min(bins - 1, static_cast<std::size_t>(std::floor(e / bin_width)));
    ++hist[i].count;
  }
  return hist;
}

}  // namespace illumnet
