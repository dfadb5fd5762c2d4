#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "illumnet/image.hpp"
#include "illumnet/svr.hpp"

namespace illumnet {

inline constexpr std::size_t kRegionGrid = 3;
inline constexpr std::size_t kPooledFeatureCount = 2 * kRegionGrid * kRegionGrid * 3 + 3;

struct PoolingOptions {
  bool smooth = true;
  double sigma = 1.0;  ///< of the 5x5 Gaussian, in grid cells

  bool operator==(const PoolingOptions&) const = default;
};

/// Local statistics of an estimate map, in fixed order:
///   [0, 27)  region means, regions row-major over a 3x3 partition, RGB inner
///   [27, 54) region population standard deviations, same order
///   [54, 57) per-channel medians over the whole map
struct PooledFeatures {
  std::array<double, kPooledFeatureCount> values{};
  /// Set when an empty region copied the statistics of its nearest neighbour.
  bool filled_regions = false;

  double mean(std::size_t region, int c) const { return values[region * 3 + c]; }
  double stddev(std::size_t region, int c) const { return values[27 + region * 3 + c]; }
  double median(int c) const { return values[54 + c]; }
};

/// Smooths each channel with a 5x5 Gaussian using normalized convolution over
/// valid cells, splits the grid into 3x3 balanced regions and pools.
/// Throws DataError when the grid is smaller than 3x3 or has no valid cell.
PooledFeatures pool_features(const EstimateMap& map, const PoolingOptions& options = {});

struct AggregatorHyper {
  double C = 1.0;
  double epsilon = 0.01;
  double gamma = 0.1;

  bool operator==(const AggregatorHyper&) const = default;
};

struct AggregatorGrid {
  std::vector<double> C{1.0, 10.0, 100.0};
  std::vector<double> gamma{0.01, 0.1, 1.0};
  std::vector<double> epsilon{0.001, 0.01};
};

struct AggregatorSample {
  PooledFeatures features;
  Illuminant target;
};

/// Standardization plus one RBF epsilon-SVR per output channel.
struct AggregatorModel {
  PoolingOptions pooling;
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
  std::array<SvrModel, 3> channels;
  AggregatorHyper hyper;
  double validation_median_error = 0.0;

  std::vector<double> standardize(const PooledFeatures& f) const;
  /// Assembled channel outputs clamped to >= 1e-6 and normalized.
  Illuminant predict(const PooledFeatures& f) const;

  bool operator==(const AggregatorModel&) const = default;
};

/// Fits every (C, gamma, epsilon) of the grid on `training` and keeps the
/// combination with the lowest median angular error on `validation` (first
/// in grid order on ties). Exact duplicate training pairs are collapsed.
/// Throws UsageError for fewer than 10 training pairs or an empty validation
/// set; NumericError if every feature dimension has zero variance.
AggregatorModel fit_aggregator(std::span<const AggregatorSample> training,
                               std::span<const AggregatorSample> validation,
                               const AggregatorGrid& grid = {},
                               const PoolingOptions& pooling = {});

Illuminant predict_global(const AggregatorModel& model, const EstimateMap& map);

/// Per-channel median of the valid estimates, normalized.
Illuminant median_pool_baseline(const EstimateMap& map);

/// Binary container: magic "ILLUMAGG", uint32 version, pooling options,
/// hyperparameters, standardization block, then per channel the bias, support
/// vector count and (coefficient, vector) records, all as little-endian float64.
void save_aggregator(const std::filesystem::path& path, const AggregatorModel& model);
AggregatorModel load_aggregator(const std::filesystem::path& path);

nlohmann::json aggregator_metadata(const AggregatorModel& model);

}  // namespace illumnet
