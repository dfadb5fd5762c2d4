#include "illumnet/aggregation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "illumnet/error.hpp"
#include "illumnet/metrics.hpp"

namespace illumnet {

namespace {

constexpr int kSmoothRadius = 2;  // 5x5 support
constexpr double kOutputFloor = 1e-6;

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Bounds of part k of a balanced split of `extent` into three.
int split(int extent, int k) { return extent * k / static_cast<int>(kRegionGrid); }

}  // namespace

PooledFeatures pool_features(const EstimateMap& map, const PoolingOptions& options) {
  const int gw = map.grid_width();
  const int gh = map.grid_height();
  if (gw < 3 || gh < 3)
    throw DataError("estimate map " + std::to_string(gw) + "x" + std::to_string(gh) +
                    " is smaller than 3x3");
  if (map.valid_count() == 0) throw DataError("estimate map has no valid cells");

  // Normalized convolution: invalid cells contribute no weight.
  std::vector<Rgb> smoothed(map.cell_count());
  std::vector<std::uint8_t> valid(map.cell_count(), 0);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const std::size_t i = static_cast<std::size_t>(gy) * gw + gx;
      if (!options.smooth) {
        if (map.valid(gx, gy)) {
          smoothed[i] = map.estimate(gx, gy);
          valid[i] = 1;
        }
        continue;
      }
      Rgb acc{};
      double weight = 0.0;
      for (int dy = -kSmoothRadius; dy <= kSmoothRadius; ++dy) {
        for (int dx = -kSmoothRadius; dx <= kSmoothRadius; ++dx) {
          const int x = gx + dx;
          const int y = gy + dy;
          if (x < 0 || y < 0 || x >= gw || y >= gh || !map.valid(x, y)) continue;
          const double w = std::exp(-0.5 * (dx * dx + dy * dy) / (options.sigma * options.sigma));
          const Rgb& e = map.estimate(x, y);
          for (int c = 0; c < 3; ++c) acc[c] += w * e[c];
          weight += w;
        }
      }
      if (weight > 0.0) {
        for (int c = 0; c < 3; ++c) smoothed[i][c] = acc[c] / weight;
        valid[i] = 1;
      }
    }
  }

  PooledFeatures out;
  constexpr std::size_t regions = kRegionGrid * kRegionGrid;
  std::array<bool, regions> empty{};
  for (std::size_t ry = 0; ry < kRegionGrid; ++ry) {
    for (std::size_t rx = 0; rx < kRegionGrid; ++rx) {
      const std::size_t region = ry * kRegionGrid + rx;
      Rgb sum{}, sum_sq{};
      std::size_t count = 0;
      for (int gy = split(gh, static_cast<int>(ry)); gy < split(gh, static_cast<int>(ry) + 1); ++gy) {
        for (int gx = split(gw, static_cast<int>(rx)); gx < split(gw, static_cast<int>(rx) + 1); ++gx) {
          const std::size_t i = static_cast<std::size_t>(gy) * gw + gx;
          if (!valid[i]) continue;
          for (int c = 0; c < 3; ++c) sum[c] += smoothed[i][c];
          ++count;
        }
      }
      if (count == 0) {
        empty[region] = true;
        continue;
      }
      Rgb mean{};
      for (int c = 0; c < 3; ++c) mean[c] = sum[c] / static_cast<double>(count);
      for (int gy = split(gh, static_cast<int>(ry)); gy < split(gh, static_cast<int>(ry) + 1); ++gy) {
        for (int gx = split(gw, static_cast<int>(rx)); gx < split(gw, static_cast<int>(rx) + 1); ++gx) {
          const std::size_t i = static_cast<std::size_t>(gy) * gw + gx;
          if (!valid[i]) continue;
          for (int c = 0; c < 3; ++c) sum_sq[c] += (smoothed[i][c] - mean[c]) * (smoothed[i][c] - mean[c]);
        }
      }
      for (int c = 0; c < 3; ++c) {
        out.values[region * 3 + c] = mean[c];
        out.values[27 + region * 3 + c] = std::sqrt(sum_sq[c] / static_cast<double>(count));
      }
    }
  }

  for (std::size_t region = 0; region < regions; ++region) {
    if (!empty[region]) continue;
    out.filled_regions = true;
    std::size_t best = regions;
    long best_d = std::numeric_limits<long>::max();
    for (std::size_t other = 0; other < regions; ++other) {
      if (empty[other]) continue;
      const long dx = static_cast<long>(other % kRegionGrid) - static_cast<long>(region % kRegionGrid);
      const long dy = static_cast<long>(other / kRegionGrid) - static_cast<long>(region / kRegionGrid);
      if (dx * dx + dy * dy < best_d) {
        best_d = dx * dx + dy * dy;
        best = other;
      }
    }
    for (int c = 0; c < 3; ++c) {
      out.values[region * 3 + c] = out.values[best * 3 + c];
      out.values[27 + region * 3 + c] = out.values[27 + best * 3 + c];
    }
  }

  for (int c = 0; c < 3; ++c) {
    std::vector<double> channel;
    for (std::size_t i = 0; i < smoothed.size(); ++i)
      if (valid[i]) channel.push_back(smoothed[i][c]);
    out.values[54 + c] = median_of(std::move(channel));
  }
  return out;
}

std::vector<double> AggregatorModel::standardize(const PooledFeatures& f) const {
  std::vector<double> x(kPooledFeatureCount);
  for (std::size_t d = 0; d < kPooledFeatureCount; ++d)
    x[d] = (f.values[d] - feature_mean[d]) / feature_scale[d];
  return x;
}

Illuminant AggregatorModel::predict(const PooledFeatures& f) const {
  const auto x = standardize(f);
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    const double v = channels[c].predict(x);
    out[c] = std::isfinite(v) ? std::max(v, kOutputFloor) : kOutputFloor;
  }
  return Illuminant::from_rgb(out);
}

AggregatorModel fit_aggregator(std::span<const AggregatorSample> training,
                               std::span<const AggregatorSample> validation,
                               const AggregatorGrid& grid, const PoolingOptions& pooling) {
  if (training.size() < 10) throw UsageError("fit_aggregator needs at least 10 training pairs");
  if (validation.empty()) throw UsageError("fit_aggregator needs a validation split");
  if (grid.C.empty() || grid.gamma.empty() || grid.epsilon.empty())
    throw UsageError("hyperparameter grid has an empty axis");

  std::vector<const AggregatorSample*> unique;
  for (const auto& s : training) {
    const bool seen = std::any_of(unique.begin(), unique.end(), [&](const AggregatorSample* u) {
      return u->features.values == s.features.values && u->target == s.target;
    });
    if (!seen) unique.push_back(&s);
  }

  AggregatorModel model;
  model.pooling = pooling;
  model.feature_mean.assign(kPooledFeatureCount, 0.0);
  model.feature_scale.assign(kPooledFeatureCount, 1.0);
  const auto n = static_cast<double>(unique.size());
  bool any_variance = false;
  for (std::size_t d = 0; d < kPooledFeatureCount; ++d) {
    double mean = 0.0;
    for (const auto* s : unique) mean += s->features.values[d];
    mean /= n;
    double var = 0.0;
    for (const auto* s : unique) var += (s->features.values[d] - mean) * (s->features.values[d] - mean);
    const double sd = std::sqrt(var / n);
    model.feature_mean[d] = mean;
    if (sd > 1e-12) {
      model.feature_scale[d] = sd;
      any_variance = true;
    }
  }
  if (!any_variance) throw NumericError("degenerate features: zero variance in every dimension");

  std::vector<std::vector<double>> x;
  x.reserve(unique.size());
  for (const auto* s : unique) x.push_back(model.standardize(s->features));
  std::array<std::vector<double>, 3> y;
  for (const auto* s : unique)
    for (int c = 0; c < 3; ++c) y[c].push_back(s->target[c]);

  double best = std::numeric_limits<double>::infinity();
  for (double C : grid.C) {
    for (double gamma : grid.gamma) {
      for (double eps : grid.epsilon) {
        AggregatorModel candidate = model;
        candidate.hyper = {C, eps, gamma};
        for (int c = 0; c < 3; ++c)
          candidate.channels[c] = fit_svr(x, y[c], SvrParams{C, eps, gamma});
        std::vector<double> errors;
        errors.reserve(validation.size());
        for (const auto& v : validation)
          errors.push_back(angular_error(candidate.predict(v.features).rgb(), v.target.rgb()));
        candidate.validation_median_error = error_stats(errors).median;
        if (candidate.validation_median_error < best) {
          best = candidate.validation_median_error;
          model = std::move(candidate);
        }
      }
    }
  }
  return model;
}

Illuminant predict_global(const AggregatorModel& model, const EstimateMap& map) {
  return model.predict(pool_features(map, model.pooling));
}

Illuminant median_pool_baseline(const EstimateMap& map) {
  const auto estimates = map.valid_estimates();
  if (estimates.empty()) throw DataError("estimate map has no valid cells");
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    std::vector<double> channel;
    channel.reserve(estimates.size());
    for (const auto& e : estimates) channel.push_back(e[c]);
    out[c] = std::max(median_of(std::move(channel)), kOutputFloor);
  }
  return Illuminant::from_rgb(out);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'I', 'L', 'L', 'U', 'M', 'A', 'G', 'G'};
constexpr std::uint64_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw DataError("truncated aggregator file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void save_aggregator(const std::filesystem::path& path, const AggregatorModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write aggregator file: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, kVersion);
  put_u64(out, model.pooling.smooth ? 1 : 0);
  put_f64(out, model.pooling.sigma);
  put_f64(out, model.hyper.C);
  put_f64(out, model.hyper.epsilon);
  put_f64(out, model.hyper.gamma);
  put_f64(out, model.validation_median_error);
  put_u64(out, model.feature_mean.size());
  for (double v : model.feature_mean) put_f64(out, v);
  for (double v : model.feature_scale) put_f64(out, v);
  for (const auto& ch : model.channels) {
    put_f64(out, ch.gamma);
    put_f64(out, ch.bias);
    put_u64(out, ch.support_vectors.size());
    for (std::size_t i = 0; i < ch.support_vectors.size(); ++i) {
      put_f64(out, ch.coefficients[i]);
      for (double v : ch.support_vectors[i]) put_f64(out, v);
    }
  }
  if (!out) throw DataError("failed writing aggregator file: " + path.string());
}

AggregatorModel load_aggregator(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open aggregator file: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not an aggregator file: " + path.string());
  if (get_u64(in) != kVersion) throw DataError("unsupported aggregator version");

  AggregatorModel m;
  m.pooling.smooth = get_u64(in) != 0;
  m.pooling.sigma = get_f64(in);
  m.hyper.C = get_f64(in);
  m.hyper.epsilon = get_f64(in);
  m.hyper.gamma = get_f64(in);
  m.validation_median_error = get_f64(in);
  const std::uint64_t dims = get_u64(in);
  if (dims != kPooledFeatureCount) throw DataError("aggregator feature count mismatch");
  m.feature_mean.resize(dims);
  m.feature_scale.resize(dims);
  for (double& v : m.feature_mean) v = get_f64(in);
  for (double& v : m.feature_scale) {
    v = get_f64(in);
    if (!(v > 0.0)) throw DataError("aggregator standardization scale must be positive");
  }
  for (auto& ch : m.channels) {
    ch.gamma = get_f64(in);
    ch.bias = get_f64(in);
    const std::uint64_t count = get_u64(in);
    if (count > (1u << 24)) throw DataError("implausible support vector count");
    ch.support_vectors.assign(count, std::vector<double>(dims));
    ch.coefficients.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      ch.coefficients[i] = get_f64(in);
      for (double& v : ch.support_vectors[i]) v = get_f64(in);
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError("trailing bytes in aggregator file: " + path.string());
  return m;
}

nlohmann::json aggregator_metadata(const AggregatorModel& model) {
  nlohmann::json j;
  j["C"] = model.hyper.C;
  j["epsilon"] = model.hyper.epsilon;
  j["gamma"] = model.hyper.gamma;
  j["validation_median_error"] = model.validation_median_error;
  j["smoothing"] = model.pooling.smooth;
  j["smoothing_sigma"] = model.pooling.sigma;
  j["support_vectors"] = {model.channels[0].support_vectors.size(),
                          model.channels[1].support_vectors.size(),
                          model.channels[2].support_vectors.size()};
  return j;
}

}  // namespace illumnet
