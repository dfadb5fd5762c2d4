#include "illumnet/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "illumnet/error.hpp"
#include "illumnet/metrics.hpp"
#include "illumnet/parallel.hpp"

namespace illumnet {

namespace {

constexpr double kOutputFloor = 1e-6;
constexpr double kLowContrastRange = 1e-12;
// Gradients of a batch are accumulated in this many fixed slices and summed
// in order, so the result does not depend on the thread count.
constexpr std::size_t kGradientSlices = 8;
constexpr int kMaxSampleAttempts = 50;

void add_into(CnnModel& acc, const CnnModel& other) {
  auto dst = acc.tensors();
  const auto src = other.tensors();
  for (std::size_t t = 0; t < dst.size(); ++t)
    for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] += src[t][i];
}

/// Accumulates the gradient of one sample given d(loss)/d(raw output).
void backward(const CnnModel& model, const Patch& patch, const ForwardTrace& trace,
              const Rgb& d_raw, CnnModel& grad) {
  const CnnConfig& cfg = model.config;
  const int hidden = cfg.hidden_units;
  const int filters = cfg.conv_filters;
  const int features = cfg.feature_count();

  for (int k = 0; k < 3; ++k) grad.fc2_bias[k] += d_raw[k];
  std::vector<double> d_pre(static_cast<std::size_t>(hidden));
  for (int j = 0; j < hidden; ++j) {
    const double h = trace.hidden[j];
    double d_h = 0.0;
    for (int k = 0; k < 3; ++k) {
      grad.fc2_weights[j * 3 + k] += h * d_raw[k];
      d_h += model.fc2_weights[j * 3 + k] * d_raw[k];
    }
    d_pre[j] = trace.hidden_pre[j] > 0.0 ? d_h : 0.0;
  }

  for (int j = 0; j < hidden; ++j) grad.fc1_bias[j] += d_pre[j];
  for (int i = 0; i < features; ++i) {
    const double x = trace.pooled[i];
    const double* w = &model.fc1_weights[static_cast<std::size_t>(i) * hidden];
    double* g = &grad.fc1_weights[static_cast<std::size_t>(i) * hidden];
    double d_x = 0.0;
    for (int j = 0; j < hidden; ++j) {
      g[j] += x * d_pre[j];
      d_x += w[j] * d_pre[j];
    }
    // Max pooling routes the whole gradient to the winning pixel.
    const int f = i % filters;
    const std::size_t px = static_cast<std::size_t>(trace.winners[i]) * 3;
    grad.conv_bias[f] += d_x;
    for (int c = 0; c < 3; ++c) grad.conv_weights[f * 3 + c] += d_x * patch.pixels[px + c];
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration and parameters

void CnnConfig::validate() const {
  if (patch_size < 1 || conv_filters < 1 || pool_size < 1 || hidden_units < 1)
    throw UsageError("CNN sizes must all be >= 1");
  if (patch_size % pool_size != 0)
    throw UsageError("patch size " + std::to_string(patch_size) +
                     " is not divisible by pool size " + std::to_string(pool_size));
}

std::size_t param_count(const CnnConfig& config) {
  config.validate();
  const std::size_t f = static_cast<std::size_t>(config.conv_filters);
  const std::size_t h = static_cast<std::size_t>(config.hidden_units);
  const std::size_t features = static_cast<std::size_t>(config.feature_count());
  return f * 3 + f + features * h + h + h * CnnConfig::kOutputs + CnnConfig::kOutputs;
}

CnnModel CnnModel::zeros(const CnnConfig& config) {
  config.validate();
  CnnModel m;
  m.config = config;
  const auto f = static_cast<std::size_t>(config.conv_filters);
  const auto h = static_cast<std::size_t>(config.hidden_units);
  m.conv_weights.assign(f * 3, 0.0);
  m.conv_bias.assign(f, 0.0);
  m.fc1_weights.assign(static_cast<std::size_t>(config.feature_count()) * h, 0.0);
  m.fc1_bias.assign(h, 0.0);
  m.fc2_weights.assign(h * 3, 0.0);
  m.fc2_bias.assign(3, 0.0);
  return m;
}

CnnModel CnnModel::initialized(const CnnConfig& config, std::uint64_t seed) {
  CnnModel m = zeros(config);
  Rng rng(seed);
  auto fill = [&rng](std::vector<double>& w, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : w) v = rng.uniform(-limit, limit);
  };
  fill(m.conv_weights, 3, config.conv_filters);
  fill(m.fc1_weights, config.feature_count(), config.hidden_units);
  fill(m.fc2_weights, config.hidden_units, CnnConfig::kOutputs);
  return m;
}

std::size_t CnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

std::array<std::span<double>, 6> CnnModel::tensors() {
  return {conv_weights, conv_bias, fc1_weights, fc1_bias, fc2_weights, fc2_bias};
}

std::array<std::span<const double>, 6> CnnModel::tensors() const {
  return {conv_weights, conv_bias, fc1_weights, fc1_bias, fc2_weights, fc2_bias};
}

// ---------------------------------------------------------------------------
// Inference

PreprocessedPatch preprocess_patch(const Patch& patch) {
  PreprocessedPatch out{patch, false};
  if (patch.pixels.empty()) {
    out.low_contrast = true;
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(patch.pixels.begin(), patch.pixels.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (!(range > kLowContrastRange)) {
    std::fill(out.patch.pixels.begin(), out.patch.pixels.end(), 0.0);
    out.low_contrast = true;
    return out;
  }
  for (double& v : out.patch.pixels) v = (v - lo) / range;
  return out;
}

Rgb forward_raw(const CnnModel& model, const Patch& patch, ForwardTrace* trace) {
  const CnnConfig& cfg = model.config;
  if (patch.size != cfg.patch_size ||
      patch.pixels.size() != static_cast<std::size_t>(cfg.patch_size) * cfg.patch_size * 3)
    throw UsageError("patch size " + std::to_string(patch.size) + " does not match network input " +
                     std::to_string(cfg.patch_size));

  const int filters = cfg.conv_filters;
  const int grid = cfg.pool_grid();
  const int pool = cfg.pool_size;
  const int side = cfg.patch_size;
  const int hidden = cfg.hidden_units;
  const auto nf = static_cast<std::size_t>(filters);

  std::vector<double> wr(nf), wg(nf), wb(nf);
  for (std::size_t f = 0; f < nf; ++f) {
    wr[f] = model.conv_weights[f * 3];
    wg[f] = model.conv_weights[f * 3 + 1];
    wb[f] = model.conv_weights[f * 3 + 2];
  }
  const double* bias = model.conv_bias.data();

  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  t.pooled.resize(static_cast<std::size_t>(cfg.feature_count()));
  t.winners.resize(t.pooled.size());

  // 1x1 convolution fused with max pooling.
  std::vector<double> best(nf);
  std::vector<std::int32_t> arg(nf);
  for (int cy = 0; cy < grid; ++cy) {
    for (int cx = 0; cx < grid; ++cx) {
      std::fill(best.begin(), best.end(), -std::numeric_limits<double>::infinity());
      std::fill(arg.begin(), arg.end(), 0);
      for (int py = cy * pool; py < (cy + 1) * pool; ++py) {
        for (int px = cx * pool; px < (cx + 1) * pool; ++px) {
          const auto idx = static_cast<std::int32_t>(py * side + px);
          const double* rgb = &patch.pixels[static_cast<std::size_t>(idx) * 3];
          const double r = rgb[0], g = rgb[1], b = rgb[2];
          for (std::size_t f = 0; f < nf; ++f) {
            const double a = wr[f] * r + wg[f] * g + wb[f] * b + bias[f];
            const bool win = a > best[f];
            best[f] = win ? a : best[f];
            arg[f] = win ? idx : arg[f];
          }
        }
      }
      const std::size_t base = static_cast<std::size_t>(cy * grid + cx) * nf;
      std::copy(best.begin(), best.end(), t.pooled.begin() + static_cast<std::ptrdiff_t>(base));
      std::copy(arg.begin(), arg.end(), t.winners.begin() + static_cast<std::ptrdiff_t>(base));
    }
  }

  t.hidden_pre.assign(model.fc1_bias.begin(), model.fc1_bias.end());
  for (std::size_t i = 0; i < t.pooled.size(); ++i) {
    const double x = t.pooled[i];
    const double* w = &model.fc1_weights[i * static_cast<std::size_t>(hidden)];
    for (int j = 0; j < hidden; ++j) t.hidden_pre[j] += x * w[j];
  }
  t.hidden.resize(static_cast<std::size_t>(hidden));
  for (int j = 0; j < hidden; ++j) t.hidden[j] = std::max(0.0, t.hidden_pre[j]);

  Rgb raw{model.fc2_bias[0], model.fc2_bias[1], model.fc2_bias[2]};
  for (int j = 0; j < hidden; ++j)
    for (int k = 0; k < 3; ++k) raw[k] += t.hidden[j] * model.fc2_weights[j * 3 + k];
  t.raw = raw;
  return raw;
}

Illuminant output_to_estimate(const Rgb& raw) {
  Rgb clamped{};
  for (int k = 0; k < 3; ++k)
    clamped[k] = std::isfinite(raw[k]) ? std::max(raw[k], kOutputFloor) : kOutputFloor;
  return Illuminant::from_rgb(clamped);
}

Illuminant forward(const CnnModel& model, const Patch& patch, ForwardTrace* trace) {
  return output_to_estimate(forward_raw(model, patch, trace));
}

// ---------------------------------------------------------------------------
// Training

LossAndGrad loss_and_grad(const CnnModel& model, std::span<const TrainingPatch> batch,
                          int threads) {
  if (batch.empty()) throw UsageError("loss_and_grad needs a non-empty batch");
  const std::size_t slices = std::min(kGradientSlices, batch.size());
  std::vector<CnnModel> grads(slices, CnnModel::zeros(model.config));
  std::vector<double> losses(slices, 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());

  parallel_for(slices, threads, [&](std::size_t s) {
    const std::size_t begin = batch.size() * s / slices;
    const std::size_t end = batch.size() * (s + 1) / slices;
    ForwardTrace trace;
    for (std::size_t i = begin; i < end; ++i) {
      const Rgb raw = forward_raw(model, batch[i].patch, &trace);
      Rgb d_raw{};
      for (int k = 0; k < 3; ++k) {
        const double diff = raw[k] - batch[i].target[k];
        losses[s] += diff * diff;
        d_raw[k] = 2.0 * diff * scale;
      }
      backward(model, batch[i].patch, trace, d_raw, grads[s]);
    }
  });

  LossAndGrad out{0.0, std::move(grads[0])};
  for (std::size_t s = 1; s < slices; ++s) add_into(out.gradient, grads[s]);
  for (double l : losses) out.loss += l;
  out.loss *= scale;
  return out;
}

PatchSampler::PatchSampler(std::span<const LabeledImage> images, int patch_size)
    : images_(images), patch_size_(patch_size) {
  if (patch_size <= 0) throw UsageError("patch size must be positive");
}

bool PatchSampler::acceptable(std::uint32_t image, int x, int y) const {
  const Patch p = extract_patch(images_[image].image, x, y, patch_size_);
  return p.valid && !preprocess_patch(p).low_contrast;
}

std::vector<PatchRef> PatchSampler::sample(Rng& rng, int per_image) const {
  std::vector<PatchRef> refs;
  for (std::uint32_t i = 0; i < images_.size(); ++i) {
    const LinearImage& img = images_[i].image;
    if (img.width() < patch_size_ || img.height() < patch_size_) continue;
    const auto span_x = static_cast<std::uint64_t>(img.width() - patch_size_ + 1);
    const auto span_y = static_cast<std::uint64_t>(img.height() - patch_size_ + 1);
    for (int n = 0; n < per_image; ++n) {
      for (int attempt = 0; attempt < kMaxSampleAttempts; ++attempt) {
        const int x = static_cast<int>(rng.below(span_x));
        const int y = static_cast<int>(rng.below(span_y));
        if (acceptable(i, x, y)) {
          refs.push_back({i, x, y});
          break;
        }
      }
    }
  }
  return refs;
}

std::vector<PatchRef> PatchSampler::tiles() const {
  std::vector<PatchRef> refs;
  for (std::uint32_t i = 0; i < images_.size(); ++i) {
    const LinearImage& img = images_[i].image;
    for (int y = 0; y + patch_size_ <= img.height(); y += patch_size_)
      for (int x = 0; x + patch_size_ <= img.width(); x += patch_size_)
        if (acceptable(i, x, y)) refs.push_back({i, x, y});
  }
  return refs;
}

TrainingPatch PatchSampler::load(const PatchRef& ref) const {
  const LabeledImage& src = images_[ref.image];
  return {preprocess_patch(extract_patch(src.image, ref.x, ref.y, patch_size_)).patch,
          src.illuminant.rgb()};
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw UsageError("momentum must be in [0, 1)");
  if (batch_size < 1) throw UsageError("batch size must be >= 1");
  if (epochs < 1) throw UsageError("epochs must be >= 1");
  if (patches_per_image < 1) throw UsageError("patches per image must be >= 1");
  if (!(lr_decay > 0.0)) throw UsageError("learning-rate decay must be positive");
}

namespace {

struct ValidationResult {
  double loss = 0.0;
  double median_angle = 0.0;
};

ValidationResult validate_model(const CnnModel& model, const PatchSampler& sampler,
                                std::span<const PatchRef> refs, int threads) {
  std::vector<double> sq(refs.size());
  std::vector<double> angles(refs.size());
  parallel_for(refs.size(), threads, [&](std::size_t i) {
    const TrainingPatch tp = sampler.load(refs[i]);
    const Rgb raw = forward_raw(model, tp.patch);
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += (raw[k] - tp.target[k]) * (raw[k] - tp.target[k]);
    sq[i] = s;
    angles[i] = angular_error(output_to_estimate(raw).rgb(), tp.target);
  });
  ValidationResult r;
  r.loss = std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(refs.size());
  r.median_angle = error_stats(angles).median;
  return r;
}

}  // namespace

TrainResult train_cnn(std::span<const LabeledImage> training,
                      std::span<const LabeledImage> validation, const CnnConfig& config,
                      const TrainConfig& train_config, const EpochCallback& on_epoch) {
  config.validate();
  train_config.validate();
  if (training.empty()) throw UsageError("training set is empty");

  Rng rng(train_config.seed);
  CnnModel model = CnnModel::initialized(config, derive_seed(train_config.seed, 0));
  CnnModel velocity = CnnModel::zeros(config);

  const PatchSampler sampler(training, config.patch_size);
  const PatchSampler val_sampler(validation, config.patch_size);
  const std::vector<PatchRef> val_refs = val_sampler.tiles();

  TrainResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  const auto batch_size = static_cast<std::size_t>(train_config.batch_size);

  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    const int stage = 3 * epoch / train_config.epochs;
    const double lr = train_config.learning_rate * std::pow(train_config.lr_decay, stage);

    std::vector<PatchRef> refs = sampler.sample(rng, train_config.patches_per_image);
    if (refs.empty()) throw DataError("no usable training patches");
    rng.shuffle(refs.begin(), refs.end());

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<TrainingPatch> batch;
    for (std::size_t start = 0; start < refs.size(); start += batch_size) {
      const std::size_t end = std::min(refs.size(), start + batch_size);
      batch.resize(end - start);
      parallel_for(batch.size(), train_config.threads,
                   [&](std::size_t i) { batch[i] = sampler.load(refs[start + i]); });
      LossAndGrad lg = loss_and_grad(model, batch, train_config.threads);
      if (!std::isfinite(lg.loss))
        throw NumericError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batches));
      auto params = model.tensors();
      auto vel = velocity.tensors();
      const auto grad = lg.gradient.tensors();
      for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i = 0; i < params[t].size(); ++i) {
          vel[t][i] = train_config.momentum * vel[t][i] - lr * grad[t][i];
          params[t][i] += vel[t][i];
        }
      }
      loss_sum += lg.loss;
      ++batches;
    }

    EpochReport report;
    report.epoch = epoch;
    report.learning_rate = lr;
    report.train_loss = loss_sum / static_cast<double>(batches);
    if (!val_refs.empty()) {
      const ValidationResult v = validate_model(model, val_sampler, val_refs, train_config.threads);
      report.validation_loss = v.loss;
      report.validation_median_angle = v.median_angle;
      if (!std::isfinite(v.loss))
        throw NumericError("validation loss is non-finite at epoch " + std::to_string(epoch));
      if (v.loss < best_loss) {
        best_loss = v.loss;
        result.model = model;
        result.best_epoch = epoch;
      }
    } else {
      result.model = model;
      result.best_epoch = epoch;
    }
    result.history.push_back(report);
    if (on_epoch) on_epoch(report);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Whole-image inference and inspection

EstimateMap estimate_map(const CnnModel& model, const LinearImage& img, int threads) {
  const int ps = model.config.patch_size;
  if (img.width() < ps || img.height() < ps)
    throw UsageError("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                     " is smaller than one " + std::to_string(ps) + "px patch");
  EstimateMap map(img.width() / ps, img.height() / ps, ps);
  const std::size_t cells = map.cell_count();
  std::vector<Illuminant> estimates(cells, Illuminant::neutral());
  std::vector<std::uint8_t> valid(cells, 0);
  parallel_for(cells, threads, [&](std::size_t i) {
    const int gx = static_cast<int>(i % static_cast<std::size_t>(map.grid_width()));
    const int gy = static_cast<int>(i / static_cast<std::size_t>(map.grid_width()));
    const Patch p = extract_patch(img, gx * ps, gy * ps, ps);
    if (!p.valid) return;
    estimates[i] = forward(model, preprocess_patch(p).patch);
    valid[i] = 1;
  });
  for (std::size_t i = 0; i < cells; ++i) {
    const int gx = static_cast<int>(i % static_cast<std::size_t>(map.grid_width()));
    const int gy = static_cast<int>(i / static_cast<std::size_t>(map.grid_width()));
    if (valid[i]) map.set(gx, gy, estimates[i]);
  }
  return map;
}

std::vector<Activation> top_activating_patches(const CnnModel& model,
                                               std::span<const Patch> patches, int unit,
                                               std::size_t k) {
  if (patches.empty()) throw UsageError("top_activating_patches needs a non-empty dataset");
  if (unit < 0 || unit >= model.config.hidden_units)
    throw UsageError("hidden unit " + std::to_string(unit) + " out of range");
  std::vector<Activation> acts(patches.size());
  ForwardTrace trace;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    forward_raw(model, preprocess_patch(patches[i]).patch, &trace);
    acts[i] = {i, trace.hidden_pre[static_cast<std::size_t>(unit)]};
  }
  std::stable_sort(acts.begin(), acts.end(),
                   [](const Activation& a, const Activation& b) { return a.value > b.value; });
  acts.resize(std::min(k, acts.size()));
  return acts;
}

std::vector<std::vector<float>> activation_maps(const CnnModel& model, const LinearImage& img) {
  const int ps = model.config.patch_size;
  if (img.width() < ps || img.height() < ps) throw UsageError("image is smaller than one patch");
  const int gw = img.width() / ps;
  const int gh = img.height() / ps;
  std::vector<std::vector<float>> maps(
      static_cast<std::size_t>(model.config.hidden_units),
      std::vector<float>(static_cast<std::size_t>(gw) * gh, std::numeric_limits<float>::quiet_NaN()));
  ForwardTrace trace;
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const Patch p = extract_patch(img, gx * ps, gy * ps, ps);
      if (!p.valid) continue;
      forward_raw(model, preprocess_patch(p).patch, &trace);
      for (std::size_t u = 0; u < maps.size(); ++u)
        maps[u][static_cast<std::size_t>(gy) * gw + gx] = static_cast<float>(trace.hidden_pre[u]);
    }
  }
  return maps;
}

}  // namespace illumnet
