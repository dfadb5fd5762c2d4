#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "illumnet/image.hpp"
#include "illumnet/random.hpp"

namespace illumnet {

/// Shape of the local-estimation network:
/// 1x1 conv (3 -> conv_filters), max pool over disjoint pool_size fields,
/// flatten, affine to hidden_units, ReLU, affine to 3.
struct CnnConfig {
  static constexpr int kOutputs = 3;

  int patch_size = 32;
  int conv_filters = 240;
  int pool_size = 8;
  int hidden_units = 40;

  /// Throws UsageError unless all counts are >= 1 and pool_size divides patch_size.
  void validate() const;
  int pool_grid() const { return patch_size / pool_size; }
  int feature_count() const { return conv_filters * pool_grid() * pool_grid(); }

  bool operator==(const CnnConfig&) const = default;
};

/// Total number of weights and biases.
std::size_t param_count(const CnnConfig& config);

/// Network parameters. The same structure doubles as a gradient container.
///
/// Layouts: conv_weights[f*3 + c]; fc1_weights[i*hidden + j] for pooled
/// feature i and hidden unit j; fc2_weights[j*3 + k]. Pooled feature i is
/// (cell_y * pool_grid + cell_x) * conv_filters + f.
struct CnnModel {
  CnnConfig config;
  std::vector<double> conv_weights;
  std::vector<double> conv_bias;
  std::vector<double> fc1_weights;
  std::vector<double> fc1_bias;
  std::vector<double> fc2_weights;
  std::vector<double> fc2_bias;

  /// All parameters zero.
  static CnnModel zeros(const CnnConfig& config);
  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static CnnModel initialized(const CnnConfig& config, std::uint64_t seed);

  std::size_t parameter_count() const;
  /// The six tensors in serialization order.
  std::array<std::span<double>, 6> tensors();
  std::array<std::span<const double>, 6> tensors() const;

  bool operator==(const CnnModel&) const = default;
};

struct PreprocessedPatch {
  Patch patch;
  bool low_contrast = false;
};

/// Joint (all channels together) min-max stretch to [0, 1]. A patch whose
/// range is below 1e-12 becomes all zeros with low_contrast set.
PreprocessedPatch preprocess_patch(const Patch& patch);

/// Intermediate values of one forward pass, kept for backpropagation and
/// inspection.
struct ForwardTrace {
  std::vector<double> pooled;         ///< feature_count values
  std::vector<std::int32_t> winners;  ///< argmax pixel index inside the patch per pooled feature
  std::vector<double> hidden_pre;     ///< hidden_units, before ReLU
  std::vector<double> hidden;         ///< hidden_units, after ReLU
  Rgb raw{};                          ///< unconstrained network output
};

/// Raw network output for a preprocessed patch. Max-pool ties go to the first
/// maximal pixel in row-major order. Throws UsageError on a size mismatch.
Rgb forward_raw(const CnnModel& model, const Patch& patch, ForwardTrace* trace = nullptr);

/// Raw output clamped to >= 1e-6 per channel and normalized.
Illuminant forward(const CnnModel& model, const Patch& patch, ForwardTrace* trace = nullptr);

/// Output of forward_raw turned into an estimate.
Illuminant output_to_estimate(const Rgb& raw);

struct TrainingPatch {
  Patch patch;  ///< preprocessed
  Rgb target;   ///< unit-norm illuminant
};

struct LossAndGrad {
  double loss = 0.0;
  CnnModel gradient;
};

/// Mean over the batch of ||raw_output - target||^2 and its gradient with
/// respect to every parameter. Throws UsageError on an empty batch.
LossAndGrad loss_and_grad(const CnnModel& model, std::span<const TrainingPatch> batch,
                          int threads = 1);

/// Image with a single ground-truth illuminant used for training.
struct LabeledImage {
  LinearImage image;
  Illuminant illuminant;
};

/// Location of one training patch inside a labeled image set.
struct PatchRef {
  std::uint32_t image = 0;
  int x = 0;
  int y = 0;
};

/// Draws patch locations from labeled images. Patches overlapping a masked
/// pixel and low-contrast patches are rejected. Locations are materialized
/// lazily so an epoch never holds all patch pixels at once.
class PatchSampler {
 public:
  PatchSampler(std::span<const LabeledImage> images, int patch_size);

  /// `per_image` random locations from every image (fewer when rejection
  /// keeps failing), in image order.
  std::vector<PatchRef> sample(Rng& rng, int per_image) const;

  /// Non-overlapping tiling of every image, accepted patches only.
  std::vector<PatchRef> tiles() const;

  /// Extracts and preprocesses the patch, paired with its image's illuminant.
  TrainingPatch load(const PatchRef& ref) const;

 private:
  bool acceptable(std::uint32_t image, int x, int y) const;

  std::span<const LabeledImage> images_;
  int patch_size_;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 128;
  int epochs = 30;
  int patches_per_image = 64;
  std::uint64_t seed = 1;
  /// Learning rate multiplier applied after each third of the epochs.
  double lr_decay = 0.1;
  int threads = 1;

  void validate() const;
};

struct EpochReport {
  int epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double validation_median_angle = 0.0;
};

struct TrainResult {
  CnnModel model;
  std::vector<EpochReport> history;
  int best_epoch = -1;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// SGD with momentum on the mean squared Euclidean loss. Returns the model
/// with the lowest validation loss (the last one if `validation` is empty).
/// Deterministic for a given seed. Throws NumericError if the loss becomes
/// non-finite.
TrainResult train_cnn(std::span<const LabeledImage> training,
                      std::span<const LabeledImage> validation, const CnnConfig& config,
                      const TrainConfig& train_config, const EpochCallback& on_epoch = {});

/// Non-overlapping tiling, preprocess + forward per patch. Masked patches
/// are flagged invalid. Throws UsageError if the image is smaller than one patch.
EstimateMap estimate_map(const CnnModel& model, const LinearImage& img, int threads = 1);

struct Activation {
  std::size_t index = 0;  ///< position in the input sequence
  double value = 0.0;
};

/// Ranks patches by the pre-ReLU response of one hidden unit, descending,
/// ties broken by input order. Patches are preprocessed internally.
/// Throws UsageError for an empty dataset or an out-of-range unit.
std::vector<Activation> top_activating_patches(const CnnModel& model,
                                               std::span<const Patch> patches, int unit,
                                               std::size_t k);

/// Hidden-unit responses (pre-ReLU) on the non-overlapping tiling of an
/// image: result[unit][gy * grid_width + gx]. Masked cells hold NaN.
std::vector<std::vector<float>> activation_maps(const CnnModel& model, const LinearImage& img);

// Model files ---------------------------------------------------------------

/// Binary container: magic "ILLUMCNN", uint32 version, uint32 config block
/// (patch, filters, pool, hidden, outputs), then every tensor as
/// little-endian float32 in CnnModel field order.
void save_cnn(const std::filesystem::path& path, const CnnModel& model);
CnnModel load_cnn(const std::filesystem::path& path);

/// Training metadata for the JSON sidecar written next to a model file.
nlohmann::json training_metadata(const TrainConfig& cfg, const TrainResult& result);

}  // namespace illumnet
