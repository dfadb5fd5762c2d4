#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "illumnet/aggregation.hpp"
#include "illumnet/cnn.hpp"
#include "illumnet/datagen.hpp"
#include "illumnet/detect.hpp"
#include "illumnet/image_io.hpp"
#include "illumnet/metrics.hpp"

namespace illumnet {

enum class PipelineMode { Auto, ForceSingle, ForceMulti, Oracle };

PipelineMode parse_mode(std::string_view name);
std::string_view mode_name(PipelineMode mode);

struct PipelineConfig {
  DetectorConfig detector;
  PipelineMode mode = PipelineMode::Auto;
  /// Applied when writing the corrected image.
  Exposure exposure = Exposure::Raw;
  /// Skip von Kries when only the estimates are needed.
  bool correct = true;
  int threads = 1;
};

struct PipelineResult {
  bool multiple = false;
  std::optional<Detection> detection;  ///< absent in forced and oracle modes
  EstimateMap map;
  std::optional<Illuminant> global;  ///< set on the single-illuminant branch
  LinearImage field;                 ///< per-pixel estimate, unit norm
  LinearImage corrected;
};

/// Largest pairwise angle of a ground-truth field, evaluated on a regular
/// subsample of about `samples` pixels.
double field_max_pairwise_angle(const LinearImage& field, std::size_t samples = 1024);

/// Per-image decision of oracle mode: multiple iff the ground truth is a
/// field whose largest pairwise angle exceeds the detector threshold.
bool oracle_decision(const GroundTruth& gt, double threshold_deg);

/// Local estimation, then the single or multiple branch, then von Kries.
/// Oracle mode requires `gt`. Throws UsageError when the image is smaller
/// than one patch or oracle mode lacks ground truth.
PipelineResult run_pipeline(const LinearImage& img, const CnnModel& cnn,
                            const AggregatorModel& aggregator, const PipelineConfig& cfg,
                            const GroundTruth* gt = nullptr);

// Evaluation ----------------------------------------------------------------

/// Method names accepted by evaluate: "DN", the classic estimator names,
/// "cnn-patch", "cnn-median", "cnn-single", "cnn-multi", "cnn-auto",
/// "cnn-oracle".
std::vector<std::string> known_methods();
bool method_needs_cnn(std::string_view method);
bool method_needs_aggregator(std::string_view method);

struct EvaluationRow {
  std::string image;
  std::vector<double> errors;  ///< one per method, degrees
  /// Branch taken by cnn-auto, when evaluated.
  std::optional<bool> auto_multiple;
};

struct EvaluationReport {
  std::vector<std::string> methods;
  std::vector<EvaluationRow> rows;
  std::vector<ErrorStats> stats;  ///< one per method
};

struct EvaluationConfig {
  PipelineConfig pipeline;
  std::vector<std::string> methods;
  int max_side = 0;  ///< resize inputs before estimation; 0 keeps native size
  int threads = 1;
};

/// Error of an estimate field against the ground truth: mean pixelwise
/// angular error over pixels unmasked in `img`.
double field_error(const LinearImage& estimate, const GroundTruth& gt, const LinearImage& img);

/// Error of a global estimate: the angle to a global ground truth, or the
/// mean pixelwise error against a ground-truth field.
double global_error(const Illuminant& estimate, const GroundTruth& gt, const LinearImage& img);

/// Nearest-cell expansion of a map to a width x height field.
LinearImage piecewise_field(const EstimateMap& map, int width, int height);

/// Scores every method on the given entries (all entries when `subset` is
/// empty), in parallel over images with rows in entry order. Throws
/// UsageError for an unknown method or a missing model.
EvaluationReport evaluate(const DatasetIndex& index, std::span<const std::size_t> subset,
                          const EvaluationConfig& cfg, const CnnModel* cnn,
                          const AggregatorModel* aggregator);

/// Writes per_image.csv, summary.json and histogram.csv (1 degree bins).
void write_report(const std::filesystem::path& dir, const EvaluationReport& report,
                  double bin_width = 1.0);

nlohmann::json to_json(const ErrorStats& stats);

}  // namespace illumnet
