#include "illumnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "illumnet/classic.hpp"
#include "illumnet/error.hpp"
#include "illumnet/parallel.hpp"

namespace fs = std::filesystem;

namespace illumnet {

PipelineMode parse_mode(std::string_view name) {
  if (name == "auto") return PipelineMode::Auto;
  if (name == "force-single") return PipelineMode::ForceSingle;
  if (name == "force-multi") return PipelineMode::ForceMulti;
  if (name == "oracle") return PipelineMode::Oracle;
  throw UsageError("unknown mode '" + std::string(name) +
                   "' (expected auto, force-single, force-multi or oracle)");
}

std::string_view mode_name(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::Auto: return "auto";
    case PipelineMode::ForceSingle: return "force-single";
    case PipelineMode::ForceMulti: return "force-multi";
    case PipelineMode::Oracle: return "oracle";
  }
  return "auto";
}

double field_max_pairwise_angle(const LinearImage& field, std::size_t samples) {
  if (field.empty()) return 0.0;
  const double ratio = static_cast<double>(field.pixel_count()) / static_cast<double>(std::max<std::size_t>(samples, 1));
  const int step = std::max(1, static_cast<int>(std::floor(std::sqrt(ratio))));
  std::vector<Rgb> points;
  for (int y = step / 2; y < field.height(); y += step)
    for (int x = step / 2; x < field.width(); x += step) points.push_back(field.pixel(x, y));
  double worst = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      worst = std::max(worst, angular_error(points[i], points[j]));
  return worst;
}

bool oracle_decision(const GroundTruth& gt, double threshold_deg) {
  const auto* field = std::get_if<LinearImage>(&gt);
  return field != nullptr && field_max_pairwise_angle(*field) > threshold_deg;
}

namespace {

struct Decision {
  bool multiple = false;
  std::optional<Detection> detection;
};

Decision decide(const EstimateMap& map, const PipelineConfig& cfg, const GroundTruth* gt) {
  switch (cfg.mode) {
    case PipelineMode::ForceSingle: return {false, std::nullopt};
    case PipelineMode::ForceMulti: return {true, std::nullopt};
    case PipelineMode::Oracle:
      if (gt == nullptr) throw UsageError("oracle mode needs ground truth");
      return {oracle_decision(*gt, cfg.detector.angle_threshold_deg), std::nullopt};
    case PipelineMode::Auto: break;
  }
  Detection d = detect_multiple(map, cfg.detector);
  const bool multiple = d.multiple;
  return {multiple, std::move(d)};
}

}  // namespace

PipelineResult run_pipeline(const LinearImage& img, const CnnModel& cnn,
                            const AggregatorModel& aggregator, const PipelineConfig& cfg,
                            const GroundTruth* gt) {
  if (cfg.mode == PipelineMode::Oracle && gt == nullptr)
    throw UsageError("oracle mode needs ground truth");
  PipelineResult out;
  out.map = estimate_map(cnn, img, cfg.threads);
  Decision decision = decide(out.map, cfg, gt);
  out.multiple = decision.multiple;
  out.detection = std::move(decision.detection);
  if (out.multiple) {
    out.field = upsample_estimate_map(out.map, img.width(), img.height());
    if (cfg.correct) out.corrected = von_kries_correct(img, out.field, cfg.exposure);
  } else {
    out.global = predict_global(aggregator, out.map);
    out.field = constant_field(img.width(), img.height(), out.global->rgb());
    if (cfg.correct) out.corrected = von_kries_correct(img, out.global->rgb(), cfg.exposure);
  }
  return out;
}

// Evaluation ----------------------------------------------------------------

namespace {

constexpr std::string_view kCnnMethods[] = {"cnn-patch", "cnn-median", "cnn-single",
                                            "cnn-multi", "cnn-auto",   "cnn-oracle"};

}  // namespace

std::vector<std::string> known_methods() {
  std::vector<std::string> out{"DN"};
  for (const auto& e : named_estimators()) out.emplace_back(e.name);
  for (auto m : kCnnMethods) out.emplace_back(m);
  return out;
}

bool method_needs_cnn(std::string_view method) {
  return std::find(std::begin(kCnnMethods), std::end(kCnnMethods), method) != std::end(kCnnMethods);
}

bool method_needs_aggregator(std::string_view method) {
  return method == "cnn-single" || method == "cnn-auto" || method == "cnn-oracle";
}

double field_error(const LinearImage& estimate, const GroundTruth& gt, const LinearImage& img) {
  LinearImage reference = std::holds_alternative<Illuminant>(gt)
                              ? constant_field(img.width(), img.height(), std::get<Illuminant>(gt).rgb())
                              : std::get<LinearImage>(gt);
  if (img.has_mask()) reference.set_mask(*img.mask());
  const std::vector<double> errors = pixelwise_error_map(estimate, reference);
  const double e = mean_error(errors);
  if (!std::isfinite(e)) throw DataError("no unmasked pixel to score");
  return e;
}

double global_error(const Illuminant& estimate, const GroundTruth& gt, const LinearImage& img) {
  if (const auto* illum = std::get_if<Illuminant>(&gt)) return angular_error(estimate.rgb(), illum->rgb());
  return field_error(constant_field(img.width(), img.height(), estimate.rgb()), gt, img);
}

LinearImage piecewise_field(const EstimateMap& map, int width, int height) {
  if (map.valid_count() == 0) throw DataError("estimate map has no valid cells");
  const int gw = map.grid_width();
  const int gh = map.grid_height();
  std::vector<Rgb> filled(map.cell_count());
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      long best = std::numeric_limits<long>::max();
      for (int y = 0; y < gh; ++y) {
        for (int x = 0; x < gw; ++x) {
          if (!map.valid(x, y)) continue;
          const long d = static_cast<long>(x - gx) * (x - gx) + static_cast<long>(y - gy) * (y - gy);
          if (d < best) {
            best = d;
            filled[static_cast<std::size_t>(gy) * gw + gx] = map.estimate(x, y);
          }
        }
      }
    }
  }
  LinearImage field(width, height);
  const int ps = map.patch_size();
  for (int y = 0; y < height; ++y) {
    const int gy = std::min(y / ps, gh - 1);
    for (int x = 0; x < width; ++x) {
      const int gx = std::min(x / ps, gw - 1);
      field.set_pixel(x, y, filled[static_cast<std::size_t>(gy) * gw + gx]);
    }
  }
  return field;
}

EvaluationReport evaluate(const DatasetIndex& index, std::span<const std::size_t> subset,
                          const EvaluationConfig& cfg, const CnnModel* cnn,
                          const AggregatorModel* aggregator) {
  if (cfg.methods.empty()) throw UsageError("no evaluation methods given");
  const auto known = known_methods();
  bool needs_cnn = false;
  for (const auto& m : cfg.methods) {
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw UsageError("unknown method '" + m + "'");
    if (method_needs_cnn(m)) needs_cnn = true;
    if (method_needs_cnn(m) && cnn == nullptr) throw UsageError("method " + m + " needs a CNN model");
    if (method_needs_aggregator(m) && aggregator == nullptr)
      throw UsageError("method " + m + " needs an aggregator model");
  }

  std::vector<std::size_t> entries(subset.begin(), subset.end());
  if (entries.empty())
    for (std::size_t i = 0; i < index.entries.size(); ++i) entries.push_back(i);

  EvaluationReport report;
  report.methods = cfg.methods;
  report.rows.resize(entries.size());
  parallel_for(entries.size(), cfg.threads, [&](std::size_t row) {
    const DatasetEntry& entry = index.entries[entries[row]];
    const LoadedEntry loaded = load_entry(entry, cfg.max_side);
    const LinearImage& img = loaded.image;
    const GroundTruth& gt = loaded.ground_truth;

    EstimateMap map;
    if (needs_cnn) map = estimate_map(*cnn, img);
    std::optional<Illuminant> single;
    std::optional<LinearImage> multi;
    auto single_estimate = [&]() -> const Illuminant& {
      if (!single) single = predict_global(*aggregator, map);
      return *single;
    };
    auto multi_error = [&] {
      if (!multi) multi = upsample_estimate_map(map, img.width(), img.height());
      return field_error(*multi, gt, img);
    };

    EvaluationRow& out = report.rows[row];
    out.image = fs::relative(entry.image, index.root).generic_string();
    for (const auto& m : cfg.methods) {
      double e = 0.0;
      if (m == "DN") {
        e = global_error(Illuminant::neutral(), gt, img);
      } else if (m == "cnn-patch") {
        e = field_error(piecewise_field(map, img.width(), img.height()), gt, img);
      } else if (m == "cnn-median") {
        e = global_error(median_pool_baseline(map), gt, img);
      } else if (m == "cnn-single") {
        e = global_error(single_estimate(), gt, img);
      } else if (m == "cnn-multi") {
        e = multi_error();
      } else if (m == "cnn-auto" || m == "cnn-oracle") {
        PipelineConfig pc = cfg.pipeline;
        pc.mode = m == "cnn-auto" ? PipelineMode::Auto : PipelineMode::Oracle;
        const bool multiple = decide(map, pc, &gt).multiple;
        if (m == "cnn-auto") out.auto_multiple = multiple;
        e = multiple ? multi_error() : global_error(single_estimate(), gt, img);
      } else {
        e = global_error(run_named(img, m), gt, img);
      }
      out.errors.push_back(e);
    }
  });

  for (std::size_t m = 0; m < report.methods.size(); ++m) {
    std::vector<double> column;
    column.reserve(report.rows.size());
    for (const auto& r : report.rows) column.push_back(r.errors[m]);
    report.stats.push_back(error_stats(column));
  }
  return report;
}

nlohmann::json to_json(const ErrorStats& stats) {
  return {{"median", stats.median},
          {"mean", stats.mean},
          {"pct90", stats.pct90},
          {"max", stats.max},
          {"count", stats.count}};
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_report(const fs::path& dir, const EvaluationReport& report, double bin_width) {
  fs::create_directories(dir);
  std::ofstream csv(dir / "per_image.csv");
  if (!csv) throw DataError("cannot write report in " + dir.string());
  csv << "image";
  for (const auto& m : report.methods) csv << ',' << m;
  csv << '\n';
  for (const auto& row : report.rows) {
    csv << row.image;
    for (double e : row.errors) csv << ',' << format_double(e);
    csv << '\n';
  }

  nlohmann::json summary;
  summary["images"] = report.rows.size();
  for (std::size_t m = 0; m < report.methods.size(); ++m)
    summary["methods"][report.methods[m]] = to_json(report.stats[m]);
  std::size_t multiple = 0, decided = 0;
  for (const auto& row : report.rows) {
    if (!row.auto_multiple) continue;
    ++decided;
    if (*row.auto_multiple) ++multiple;
  }
  if (decided > 0) summary["auto_decisions"] = {{"multiple", multiple}, {"single", decided - multiple}};
  std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';

  std::ofstream hist(dir / "histogram.csv");
  hist << "method,lower,upper,count\n";
  for (std::size_t m = 0; m < report.methods.size(); ++m) {
    std::vector<double> column;
    for (const auto& r : report.rows) column.push_back(r.errors[m]);
    for (const auto& bin : error_histogram(column, bin_width))
      hist << report.methods[m] << ',' << format_double(bin.lower) << ','
           << format_double(bin.upper) << ',' << bin.count << '\n';
  }
}

}  // namespace illumnet
