// Command-line front end. Exit codes: 0 success, 1 usage, 2 data, 3 numeric.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "illumnet/aggregation.hpp"
#include "illumnet/classic.hpp"
#include "illumnet/cnn.hpp"
#include "illumnet/datagen.hpp"
#include "illumnet/detect.hpp"
#include "illumnet/error.hpp"
#include "illumnet/image_io.hpp"
#include "illumnet/metrics.hpp"
#include "illumnet/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace illumnet;

namespace {

// Flags accepted before the subcommand.
struct Global {
  std::uint64_t seed = 1;
  std::string config_path;
  int threads = 1;
  std::string output_dir = ".";
};

struct Settings {
  CnnConfig cnn;
  TrainConfig train;
  DetectorConfig detector;
  AggregatorGrid grid;
  PoolingOptions pooling;
  SyntheticSceneConfig scene;
  RelightConfig relight;
  std::string mode = "auto";
  std::string exposure = "raw";
  std::vector<std::string> methods{"DN", "GW", "WP", "SoG", "gGW", "GE1", "GE2"};
  int max_side = 1200;
  int run = 0;
  std::size_t count = 30;
};

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed config " + path + ": " + e.what());
  }
}

// Config values fill fields whose command-line option was not given.
template <typename T>
void apply(const json& root, const char* section, const char* key, T& field,
           const CLI::Option* opt = nullptr) {
  if (opt != nullptr && opt->count() > 0) return;
  const json* node = &root;
  if (section != nullptr) {
    if (!root.contains(section)) return;
    node = &root.at(section);
  }
  if (!node->contains(key)) return;
  try {
    field = node->at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key ") + (section ? std::string(section) + "." : "") + key +
                     ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json illum_json(const Illuminant& i) { return {i[0], i[1], i[2]}; }

Exposure parse_exposure(const std::string& name) {
  if (name == "raw") return Exposure::Raw;
  if (name == "preserve-green") return Exposure::PreserveGreen;
  throw UsageError("unknown exposure '" + name + "' (expected raw or preserve-green)");
}

void save_image_auto(const fs::path& path, const LinearImage& img) {
  const std::string ext = path.extension().string();
  if (ext == ".png")
    save_png(path, img, 16);
  else
    save_pfm(path, img);
}

std::vector<LabeledImage> load_labeled(const DatasetIndex& index, const std::vector<std::size_t>& ids,
                                       int max_side) {
  std::vector<LabeledImage> out;
  out.reserve(ids.size());
  for (std::size_t i : ids) {
    LoadedEntry e = load_entry(index.entries[i], max_side);
    const auto* illum = std::get_if<Illuminant>(&e.ground_truth);
    if (illum == nullptr)
      throw DataError("training needs a single-illuminant ground truth: " +
                      index.entries[i].illum.string());
    out.push_back({std::move(e.image), *illum});
  }
  return out;
}

json detection_json(const Detection& d) {
  json modes = json::array();
  for (const auto& m : d.modes) modes.push_back({{"r_over_g", m.point.r}, {"b_over_g", m.point.b}, {"density", m.density}});
  return {{"multiple", d.multiple},
          {"max_angle_deg", d.max_angle_deg},
          {"modes", modes},
          {"bandwidth", {d.grid.bandwidth_r, d.grid.bandwidth_b}},
          {"dropped", d.dropped}};
}

std::vector<AggregatorSample> aggregator_samples(const CnnModel& cnn, const DatasetIndex& index,
                                                 const std::vector<std::size_t>& ids, int max_side,
                                                 const PoolingOptions& pooling, int threads) {
  std::vector<AggregatorSample> out(ids.size(), AggregatorSample{{}, Illuminant::neutral()});
  const auto images = load_labeled(index, ids, max_side);
  for (std::size_t i = 0; i < images.size(); ++i)
    out[i] = {pool_features(estimate_map(cnn, images[i].image, threads), pooling), images[i].illuminant};
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Illuminant estimation: local CNN estimates, multi-illuminant detection, "
               "local-to-global regression and evaluation."};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  Global g;
  Settings s;
  auto* seed_opt = app.add_option("--seed", g.seed, "Master random seed")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON file overriding numeric defaults");
  auto* threads_opt = app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  auto* outdir_opt = app.add_option("--output-dir", g.output_dir, "Directory for outputs")->capture_default_str();

  std::string image_path, cnn_path, aggregator_path, data_dir, output_file, method;
  int unit = 0;
  std::size_t top_k = 16;
  MinkowskiConfig custom;

  auto add_custom = [&](CLI::App* sub) {
    sub->add_option("--order", custom.order, "custom: derivative order 0-2")->capture_default_str()->check(CLI::Range(0, 2));
    sub->add_option("--p", custom.p, "custom: Minkowski norm (inf for max)")->capture_default_str();
    sub->add_option("--sigma", custom.sigma, "custom: Gaussian pre-smoothing sigma")->capture_default_str();
  };
  auto add_detector = [&](CLI::App* sub) {
    sub->add_option("--retention", s.detector.retention, "Mode retention fraction")->capture_default_str();
    sub->add_option("--threshold", s.detector.angle_threshold_deg, "Multi-illuminant angle threshold (deg)")->capture_default_str();
    sub->add_option("--resolution", s.detector.resolution, "Density grid resolution")->capture_default_str();
  };

  // estimate ---------------------------------------------------------------
  auto* estimate = app.add_subcommand("estimate", "Estimate the illuminant of one image");
  estimate->add_option("image", image_path, "Input image (PFM or PNG)")->required()->check(CLI::ExistingFile);
  estimate->add_option("--method", method, "DN, GW, WP, SoG, gGW, GE1, GE2 or custom instead of the CNN pipeline");
  estimate->add_option("--cnn", cnn_path, "CNN model file");
  estimate->add_option("--aggregator", aggregator_path, "Aggregator model file");
  auto* estimate_mode = estimate->add_option("--mode", s.mode, "auto, force-single, force-multi or oracle")->capture_default_str();
  add_custom(estimate);
  add_detector(estimate);

  // correct ----------------------------------------------------------------
  auto* correct = app.add_subcommand("correct", "White-balance one image");
  correct->add_option("image", image_path, "Input image (PFM or PNG)")->required()->check(CLI::ExistingFile);
  correct->add_option("-o,--output", output_file, "Output image (.pfm or .png); default <output-dir>/corrected.pfm");
  correct->add_option("--method", method, "DN, GW, WP, SoG, gGW, GE1, GE2 or custom instead of the CNN pipeline");
  correct->add_option("--cnn", cnn_path, "CNN model file");
  correct->add_option("--aggregator", aggregator_path, "Aggregator model file");
  auto* correct_mode = correct->add_option("--mode", s.mode, "auto, force-single, force-multi or oracle")->capture_default_str();
  auto* exposure_opt = correct->add_option("--exposure", s.exposure, "raw or preserve-green")->capture_default_str();
  add_custom(correct);
  add_detector(correct);

  // detect -----------------------------------------------------------------
  auto* detect = app.add_subcommand("detect", "Single/multiple illuminant decision for one image");
  detect->add_option("image", image_path, "Input image")->required()->check(CLI::ExistingFile);
  detect->add_option("--cnn", cnn_path, "CNN model file")->required();
  add_detector(detect);

  // train-cnn --------------------------------------------------------------
  auto* train_cnn_cmd = app.add_subcommand("train-cnn", "Train the patch CNN on a dataset split");
  train_cnn_cmd->add_option("--data", data_dir, "Dataset root with index.json")->required();
  auto* run_opt1 = train_cnn_cmd->add_option("--run", s.run, "Fold rotation 0-2")->capture_default_str()->check(CLI::Range(0, 2));
  auto* epochs_opt = train_cnn_cmd->add_option("--epochs", s.train.epochs, "Training epochs")->capture_default_str();
  auto* lr_opt = train_cnn_cmd->add_option("--lr", s.train.learning_rate, "Initial learning rate")->capture_default_str();
  auto* batch_opt = train_cnn_cmd->add_option("--batch", s.train.batch_size, "Batch size")->capture_default_str();
  auto* ppi_opt = train_cnn_cmd->add_option("--patches-per-image", s.train.patches_per_image, "Random patches per image per epoch")->capture_default_str();
  auto* maxside_opt1 = train_cnn_cmd->add_option("--max-side", s.max_side, "Resize inputs to this longest side (0 = native)")->capture_default_str();

  // train-aggregator -------------------------------------------------------
  auto* train_agg = app.add_subcommand("train-aggregator", "Fit the local-to-global regressor");
  train_agg->add_option("--data", data_dir, "Dataset root with index.json")->required();
  train_agg->add_option("--cnn", cnn_path, "CNN model file")->required();
  auto* run_opt2 = train_agg->add_option("--run", s.run, "Fold rotation 0-2")->capture_default_str()->check(CLI::Range(0, 2));
  auto* maxside_opt2 = train_agg->add_option("--max-side", s.max_side, "Resize inputs to this longest side (0 = native)")->capture_default_str();

  // gen-scenes -------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-scenes", "Render a synthetic single-illuminant dataset");
  auto* count_opt1 = gen->add_option("--count", s.count, "Number of scenes")->capture_default_str();
  auto* width_opt = gen->add_option("--width", s.scene.width, "Image width")->capture_default_str();
  auto* height_opt = gen->add_option("--height", s.scene.height, "Image height")->capture_default_str();
  auto* surfaces_opt = gen->add_option("--surfaces", s.scene.num_surfaces, "Reflectance rectangles per scene")->capture_default_str();
  auto* noise_opt = gen->add_option("--noise", s.scene.noise_std, "Sensor noise std")->capture_default_str();

  // relight ----------------------------------------------------------------
  auto* relight_cmd = app.add_subcommand("relight", "Relight a dataset with several illuminants");
  relight_cmd->add_option("--data", data_dir, "Source dataset root")->required();
  auto* k_opt = relight_cmd->add_option("-k,--illuminants", s.relight.num_illuminants, "Illuminants per image (2-4)")->capture_default_str()->check(CLI::Range(2, 4));
  auto* sigma_opt = relight_cmd->add_option("--sigma", s.relight.smoothing_sigma, "Blending sigma in pixels (0 = min(w,h)/12)")->capture_default_str();

  // evaluate ---------------------------------------------------------------
  auto* eval = app.add_subcommand("evaluate", "Score methods on a dataset");
  eval->add_option("--data", data_dir, "Dataset root with index.json")->required();
  auto* methods_opt = eval->add_option("--methods", s.methods, "Methods to score")->delimiter(',')->capture_default_str();
  eval->add_option("--cnn", cnn_path, "CNN model file");
  eval->add_option("--aggregator", aggregator_path, "Aggregator model file");
  auto* run_opt3 = eval->add_option("--run", s.run, "Score the test fold of this rotation (-1 = all entries)")->capture_default_str()->check(CLI::Range(-1, 2));
  auto* maxside_opt3 = eval->add_option("--max-side", s.max_side, "Resize inputs to this longest side (0 = native)")->capture_default_str();
  add_detector(eval);

  // inspect-activations ----------------------------------------------------
  auto* inspect = app.add_subcommand("inspect-activations", "Top patches for one hidden unit");
  inspect->add_option("--cnn", cnn_path, "CNN model file")->required();
  inspect->add_option("--data", data_dir, "Dataset root with index.json")->required();
  inspect->add_option("--unit", unit, "Hidden unit index")->required();
  inspect->add_option("-k", top_k, "Number of patches")->capture_default_str();
  auto* maxside_opt4 = inspect->add_option("--max-side", s.max_side, "Resize inputs to this longest side (0 = native)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  // Config file: fills everything not set on the command line.
  const json cfg = read_config(g.config_path);
  apply(cfg, nullptr, "seed", g.seed, seed_opt);
  apply(cfg, nullptr, "threads", g.threads, threads_opt);
  apply(cfg, nullptr, "output_dir", g.output_dir, outdir_opt);
  apply(cfg, "cnn", "patch_size", s.cnn.patch_size);
  apply(cfg, "cnn", "conv_filters", s.cnn.conv_filters);
  apply(cfg, "cnn", "pool_size", s.cnn.pool_size);
  apply(cfg, "cnn", "hidden_units", s.cnn.hidden_units);
  apply(cfg, "train", "learning_rate", s.train.learning_rate, lr_opt);
  apply(cfg, "train", "momentum", s.train.momentum);
  apply(cfg, "train", "batch_size", s.train.batch_size, batch_opt);
  apply(cfg, "train", "epochs", s.train.epochs, epochs_opt);
  apply(cfg, "train", "patches_per_image", s.train.patches_per_image, ppi_opt);
  apply(cfg, "train", "lr_decay", s.train.lr_decay);
  for (auto* sub : {estimate, correct, detect, eval}) {
    apply(cfg, "detector", "retention", s.detector.retention, sub->get_option("--retention"));
    apply(cfg, "detector", "angle_threshold_deg", s.detector.angle_threshold_deg, sub->get_option("--threshold"));
    apply(cfg, "detector", "resolution", s.detector.resolution, sub->get_option("--resolution"));
  }
  apply(cfg, "detector", "scale_levels", s.detector.scale_levels);
  apply(cfg, "detector", "min_bandwidth", s.detector.min_bandwidth);
  apply(cfg, "aggregator", "C", s.grid.C);
  apply(cfg, "aggregator", "gamma", s.grid.gamma);
  apply(cfg, "aggregator", "epsilon", s.grid.epsilon);
  apply(cfg, "aggregator", "smooth", s.pooling.smooth);
  apply(cfg, "aggregator", "sigma", s.pooling.sigma);
  apply(cfg, "scene", "width", s.scene.width, width_opt);
  apply(cfg, "scene", "height", s.scene.height, height_opt);
  apply(cfg, "scene", "num_surfaces", s.scene.num_surfaces, surfaces_opt);
  apply(cfg, "scene", "reflectance_min", s.scene.reflectance_min);
  apply(cfg, "scene", "reflectance_max", s.scene.reflectance_max);
  apply(cfg, "scene", "surface_min_size", s.scene.surface_min_size);
  apply(cfg, "scene", "surface_max_size", s.scene.surface_max_size);
  apply(cfg, "scene", "neutral_fraction", s.scene.neutral_fraction);
  apply(cfg, "scene", "noise_std", s.scene.noise_std, noise_opt);
  apply(cfg, "scene", "count", s.count, count_opt1);
  apply(cfg, "relight", "num_illuminants", s.relight.num_illuminants, k_opt);
  apply(cfg, "relight", "min_separation", s.relight.min_separation);
  apply(cfg, "relight", "smoothing_sigma", s.relight.smoothing_sigma, sigma_opt);
  apply(cfg, "relight", "max_attempts", s.relight.max_attempts);
  for (auto* opt : {estimate_mode, correct_mode})
    apply(cfg, "pipeline", "mode", s.mode, opt);
  apply(cfg, "pipeline", "exposure", s.exposure, exposure_opt);
  apply(cfg, "evaluate", "methods", s.methods, methods_opt);
  auto any_given = [](std::initializer_list<const CLI::Option*> opts) {
    for (const auto* o : opts)
      if (o->count() > 0) return true;
    return false;
  };
  if (!any_given({maxside_opt1, maxside_opt2, maxside_opt3, maxside_opt4}))
    apply(cfg, nullptr, "max_side", s.max_side);
  if (!any_given({run_opt1, run_opt2, run_opt3})) apply(cfg, nullptr, "run", s.run);

  s.cnn.validate();
  s.train.seed = g.seed;
  s.train.threads = g.threads;
  s.train.validate();
  s.detector.validate();
  s.scene.seed = g.seed;
  s.relight.seed = g.seed;
  const fs::path out_dir(g.output_dir);

  PipelineConfig pipeline;
  pipeline.detector = s.detector;
  pipeline.mode = parse_mode(s.mode);
  pipeline.exposure = parse_exposure(s.exposure);
  pipeline.threads = g.threads;

  // estimate / correct ------------------------------------------------------
  if (estimate->parsed() || correct->parsed()) {
    const LinearImage img = load_image(image_path);
    fs::create_directories(out_dir);
    json result;
    LinearImage corrected;
    if (!method.empty()) {
      const Illuminant e = method == "DN"       ? Illuminant::neutral()
                           : method == "custom" ? estimate_minkowski(img, custom)
                                                : run_named(img, method);
      result = {{"method", method}, {"decision", "single"}, {"illuminant", illum_json(e)}};
      if (correct->parsed()) corrected = von_kries_correct(img, e.rgb(), pipeline.exposure);
    } else {
      if (cnn_path.empty() || aggregator_path.empty())
        throw UsageError("the CNN pipeline needs --cnn and --aggregator (or use --method)");
      const CnnModel cnn = load_cnn(cnn_path);
      const AggregatorModel agg = load_aggregator(aggregator_path);
      std::optional<GroundTruth> gt;
      if (pipeline.mode == PipelineMode::Oracle) {
        const fs::path sidecar = illum_sidecar_path(image_path);
        if (!fs::exists(sidecar)) throw UsageError("oracle mode needs " + sidecar.string());
        gt = load_ground_truth(sidecar);
      }
      pipeline.correct = correct->parsed();
      const PipelineResult r = run_pipeline(img, cnn, agg, pipeline, gt ? &*gt : nullptr);
      result = {{"mode", mode_name(pipeline.mode)}, {"decision", r.multiple ? "multiple" : "single"}};
      if (r.detection) result["detection"] = detection_json(*r.detection);
      if (r.global) {
        result["illuminant"] = illum_json(*r.global);
      } else {
        save_pfm(out_dir / "estimate_map.pfm", r.field);
        result["illuminant_map"] = "estimate_map.pfm";
      }
      corrected = r.corrected;
    }
    if (correct->parsed()) {
      const fs::path target = output_file.empty() ? out_dir / "corrected.pfm" : fs::path(output_file);
      save_image_auto(target, corrected);
      result["output"] = target.string();
    }
    write_json_file(out_dir / (correct->parsed() ? "correct.json" : "estimate.json"), result);
    std::cout << result.dump(2) << '\n';
    return 0;
  }

  if (detect->parsed()) {
    const LinearImage img = load_image(image_path);
    const CnnModel cnn = load_cnn(cnn_path);
    const Detection d = detect_multiple(estimate_map(cnn, img, g.threads), s.detector);
    json result = detection_json(d);
    fs::create_directories(out_dir);
    // Row ib of the dump is b/g cell ib, top to bottom.
    std::vector<float> density(d.grid.values.begin(), d.grid.values.end());
    save_pfm_gray(out_dir / "density.pfm", d.grid.resolution, d.grid.resolution, density);
    result["density_grid"] = {{"file", "density.pfm"},
                              {"r_over_g", {d.grid.r_min, d.grid.r_max}},
                              {"b_over_g", {d.grid.b_min, d.grid.b_max}}};
    write_json_file(out_dir / "detection.json", result);
    std::cout << result.dump(2) << '\n';
    return 0;
  }

  if (train_cnn_cmd->parsed()) {
    const DatasetIndex index = load_index(data_dir);
    const FoldSplit split = three_folds(index)[static_cast<std::size_t>(s.run)];
    const auto training = load_labeled(index, split.train, s.max_side);
    const auto validation = load_labeled(index, split.validation, s.max_side);
    const TrainResult result = train_cnn(training, validation, s.cnn, s.train, [](const EpochReport& e) {
      std::fprintf(stderr, "epoch %d  lr %.5g  train %.6f  val %.6f  val median %.3f deg\n", e.epoch,
                   e.learning_rate, e.train_loss, e.validation_loss, e.validation_median_angle);
    });
    fs::create_directories(out_dir);
    save_cnn(out_dir / "cnn.bin", result.model);
    json meta = training_metadata(s.train, result);
    meta["run"] = s.run;
    meta["data"] = index.root.string();
    write_json_file(out_dir / "cnn.json", meta);
    std::cout << (out_dir / "cnn.bin").string() << '\n';
    return 0;
  }

  if (train_agg->parsed()) {
    const DatasetIndex index = load_index(data_dir);
    const FoldSplit split = three_folds(index)[static_cast<std::size_t>(s.run)];
    const CnnModel cnn = load_cnn(cnn_path);
    const auto training = aggregator_samples(cnn, index, split.train, s.max_side, s.pooling, g.threads);
    const auto validation = aggregator_samples(cnn, index, split.validation, s.max_side, s.pooling, g.threads);
    const AggregatorModel model = fit_aggregator(training, validation, s.grid, s.pooling);
    fs::create_directories(out_dir);
    save_aggregator(out_dir / "aggregator.bin", model);
    json meta = aggregator_metadata(model);
    meta["run"] = s.run;
    write_json_file(out_dir / "aggregator.json", meta);
    std::cout << (out_dir / "aggregator.bin").string() << '\n';
    return 0;
  }

  if (gen->parsed()) {
    const DatasetIndex index = write_scene_dataset(out_dir, s.scene, s.count, g.threads);
    std::cout << index.entries.size() << " scenes written to " << index.root.string() << '\n';
    return 0;
  }

  if (relight_cmd->parsed()) {
    const DatasetIndex source = load_index(data_dir);
    const DatasetIndex index = write_relit_dataset(out_dir, source, s.relight, g.threads);
    std::cout << index.entries.size() << " relit images written to " << index.root.string() << '\n';
    return 0;
  }

  if (eval->parsed()) {
    const DatasetIndex index = load_index(data_dir);
    std::optional<CnnModel> cnn;
    std::optional<AggregatorModel> agg;
    if (!cnn_path.empty()) cnn = load_cnn(cnn_path);
    if (!aggregator_path.empty()) agg = load_aggregator(aggregator_path);
    std::vector<std::size_t> subset;
    if (s.run >= 0) subset = three_folds(index)[static_cast<std::size_t>(s.run)].test;
    EvaluationConfig ec;
    ec.pipeline = pipeline;
    ec.pipeline.correct = false;
    ec.methods = s.methods;
    ec.max_side = s.max_side;
    ec.threads = g.threads;
    const EvaluationReport report =
        evaluate(index, subset, ec, cnn ? &*cnn : nullptr, agg ? &*agg : nullptr);
    write_report(out_dir, report);
    std::printf("%-12s %9s %9s %9s %9s\n", "method", "median", "mean", "pct90", "max");
    for (std::size_t m = 0; m < report.methods.size(); ++m) {
      const ErrorStats& st = report.stats[m];
      std::printf("%-12s %9.3f %9.3f %9.3f %9.3f\n", report.methods[m].c_str(), st.median, st.mean,
                  st.pct90, st.max);
    }
    return 0;
  }

  if (inspect->parsed()) {
    const CnnModel cnn = load_cnn(cnn_path);
    const DatasetIndex index = load_index(data_dir);
    std::vector<Patch> patches;
    std::vector<std::size_t> source;
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
      LinearImage img = load_entry(index.entries[i], s.max_side).image;
      for (auto& p : extract_patches(img, cnn.config.patch_size, cnn.config.patch_size)) {
        if (!p.valid) continue;
        patches.push_back(std::move(p));
        source.push_back(i);
      }
    }
    const auto top = top_activating_patches(cnn, patches, unit, top_k);
    const int ps = cnn.config.patch_size;
    LinearImage montage(ps * static_cast<int>(top.size()), ps);
    json list = json::array();
    for (std::size_t t = 0; t < top.size(); ++t) {
      const Patch& p = patches[top[t].index];
      const Patch shown = preprocess_patch(p).patch;
      for (int y = 0; y < ps; ++y)
        for (int x = 0; x < ps; ++x)
          for (int c = 0; c < 3; ++c)
            montage.at(static_cast<int>(t) * ps + x, y, c) = static_cast<float>(shown.at(x, y, c));
      list.push_back({{"image", fs::relative(index.entries[source[top[t].index]].image, index.root).generic_string()},
                      {"x", p.x},
                      {"y", p.y},
                      {"activation", top[t].value}});
    }
    fs::create_directories(out_dir);
    const std::string stem = "unit_" + std::to_string(unit);
    if (!top.empty()) save_png(out_dir / (stem + "_top.png"), montage, 8);
    write_json_file(out_dir / (stem + "_top.json"), {{"unit", unit}, {"patches", list}});
    std::cout << list.dump(2) << '\n';
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
