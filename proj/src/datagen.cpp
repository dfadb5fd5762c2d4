#include "illumnet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "illumnet/error.hpp"
#include "illumnet/metrics.hpp"
#include "illumnet/parallel.hpp"

namespace fs = std::filesystem;

namespace illumnet {

void SyntheticSceneConfig::validate() const {
  if (width < 1 || height < 1) throw UsageError("scene dimensions must be positive");
  if (num_surfaces < 0) throw UsageError("num_surfaces must be >= 0");
  if (!(reflectance_min >= 0.0 && reflectance_min <= reflectance_max && reflectance_max <= 1.0))
    throw UsageError("reflectance range must satisfy 0 <= min <= max <= 1");
  if (!(surface_min_size > 0.0 && surface_min_size <= surface_max_size && surface_max_size <= 1.0))
    throw UsageError("surface size range must satisfy 0 < min <= max <= 1");
  if (!(neutral_fraction >= 0.0 && neutral_fraction <= 1.0))
    throw UsageError("neutral_fraction must be in [0, 1]");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw UsageError("noise_std must be >= 0");
}

RenderedScene render_scene(const SyntheticSceneConfig& cfg, const Illuminant& illuminant) {
  cfg.validate();
  Rng rng(cfg.seed);
  auto draw_reflectance = [&] {
    Rgb s;
    if (cfg.neutral_fraction > 0.0 && rng.uniform() < cfg.neutral_fraction) {
      s.fill(rng.uniform(cfg.reflectance_min, cfg.reflectance_max));
      return s;
    }
    for (double& v : s) v = rng.uniform(cfg.reflectance_min, cfg.reflectance_max);
    return s;
  };

  RenderedScene out;
  out.illuminant = illuminant;
  out.reflectance = LinearImage(cfg.width, cfg.height);
  const Rgb background = draw_reflectance();
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) out.reflectance.set_pixel(x, y, background);

  for (int s = 0; s < cfg.num_surfaces; ++s) {
    const int rw = std::max(1, static_cast<int>(rng.uniform(cfg.surface_min_size, cfg.surface_max_size) * cfg.width));
    const int rh = std::max(1, static_cast<int>(rng.uniform(cfg.surface_min_size, cfg.surface_max_size) * cfg.height));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.width - rw + 1)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.height - rh + 1)));
    const Rgb color = draw_reflectance();
    for (int y = y0; y < y0 + rh; ++y)
      for (int x = x0; x < x0 + rw; ++x) out.reflectance.set_pixel(x, y, color);
  }

  out.image = LinearImage(cfg.width, cfg.height);
  const Rgb& light = illuminant.rgb();
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = static_cast<double>(out.reflectance.at(x, y, c)) * light[c];
        if (cfg.noise_std > 0.0) v += cfg.noise_std * rng.normal();
        out.image.at(x, y, c) = static_cast<float>(std::max(0.0, v));
      }
    }
  }
  return out;
}

Illuminant sample_locus_illuminant(Rng& rng, double jitter) {
  const double t = rng.uniform();
  const double r = 0.75 + t * (0.40 - 0.75) + jitter * rng.normal();
  const double b = 0.35 + t * (0.80 - 0.35) + jitter * rng.normal();
  return Illuminant::from_rgb({std::max(r, 0.05), 1.0, std::max(b, 0.05)});
}

std::vector<Illuminant> sample_illuminant_pool(Rng& rng, std::size_t count, double min_angle_deg) {
  std::vector<Illuminant> pool;
  int failures = 0;
  while (pool.size() < count) {
    const Illuminant candidate = sample_locus_illuminant(rng);
    const bool separated = std::all_of(pool.begin(), pool.end(), [&](const Illuminant& p) {
      return angular_error(p.rgb(), candidate.rgb()) >= min_angle_deg;
    });
    if (separated) {
      pool.push_back(candidate);
      failures = 0;
    } else if (++failures >= 1000) {
      throw DataError("cannot draw " + std::to_string(count) + " illuminants " +
                      std::to_string(min_angle_deg) + " degrees apart");
    }
  }
  return pool;
}

void RelightConfig::validate() const {
  if (num_illuminants < 2) throw UsageError("num_illuminants must be >= 2");
  if (!(min_separation > 0.0)) throw UsageError("min_separation must be > 0");
  if (!std::isfinite(smoothing_sigma)) throw UsageError("smoothing_sigma must be finite");
  if (max_attempts < 1) throw UsageError("max_attempts must be >= 1");
}

double RelightConfig::sigma_for(int width, int height) const {
  return smoothing_sigma > 0.0 ? smoothing_sigma : std::min(width, height) / 12.0;
}

RelitImage relight(const LinearImage& img, const Illuminant& gt, std::span<const Illuminant> pool,
                   const RelightConfig& cfg) {
  cfg.validate();
  if (pool.size() < static_cast<std::size_t>(cfg.num_illuminants))
    throw UsageError("illuminant pool has " + std::to_string(pool.size()) + " entries, need " +
                     std::to_string(cfg.num_illuminants));
  if (img.empty()) throw DataError("cannot relight an empty image");

  Rng rng(cfg.seed);
  const int w = img.width();
  const int h = img.height();
  const std::size_t k = static_cast<std::size_t>(cfg.num_illuminants);

  RelitImage out;
  // Partial Fisher-Yates over pool indices: k distinct entries.
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(order.size() - i);
    std::swap(order[i], order[j]);
    out.illuminants.push_back(pool[order[i]]);
  }

  const double min_distance = cfg.min_separation * std::min(w, h);
  bool placed = false;
  for (int attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
    out.centers.clear();
    for (std::size_t i = 0; i < k; ++i) out.centers.push_back({rng.uniform(0.0, w), rng.uniform(0.0, h)});
    placed = true;
    for (std::size_t i = 0; i < k && placed; ++i)
      for (std::size_t j = i + 1; j < k && placed; ++j)
        placed = std::hypot(out.centers[i].x - out.centers[j].x,
                            out.centers[i].y - out.centers[j].y) >= min_distance;
  }
  if (!placed)
    throw DataError("cannot place " + std::to_string(k) + " centers " +
                    std::to_string(min_distance) + " px apart in a " + std::to_string(w) + "x" +
                    std::to_string(h) + " image");

  LinearImage field(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t label = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < k; ++i) {
        const double d = std::hypot(x + 0.5 - out.centers[i].x, y + 0.5 - out.centers[i].y);
        if (d < best) {
          best = d;
          label = i;
        }
      }
      field.set_pixel(x, y, out.illuminants[label].rgb());
    }
  }
  field = gaussian_blur(field, cfg.sigma_for(w, h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Rgb v = field.pixel(x, y);
      const double n = norm(v);
      field.set_pixel(x, y, {v[0] / n, v[1] / n, v[2] / n});
    }
  }

  out.balanced = von_kries_correct(img, gt.rgb());
  out.image = out.balanced;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) *= field.at(x, y, c);
  out.ground_truth = std::move(field);
  return out;
}

// Datasets ------------------------------------------------------------------

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string numbered(const std::string& stem, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return stem + "_" + digits;
}

}  // namespace

DatasetIndex load_index(const fs::path& root) {
  const nlohmann::json j = read_json(root / "index.json");
  DatasetIndex index;
  index.root = fs::absolute(root);
  std::array<std::size_t, 3> fold_sizes{};
  try {
    for (const auto& e : j.at("entries")) {
      DatasetEntry entry;
      entry.image = index.root / e.at("image").get<std::string>();
      entry.illum = index.root / e.at("illum").get<std::string>();
      entry.fold = e.at("fold").get<int>();
      if (entry.fold < 0 || entry.fold > 2)
        throw DataError("fold must be 0, 1 or 2 for " + entry.image.string());
      if (!fs::exists(entry.image)) throw DataError("missing image: " + entry.image.string());
      if (!fs::exists(entry.illum)) throw DataError("missing ground truth: " + entry.illum.string());
      ++fold_sizes[static_cast<std::size_t>(entry.fold)];
      index.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed index " + (root / "index.json").string() + ": " + e.what());
  }
  for (int f = 0; f < 3; ++f)
    if (fold_sizes[f] == 0) throw DataError("fold " + std::to_string(f) + " is empty in " + root.string());
  return index;
}

void save_index(const DatasetIndex& index) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : index.entries) {
    entries.push_back({{"image", fs::relative(e.image, index.root).generic_string()},
                       {"illum", fs::relative(e.illum, index.root).generic_string()},
                       {"fold", e.fold}});
  }
  write_json(index.root / "index.json", {{"entries", entries}});
}

std::array<FoldSplit, 3> three_folds(const DatasetIndex& index) {
  std::array<FoldSplit, 3> runs;
  for (int r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
      const int fold = index.entries[i].fold;
      if (fold == r)
        runs[r].test.push_back(i);
      else if (fold == (r + 1) % 3)
        runs[r].validation.push_back(i);
      else
        runs[r].train.push_back(i);
    }
  }
  return runs;
}

LoadedEntry load_entry(const DatasetEntry& entry, int max_side) {
  LoadedEntry out{load_image(entry.image), load_ground_truth(entry.illum)};
  if (auto* field = std::get_if<LinearImage>(&out.ground_truth)) {
    if (field->width() != out.image.width() || field->height() != out.image.height())
      throw DataError("ground-truth map size differs from " + entry.image.string());
  }
  if (max_side > 0 && std::max(out.image.width(), out.image.height()) > max_side) {
    out.image = resize_max_side(out.image, max_side);
    if (auto* field = std::get_if<LinearImage>(&out.ground_truth)) {
      LinearImage resized = resize_max_side(*field, max_side);
      for (int y = 0; y < resized.height(); ++y) {
        for (int x = 0; x < resized.width(); ++x) {
          const Rgb v = resized.pixel(x, y);
          const double n = norm(v);
          if (n > 0.0) resized.set_pixel(x, y, {v[0] / n, v[1] / n, v[2] / n});
        }
      }
      *field = std::move(resized);
    }
  }
  return out;
}

nlohmann::json to_json(const SyntheticSceneConfig& cfg) {
  return {{"width", cfg.width},
          {"height", cfg.height},
          {"num_surfaces", cfg.num_surfaces},
          {"reflectance_min", cfg.reflectance_min},
          {"reflectance_max", cfg.reflectance_max},
          {"surface_min_size", cfg.surface_min_size},
          {"surface_max_size", cfg.surface_max_size},
          {"neutral_fraction", cfg.neutral_fraction},
          {"noise_std", cfg.noise_std},
          {"seed", cfg.seed}};
}

nlohmann::json to_json(const RelightConfig& cfg) {
  return {{"num_illuminants", cfg.num_illuminants},
          {"min_separation", cfg.min_separation},
          {"smoothing_sigma", cfg.smoothing_sigma},
          {"max_attempts", cfg.max_attempts},
          {"seed", cfg.seed}};
}

DatasetIndex write_scene_dataset(const fs::path& dir, const SyntheticSceneConfig& cfg,
                                 std::size_t count, int threads) {
  cfg.validate();
  if (count < 3) throw UsageError("a dataset needs at least 3 images (one per fold)");
  fs::create_directories(dir);
  DatasetIndex index;
  index.root = fs::absolute(dir);
  index.entries.resize(count);
  parallel_for(count, threads, [&](std::size_t i) {
    SyntheticSceneConfig scene = cfg;
    scene.seed = derive_seed(cfg.seed, i);
    Rng light_rng(derive_seed(scene.seed, 0));
    const RenderedScene rendered = render_scene(scene, sample_locus_illuminant(light_rng));
    const fs::path image = index.root / (numbered("scene", i) + ".pfm");
    save_pfm(image, rendered.image);
    save_ground_truth(illum_sidecar_path(image), rendered.illuminant);
    index.entries[i] = {image, illum_sidecar_path(image), static_cast<int>(i % 3)};
  });
  save_index(index);
  write_json(index.root / "manifest.json",
             {{"generator", "scenes"}, {"count", count}, {"config", to_json(cfg)}});
  return index;
}

DatasetIndex write_relit_dataset(const fs::path& dir, const DatasetIndex& source,
                                 const RelightConfig& cfg, int threads) {
  cfg.validate();
  std::vector<Illuminant> pool;
  for (const auto& e : source.entries) {
    const GroundTruth gt = load_ground_truth(e.illum);
    if (const auto* illum = std::get_if<Illuminant>(&gt)) pool.push_back(*illum);
  }
  if (pool.size() != source.entries.size())
    throw DataError("relighting needs a single-illuminant ground truth for every source image");

  fs::create_directories(dir);
  DatasetIndex index;
  index.root = fs::absolute(dir);
  index.entries.resize(source.entries.size());
  parallel_for(source.entries.size(), threads, [&](std::size_t i) {
    RelightConfig local = cfg;
    local.seed = derive_seed(cfg.seed, i);
    const LinearImage img = load_image(source.entries[i].image);
    const RelitImage relit = relight(img, pool[i], pool, local);
    const fs::path image = index.root / (numbered("relit", i) + ".pfm");
    const fs::path gt_map = index.root / (numbered("relit", i) + ".gt.pfm");
    save_pfm(image, relit.image);
    if (relit.image.has_mask())
      save_mask_png(mask_sidecar_path(image), *relit.image.mask(), img.width(), img.height());
    save_ground_truth(illum_sidecar_path(image), relit.ground_truth, gt_map);
    index.entries[i] = {image, illum_sidecar_path(image), source.entries[i].fold};
  });
  save_index(index);
  write_json(index.root / "manifest.json", {{"generator", "relight"},
                                            {"source", source.root.string()},
                                            {"count", source.entries.size()},
                                            {"config", to_json(cfg)}});
  return index;
}

}  // namespace illumnet
