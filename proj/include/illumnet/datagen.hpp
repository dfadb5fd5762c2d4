#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "illumnet/image.hpp"
#include "illumnet/image_io.hpp"
#include "illumnet/random.hpp"

namespace illumnet {

/// Diagonal-model scene: random reflectance rectangles lit by one illuminant.
struct SyntheticSceneConfig {
  int width = 256;
  int height = 256;
  int num_surfaces = 20;
  double reflectance_min = 0.0;
  double reflectance_max = 1.0;
  /// Rectangle side range as fractions of the image side.
  double surface_min_size = 0.1;
  double surface_max_size = 0.5;
  /// Probability that a surface is achromatic (equal reflectance in R, G, B).
  double neutral_fraction = 0.0;
  double noise_std = 0.01;
  std::uint64_t seed = 1;

  void validate() const;
};

struct RenderedScene {
  LinearImage image;
  LinearImage reflectance;
  Illuminant illuminant = Illuminant::neutral();
};

/// A background surface plus `num_surfaces` axis-aligned rectangles, each
/// with per-channel reflectance uniform in the configured range (one shared
/// value for achromatic surfaces), multiplied
/// by the illuminant; Gaussian noise is added and the result clamped at zero.
RenderedScene render_scene(const SyntheticSceneConfig& cfg, const Illuminant& illuminant);

/// Illuminant drawn along a warm-to-cool chromaticity locus,
/// (R/G, B/G) from (0.75, 0.35) to (0.40, 0.80), with Gaussian jitter of
/// std `jitter` on each coordinate.
Illuminant sample_locus_illuminant(Rng& rng, double jitter = 0.02);

/// `count` locus illuminants with pairwise angles of at least
/// `min_angle_deg`. Throws DataError after 1000 failed draws in a row.
std::vector<Illuminant> sample_illuminant_pool(Rng& rng, std::size_t count, double min_angle_deg);

struct RelightConfig {
  int num_illuminants = 2;
  /// Minimum center distance as a fraction of min(width, height).
  double min_separation = 1.0 / 3.0;
  /// Ground-truth blending in pixels; <= 0 selects min(width, height) / 12.
  double smoothing_sigma = 0.0;
  int max_attempts = 1000;
  std::uint64_t seed = 1;

  void validate() const;
  double sigma_for(int width, int height) const;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct RelitImage {
  LinearImage image;
  LinearImage ground_truth;  ///< unit-norm illuminant per pixel
  LinearImage balanced;      ///< input divided by its own illuminant
  std::vector<Point> centers;
  std::vector<Illuminant> illuminants;  ///< the one assigned to each center
};

/// Balances `img` with `gt`, picks num_illuminants distinct entries of
/// `pool`, draws centers at least min_separation * min(w, h) apart, labels
/// pixels by nearest center, blurs the label-wise illuminant field and
/// normalizes it per pixel. The relit image is balanced * field.
/// Throws UsageError when the pool is too small and DataError when the
/// centers cannot be placed.
RelitImage relight(const LinearImage& img, const Illuminant& gt, std::span<const Illuminant> pool,
                   const RelightConfig& cfg);

// Datasets ------------------------------------------------------------------

struct DatasetEntry {
  std::filesystem::path image;  ///< absolute
  std::filesystem::path illum;  ///< absolute
  int fold = 0;
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;
};

/// Reads `<root>/index.json`: {"entries": [{"image", "illum", "fold"}]} with
/// paths relative to root. Throws DataError for missing files, folds outside
/// 0..2 or an empty fold.
DatasetIndex load_index(const std::filesystem::path& root);

void save_index(const DatasetIndex& index);

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Run r tests on fold r, validates on fold (r+1) mod 3 and trains on the rest.
std::array<FoldSplit, 3> three_folds(const DatasetIndex& index);

struct LoadedEntry {
  LinearImage image;
  GroundTruth ground_truth;
};

/// Loads an entry, resized so that max(width, height) <= max_side (0 keeps
/// the native size). A ground-truth field is resized alongside.
LoadedEntry load_entry(const DatasetEntry& entry, int max_side = 0);

/// Writes `count` rendered scenes under `dir` with folds i mod 3, an index
/// and a manifest. Scene i uses derive_seed(cfg.seed, i) for its surfaces and
/// illuminant.
DatasetIndex write_scene_dataset(const std::filesystem::path& dir, const SyntheticSceneConfig& cfg,
                                 std::size_t count, int threads = 1);

/// Relights every entry of `source` (keeping its fold) with illuminants
/// drawn from the source's global ground truths. Entry i uses
/// derive_seed(cfg.seed, i). Writes images, ground-truth maps, an index and a
/// manifest under `dir`.
DatasetIndex write_relit_dataset(const std::filesystem::path& dir, const DatasetIndex& source,
                                 const RelightConfig& cfg, int threads = 1);

nlohmann::json to_json(const SyntheticSceneConfig& cfg);
nlohmann::json to_json(const RelightConfig& cfg);

}  // namespace illumnet
