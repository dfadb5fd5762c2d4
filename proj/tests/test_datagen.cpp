#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "illumnet/classic.hpp"
#include "illumnet/datagen.hpp"
#include "illumnet/error.hpp"
#include "illumnet/image_io.hpp"
#include "illumnet/metrics.hpp"
#include "support.hpp"

using namespace illumnet;

namespace {

SyntheticSceneConfig clean(int side, std::uint64_t seed) {
  SyntheticSceneConfig cfg;
  cfg.width = cfg.height = side;
  cfg.noise_std = 0.0;
  cfg.seed = seed;
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Rgb pixel_of(const LinearImage& img, int x, int y) { return img.pixel(x, y); }

}  // namespace

TEST_CASE("achromatic light scales the reflectance") {
  const double s = 1.0 / std::sqrt(3.0);
  const RenderedScene scene = render_scene(clean(40, 3), Illuminant::neutral());
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(scene.image.at(x, y, c) == doctest::Approx(scene.reflectance.at(x, y, c) * s).epsilon(1e-6));
}

TEST_CASE("white reflectance shows the light color") {
  SyntheticSceneConfig cfg = clean(24, 5);
  cfg.reflectance_min = cfg.reflectance_max = 1.0;
  const Illuminant L = Illuminant::from_rgb({0.5, 1.0, 0.25});
  const RenderedScene scene = render_scene(cfg, L);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 24; ++x) CHECK(angular_error(pixel_of(scene.image, x, y), L.rgb()) < 1e-4);
}

TEST_CASE("noise is clamped and surfaces can be neutral") {
  SyntheticSceneConfig cfg = clean(32, 9);
  cfg.noise_std = 0.3;
  const RenderedScene noisy = render_scene(cfg, Illuminant::neutral());
  CHECK(noisy.image.is_valid());
  cfg.noise_std = 0.0;
  cfg.neutral_fraction = 1.0;
  cfg.reflectance_min = 0.2;
  const RenderedScene gray = render_scene(cfg, Illuminant::neutral());
  for (int y = 0; y < 32; y += 3)
    for (int x = 0; x < 32; x += 3) {
      const Rgb r = pixel_of(gray.reflectance, x, y);
      CHECK(r[0] == r[1]);
      CHECK(r[1] == r[2]);
    }
}

TEST_CASE("gray world recovers the light on busy scenes") {
  SyntheticSceneConfig cfg = clean(128, 0);
  cfg.num_surfaces = 4000;
  cfg.surface_min_size = 0.02;
  cfg.surface_max_size = 0.05;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    cfg.seed = derive_seed(500, seed);
    Rng rng(seed);
    const Illuminant L = sample_locus_illuminant(rng);
    const RenderedScene scene = render_scene(cfg, L);
    worst = std::max(worst, angular_error(run_named(scene.image, "GW").rgb(), L.rgb()));
  }
  CHECK(worst < 5.0);
}

TEST_CASE("scene config validation and determinism") {
  SyntheticSceneConfig cfg;
  cfg.noise_std = -1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = SyntheticSceneConfig{};
  cfg.width = 0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = clean(30, 17);
  cfg.noise_std = 0.02;
  const Illuminant L = Illuminant::from_rgb({0.6, 0.7, 0.3});
  CHECK(render_scene(cfg, L).image == render_scene(cfg, L).image);
  cfg.seed = 18;
  CHECK_FALSE(render_scene(clean(30, 17), L).image == render_scene(cfg, L).image);
}

TEST_CASE("locus illuminants and pools") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const Illuminant L = sample_locus_illuminant(rng, 0.0);
    const double r = L[0] / L[1], b = L[2] / L[1];
    // On the segment from (0.75, 0.35) to (0.40, 0.80).
    const double s = (0.75 - r) / 0.35;
    CHECK(s >= -1e-9);
    CHECK(s <= 1.0 + 1e-9);
    CHECK(b == doctest::Approx(0.35 + 0.45 * s).epsilon(1e-9));
  }
  const auto pool = sample_illuminant_pool(rng, 4, 5.0);
  REQUIRE(pool.size() == 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(angular_error(pool[i].rgb(), pool[j].rgb()) >= 5.0);
  CHECK_THROWS_AS(sample_illuminant_pool(rng, 40, 30.0), DataError);
}

TEST_CASE("relight invariants") {
  const RenderedScene scene = render_scene(clean(96, 4), Illuminant::from_rgb({0.7, 0.8, 0.3}));
  Rng rng(2);
  const auto pool = sample_illuminant_pool(rng, 6, 4.0);
  for (int k = 2; k <= 4; ++k) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      RelightConfig cfg;
      cfg.num_illuminants = k;
      cfg.seed = seed;
      const RelitImage r = relight(scene.image, scene.illuminant, pool, cfg);
      REQUIRE(r.centers.size() == static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < r.centers.size(); ++i)
        for (std::size_t j = i + 1; j < r.centers.size(); ++j)
          CHECK(std::hypot(r.centers[i].x - r.centers[j].x, r.centers[i].y - r.centers[j].y) >= 96.0 / 3.0);
      std::set<std::size_t> used;
      for (const Illuminant& L : r.illuminants)
        used.insert(static_cast<std::size_t>(std::find(pool.begin(), pool.end(), L) - pool.begin()));
      CHECK(used.size() == static_cast<std::size_t>(k));
      CHECK(*used.rbegin() < pool.size());

      // Unit ground truth, and dividing it out gives back the balanced image.
      const LinearImage back = von_kries_correct(r.image, r.ground_truth);
      double worst = 0.0;
      for (int y = 0; y < 96; ++y)
        for (int x = 0; x < 96; ++x) {
          CHECK(norm(pixel_of(r.ground_truth, x, y)) == doctest::Approx(1.0).epsilon(1e-6));
          for (int c = 0; c < 3; ++c) {
            const double want = r.balanced.at(x, y, c);
            if (want > 0.0) worst = std::max(worst, std::abs(back.at(x, y, c) - want) / want);
          }
        }
      CHECK(worst < 1e-5);
    }
  }
}

TEST_CASE("balanced image is the input divided by its light") {
  const Illuminant L = Illuminant::from_rgb({0.7, 0.8, 0.3});
  const RenderedScene scene = render_scene(clean(48, 6), L);
  const auto pool = std::vector<Illuminant>{Illuminant::neutral(), L};
  const RelitImage r = relight(scene.image, L, pool, RelightConfig{});
  const LinearImage expect = von_kries_correct(scene.image, Rgb{L[0], L[1], L[2]});
  CHECK(r.balanced == expect);
}

TEST_CASE("identical pool entries give a single light") {
  const Illuminant L = Illuminant::from_rgb({0.3, 0.6, 0.5});
  const RenderedScene scene = render_scene(clean(64, 8), Illuminant::neutral());
  const std::vector<Illuminant> pool{L, L};
  const RelitImage r = relight(scene.image, Illuminant::neutral(), pool, RelightConfig{});
  for (int y = 0; y < 64; y += 5)
    for (int x = 0; x < 64; x += 5) CHECK(angular_error(pixel_of(r.ground_truth, x, y), L.rgb()) < 1e-4);
}

TEST_CASE("ground truth at a center keeps that center's light") {
  const RenderedScene scene = render_scene(clean(256, 10), Illuminant::neutral());
  Rng rng(4);
  const auto pool = sample_illuminant_pool(rng, 3, 8.0);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    RelightConfig cfg;
    cfg.num_illuminants = 3;
    cfg.smoothing_sigma = 4.0;
    cfg.seed = seed;
    const RelitImage r = relight(scene.image, Illuminant::neutral(), pool, cfg);
    for (std::size_t i = 0; i < r.centers.size(); ++i) {
      const int x = static_cast<int>(r.centers[i].x);
      const int y = static_cast<int>(r.centers[i].y);
      CHECK(angular_error(pixel_of(r.ground_truth, x, y), r.illuminants[i].rgb()) < 0.1);
    }
  }
}

TEST_CASE("relight errors and config") {
  const LinearImage img = testing::random_image(40, 40, 1);
  const std::vector<Illuminant> pool{Illuminant::neutral(), Illuminant::from_rgb({1, 0.5, 0.2})};
  RelightConfig cfg;
  cfg.num_illuminants = 3;
  CHECK_THROWS_AS(relight(img, Illuminant::neutral(), pool, cfg), UsageError);
  cfg = RelightConfig{};
  cfg.min_separation = 2.0;
  CHECK_THROWS_AS(relight(img, Illuminant::neutral(), pool, cfg), DataError);
  cfg = RelightConfig{};
  cfg.num_illuminants = 1;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  cfg = RelightConfig{};
  cfg.min_separation = 0.0;
  CHECK_THROWS_AS(cfg.validate(), UsageError);
  CHECK(RelightConfig{}.sigma_for(240, 120) == doctest::Approx(10.0));
  cfg.smoothing_sigma = 3.0;
  CHECK(cfg.sigma_for(240, 120) == 3.0);
}

TEST_CASE("relight is deterministic") {
  const LinearImage img = testing::random_image(64, 48, 2, 0.1, 1.0);
  Rng rng(3);
  const auto pool = sample_illuminant_pool(rng, 5, 3.0);
  RelightConfig cfg;
  cfg.num_illuminants = 3;
  cfg.seed = 99;
  const RelitImage a = relight(img, Illuminant::neutral(), pool, cfg);
  const RelitImage b = relight(img, Illuminant::neutral(), pool, cfg);
  CHECK(a.image == b.image);
  CHECK(a.ground_truth == b.ground_truth);
}

TEST_CASE("scene datasets, folds and relit datasets") {
  testing::TempDir dir("datagen");
  SyntheticSceneConfig cfg = clean(40, 21);
  cfg.noise_std = 0.01;
  const DatasetIndex written = write_scene_dataset(dir / "scenes", cfg, 9, 2);
  CHECK(std::filesystem::exists(dir / "scenes" / "manifest.json"));
  const DatasetIndex idx = load_index(dir / "scenes");
  REQUIRE(idx.entries.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) CHECK(idx.entries[i].fold == static_cast<int>(i % 3));

  const auto runs = three_folds(idx);
  // Run 0: train fold 2, validation fold 1, test fold 0.
  for (std::size_t i : runs[0].test) CHECK(idx.entries[i].fold == 0);
  for (std::size_t i : runs[0].validation) CHECK(idx.entries[i].fold == 1);
  for (std::size_t i : runs[0].train) CHECK(idx.entries[i].fold == 2);
  std::vector<int> tested(9, 0);
  for (const auto& run : runs) {
    CHECK(run.train.size() + run.validation.size() + run.test.size() == 9);
    for (std::size_t i : run.test) ++tested[i];
  }
  for (int n : tested) CHECK(n == 1);

  const LoadedEntry e = load_entry(idx.entries[0]);
  CHECK(e.image.width() == 40);
  REQUIRE(std::holds_alternative<Illuminant>(e.ground_truth));

  // The same config rendered with another thread count gives identical files.
  write_scene_dataset(dir / "again", cfg, 9, 1);
  for (const char* name : {"scene_0000.pfm", "scene_0004.pfm", "scene_0008.pfm.illum.json"})
    CHECK(slurp(dir / "scenes" / name) == slurp(dir / "again" / name));

  RelightConfig rc;
  rc.seed = 5;
  write_relit_dataset(dir / "relit", idx, rc, 2);
  const DatasetIndex relit = load_index(dir / "relit");
  REQUIRE(relit.entries.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) CHECK(relit.entries[i].fold == idx.entries[i].fold);
  const LoadedEntry small = load_entry(relit.entries[3], 20);
  CHECK(std::max(small.image.width(), small.image.height()) == 20);
  REQUIRE(std::holds_alternative<LinearImage>(small.ground_truth));
  const auto& field = std::get<LinearImage>(small.ground_truth);
  CHECK(field.width() == small.image.width());
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x) CHECK(norm(pixel_of(field, x, y)) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("index errors") {
  testing::TempDir dir("index");
  write_scene_dataset(dir.path(), clean(24, 1), 3);
  const auto sidecar = dir / "scene_0001.pfm.illum.json";
  std::filesystem::remove(sidecar);
  try {
    load_index(dir.path());
    FAIL("missing sidecar was accepted");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("scene_0001.pfm.illum.json") != std::string::npos);
  }

  CHECK_THROWS_AS(write_scene_dataset(dir / "tiny", clean(24, 1), 2), UsageError);

  testing::TempDir bad("index2");
  write_scene_dataset(bad.path(), clean(24, 1), 3);
  auto j = nlohmann::json::parse(slurp(bad / "index.json"));
  j["entries"][2]["fold"] = 1;  // fold 2 becomes empty
  std::ofstream(bad / "index.json") << j.dump();
  CHECK_THROWS_AS(load_index(bad.path()), DataError);
  j["entries"][2]["fold"] = 5;
  std::ofstream(bad / "index.json") << j.dump();
  CHECK_THROWS_AS(load_index(bad.path()), DataError);
  CHECK_THROWS_AS(load_index(bad / "nowhere"), DataError);
}
