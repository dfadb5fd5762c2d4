#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "illumnet/error.hpp"
#include "illumnet/image.hpp"
#include "illumnet/image_io.hpp"
#include "support.hpp"

using namespace illumnet;
using testing::constant_image;
using testing::random_image;
using testing::TempDir;

TEST_CASE("illuminant normalization") {
  const Illuminant i = Illuminant::from_rgb({3.0, 4.0, 0.0});
  CHECK(i[0] == doctest::Approx(0.6));
  CHECK(i[1] == doctest::Approx(0.8));
  CHECK(norm(i.rgb()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(Illuminant::from_rgb({0.0, 0.0, 0.0}), NumericError);
  CHECK_THROWS_AS(Illuminant::from_rgb({-1.0, 1.0, 1.0}), NumericError);
  CHECK_THROWS_AS(Illuminant::from_rgb({NAN, 1.0, 1.0}), NumericError);
}

TEST_CASE("mask must match the image size") {
  LinearImage img(4, 3);
  CHECK_THROWS_AS(img.set_mask(std::vector<std::uint8_t>(5, 0)), DataError);
  img.set_mask(std::vector<std::uint8_t>(12, 0));
  CHECK(img.unmasked_count() == 12);
}

TEST_CASE("extract_patches geometry") {
  SUBCASE("64x64 gives four tiles in row-major order") {
    const auto patches = extract_patches(LinearImage(64, 64), 32, 32);
    REQUIRE(patches.size() == 4);
    CHECK((patches[0].x == 0 && patches[0].y == 0));
    CHECK((patches[1].x == 32 && patches[1].y == 0));
    CHECK((patches[2].x == 0 && patches[2].y == 32));
    CHECK((patches[3].x == 32 && patches[3].y == 32));
  }
  SUBCASE("partial border patches are discarded") {
    CHECK(extract_patches(LinearImage(33, 33), 32, 32).size() == 1);
  }
  SUBCASE("fully masked image flags every patch") {
    LinearImage img(64, 64);
    img.set_mask(std::vector<std::uint8_t>(64 * 64, 1));
    for (const auto& p : extract_patches(img, 32, 32)) CHECK_FALSE(p.valid);
  }
  SUBCASE("a single masked pixel invalidates only its patch") {
    LinearImage img(64, 64);
    std::vector<std::uint8_t> mask(64 * 64, 0);
    mask[40 * 64 + 5] = 1;
    img.set_mask(mask);
    const auto patches = extract_patches(img, 32, 32);
    CHECK(patches[0].valid);
    CHECK(patches[1].valid);
    CHECK_FALSE(patches[2].valid);
    CHECK(patches[3].valid);
  }
  SUBCASE("errors") {
    CHECK_THROWS(extract_patches(LinearImage(16, 64), 32, 32));
    CHECK_THROWS(extract_patches(LinearImage(64, 64), 32, 0));
  }
}

TEST_CASE("non-overlapping tiles partition the covered area") {
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(trial);
    const int w = 20 + static_cast<int>(rng.below(80));
    const int h = 20 + static_cast<int>(rng.below(80));
    const int s = 4 + static_cast<int>(rng.below(16));
    const auto patches = extract_patches(LinearImage(w, h), s, s);
    CHECK(patches.size() == static_cast<std::size_t>((w / s) * (h / s)));
    std::vector<int> cover(static_cast<std::size_t>(w) * h, 0);
    for (const auto& p : patches)
      for (int y = p.y; y < p.y + s; ++y)
        for (int x = p.x; x < p.x + s; ++x) ++cover[static_cast<std::size_t>(y) * w + x];
    for (int c : cover) CHECK(c <= 1);
  }
}

TEST_CASE("patch pixels copy the source") {
  const LinearImage img = random_image(40, 40, 3);
  const Patch p = extract_patch(img, 5, 7, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c) CHECK(p.at(x, y, c) == img.at(5 + x, 7 + y, c));
}

TEST_CASE("von Kries correction") {
  SUBCASE("achromatic light rescales by sqrt(3)") {
    const LinearImage img = random_image(8, 8, 1);
    const LinearImage out = von_kries_correct(img, Illuminant::neutral().rgb());
    for (std::size_t i = 0; i < img.data().size(); ++i)
      CHECK(out.data()[i] == doctest::Approx(img.data()[i] * std::sqrt(3.0)).epsilon(1e-6));
  }
  SUBCASE("per-channel division") {
    const LinearImage img = constant_image(1, 1, {0.2, 0.4, 0.6});
    const LinearImage out = von_kries_correct(img, Rgb{0.5, 1.0, 0.75});
    CHECK(out.at(0, 0, 0) == doctest::Approx(0.4));
    CHECK(out.at(0, 0, 1) == doctest::Approx(0.4));
    CHECK(out.at(0, 0, 2) == doctest::Approx(0.8));
  }
  SUBCASE("zero channel is rejected") {
    CHECK_THROWS_AS(von_kries_correct(LinearImage(2, 2), Rgb{1.0, 0.0, 1.0}), NumericError);
  }
  SUBCASE("green-preserving exposure keeps the green channel") {
    const LinearImage img = random_image(6, 6, 2);
    const LinearImage out = von_kries_correct(img, Rgb{0.5, 0.7, 0.3}, Exposure::PreserveGreen);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) CHECK(out.at(x, y, 1) == doctest::Approx(img.at(x, y, 1)));
  }
  SUBCASE("recovers a diagonally lit image") {
    const LinearImage base = random_image(16, 16, 9, 0.05, 1.0);
    const Illuminant light = Illuminant::from_rgb({0.8, 0.5, 0.2});
    LinearImage lit = base;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) lit.at(x, y, c) = static_cast<float>(base.at(x, y, c) * light[c]);
    const LinearImage back = von_kries_correct(lit, light.rgb());
    for (std::size_t i = 0; i < base.data().size(); ++i)
      CHECK(std::abs(back.data()[i] - base.data()[i]) / base.data()[i] < 1e-6);
  }
}

TEST_CASE("estimate map upsampling") {
  EstimateMap map(2, 1, 4);
  map.set(0, 0, Illuminant::from_rgb({1, 0.1, 0.1}));
  map.set(1, 0, Illuminant::from_rgb({0.1, 0.1, 1}));
  const LinearImage field = upsample_estimate_map(map, 8, 4);
  SUBCASE("cell centers reproduce cell values and pixels are unit norm") {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 8; ++x) CHECK(norm(field.pixel(x, y)) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(field.at(0, y, 0) == doctest::Approx(map.estimate(0, 0)[0]).epsilon(1e-6));
      CHECK(field.at(7, y, 2) == doctest::Approx(map.estimate(1, 0)[2]).epsilon(1e-6));
    }
  }
  SUBCASE("red decreases monotonically across the seam") {
    for (int x = 1; x < 8; ++x) CHECK(field.at(x, 0, 0) <= field.at(x - 1, 0, 0) + 1e-7f);
  }
  SUBCASE("invalid cells borrow the nearest valid one") {
    EstimateMap partial(2, 1, 4);
    partial.set(0, 0, Illuminant::from_rgb({1, 1, 0.5}));
    partial.invalidate(1, 0);
    const LinearImage f = upsample_estimate_map(partial, 8, 4);
    CHECK(f.at(7, 3, 2) == doctest::Approx(partial.estimate(0, 0)[2]).epsilon(1e-6));
  }
  SUBCASE("no valid cell") {
    EstimateMap empty(2, 2, 4);
    CHECK_THROWS_AS(upsample_estimate_map(empty, 8, 8), DataError);
  }
}

TEST_CASE("resize_max_side") {
  CHECK(resize_max_side(LinearImage(2400, 1600), 1200).width() == 1200);
  CHECK(resize_max_side(LinearImage(2400, 1600), 1200).height() == 800);
  const LinearImage small = random_image(60, 40, 5);
  CHECK(resize_max_side(small, 1200) == small);
  const LinearImage flat = constant_image(90, 30, {0.25, 0.5, 0.75});
  const LinearImage out = resize_max_side(flat, 45);
  CHECK(out.width() == 45);
  CHECK(out.height() == 15);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) CHECK(out.at(x, y, 2) == doctest::Approx(0.75).epsilon(1e-6));
  CHECK_THROWS(resize_max_side(flat, 0));
}

TEST_CASE("gaussian blur preserves constants and mass") {
  const LinearImage flat = constant_image(17, 11, {0.1, 0.2, 0.3});
  const LinearImage b = gaussian_blur(flat, 2.5);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 17; ++x) CHECK(b.at(x, y, 1) == doctest::Approx(0.2).epsilon(1e-6));
  double sum = 0.0;
  for (double t : gaussian_kernel(1.7, 5)) sum += t;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("PFM round trip is bit-exact, mask sidecar is honoured") {
  TempDir dir("pfm");
  LinearImage img = random_image(13, 7, 11, 0.0, 4.0);
  save_pfm(dir / "a.pfm", img);
  CHECK(load_image(dir / "a.pfm") == img);

  std::vector<std::uint8_t> mask(13 * 7, 0);
  mask[3] = 1;
  save_mask_png(mask_sidecar_path(dir / "a.pfm"), mask, 13, 7);
  const LinearImage masked = load_image(dir / "a.pfm");
  REQUIRE(masked.has_mask());
  CHECK(masked.masked(3, 0));
  CHECK_FALSE(masked.masked(4, 0));

  save_mask_png(mask_sidecar_path(dir / "a.pfm"), std::vector<std::uint8_t>(100, 0), 10, 10);
  CHECK_THROWS_AS(load_image(dir / "a.pfm"), DataError);
}

TEST_CASE("big-endian and grayscale PFM") {
  TempDir dir("pfm_be");
  {
    std::ofstream out(dir / "g.pfm", std::ios::binary);
    out << "Pf\n2 1\n1.0\n";
    const unsigned char be[8] = {0x3f, 0x00, 0x00, 0x00, 0x3e, 0x80, 0x00, 0x00};  // 0.5, 0.25
    out.write(reinterpret_cast<const char*>(be), 8);
  }
  const LinearImage g = load_image(dir / "g.pfm");
  CHECK(g.at(0, 0, 0) == 0.5f);
  CHECK(g.at(1, 0, 2) == 0.25f);
}

TEST_CASE("PNG loading") {
  TempDir dir("png");
  LinearImage img(3, 2);
  img.set_pixel(0, 0, {1.0, 0.0, 0.5});
  SUBCASE("16-bit full scale maps to 1") {
    save_png(dir / "a.png", img, 16);
    const LinearImage back = load_image(dir / "a.png");
    CHECK(back.at(0, 0, 0) == 1.0f);
    CHECK(back.at(0, 0, 1) == 0.0f);
    CHECK(back.at(0, 0, 2) == doctest::Approx(0.5).epsilon(1e-4));
  }
  SUBCASE("8-bit all-zero image") {
    save_png(dir / "z.png", LinearImage(4, 4), 8);
    const LinearImage back = load_image(dir / "z.png");
    for (float v : back.data()) CHECK(v == 0.0f);
  }
  SUBCASE("missing and corrupt files") {
    CHECK_THROWS_AS(load_image(dir / "missing.png"), DataError);
    std::ofstream(dir / "bad.png") << "not a png";
    CHECK_THROWS_AS(load_image(dir / "bad.png"), DataError);
  }
}

TEST_CASE("ground-truth sidecars") {
  TempDir dir("gt");
  save_ground_truth(dir / "a.illum.json", Illuminant::from_rgb({1, 2, 3}));
  const GroundTruth g = load_ground_truth(dir / "a.illum.json");
  REQUIRE(std::holds_alternative<Illuminant>(g));
  CHECK(std::get<Illuminant>(g)[2] == doctest::Approx(3.0 / std::sqrt(14.0)));

  const LinearImage field = constant_field(4, 4, Illuminant::neutral().rgb());
  save_ground_truth(dir / "b.illum.json", field, dir / "b.gt.pfm");
  const GroundTruth f = load_ground_truth(dir / "b.illum.json");
  REQUIRE(std::holds_alternative<LinearImage>(f));
  CHECK(std::get<LinearImage>(f) == field);

  std::ofstream(dir / "c.illum.json") << "{\"other\": 1}";
  CHECK_THROWS_AS(load_ground_truth(dir / "c.illum.json"), DataError);
}
