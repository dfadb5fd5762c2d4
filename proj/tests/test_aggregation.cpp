#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "illumnet/aggregation.hpp"
#include "illumnet/error.hpp"
#include "illumnet/metrics.hpp"
#include "illumnet/random.hpp"
#include "illumnet/svr.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace illumnet;

namespace {

const PoolingOptions kRaw{false, 1.0};

EstimateMap filled_map(int w, int h, const std::function<Rgb(int, int)>& f) {
  EstimateMap map(w, h, 32);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) map.set(x, y, Illuminant::from_rgb(f(x, y)));
  return map;
}

Rgb normalized(const Rgb& v) { return Illuminant::from_rgb(v).rgb(); }

/// Local estimates biased toward blue with per-cell noise; the regressor can
/// learn to undo the bias, median pooling cannot.
EstimateMap biased_map(const Illuminant& truth, Rng& rng) {
  return filled_map(6, 6, [&](int, int) {
    return Rgb{truth[0] * (1.0 + 0.03 * rng.normal()), truth[1] * (1.0 + 0.03 * rng.normal()),
               1.3 * truth[2] * (1.0 + 0.03 * rng.normal())};
  });
}

Illuminant random_light(Rng& rng) {
  return Illuminant::from_rgb({rng.uniform(0.3, 1.0), rng.uniform(0.5, 1.0), rng.uniform(0.2, 0.9)});
}

std::vector<AggregatorSample> biased_set(std::uint64_t seed, int n, std::vector<EstimateMap>* maps = nullptr) {
  Rng rng(seed);
  std::vector<AggregatorSample> out;
  for (int i = 0; i < n; ++i) {
    const Illuminant truth = random_light(rng);
    const EstimateMap map = biased_map(truth, rng);
    out.push_back({pool_features(map), truth});
    if (maps) maps->push_back(map);
  }
  return out;
}

AggregatorGrid small_grid() {
  AggregatorGrid g;
  g.C = {1.0, 10.0};
  g.gamma = {0.01, 0.1};
  g.epsilon = {0.01};
  return g;
}

}  // namespace

TEST_CASE("rbf kernel") {
  const std::vector<double> a{1, 2}, b{1, 4};
  CHECK(rbf_kernel(a, a, 0.5) == 1.0);
  CHECK(rbf_kernel(a, b, 0.5) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("svr dual constraints and tube fit") {
  Rng rng(4);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    const double u = rng.uniform(-1, 1);
    x.push_back({u});
    y.push_back(0.5 * u + 0.2);
  }
  SvrParams p;
  p.C = 10.0;
  p.epsilon = 0.01;
  p.gamma = 1.0;
  p.tolerance = 1e-6;
  const SvrModel m = fit_svr(x, y, p);
  double sum = 0.0;
  for (double c : m.coefficients) {
    sum += c;
    CHECK(std::abs(c) <= p.C + 1e-9);
  }
  CHECK(sum == doctest::Approx(0.0).epsilon(1e-9).scale(1.0));
  CHECK(m.support_vectors.size() == m.coefficients.size());
  CHECK_FALSE(m.support_vectors.empty());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(m.predict(x[i]) - y[i]) < 0.012);

  SvrParams bad = p;
  CHECK_THROWS_AS(fit_svr(std::vector<std::vector<double>>{}, std::vector<double>{}, p), UsageError);
  CHECK_THROWS_AS(fit_svr(std::vector<std::vector<double>>{{1}, {1, 2}}, std::vector<double>{1, 2}, bad),
                  UsageError);
  CHECK_THROWS_AS(fit_svr(x, std::vector<double>{1.0}, bad), UsageError);
}

TEST_CASE("svr on constant targets reduces to a bias") {
  Rng rng(6);
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 20; ++i) {
    x.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    y.push_back(0.4);
  }
  const SvrModel m = fit_svr(x, y, SvrParams{});
  for (double u : {-3.0, 0.0, 0.7}) CHECK(m.predict(std::vector<double>{u, -u}) == doctest::Approx(0.4).epsilon(0.03));
}

TEST_CASE("pooling a constant map") {
  const Rgb c = normalized({0.2, 0.5, 0.4});
  const EstimateMap map = filled_map(7, 5, [&](int, int) { return c; });
  for (const PoolingOptions& opt : {PoolingOptions{}, kRaw}) {
    const PooledFeatures f = pool_features(map, opt);
    CHECK_FALSE(f.filled_regions);
    for (std::size_t r = 0; r < 9; ++r)
      for (int ch = 0; ch < 3; ++ch) {
        CHECK(f.mean(r, ch) == doctest::Approx(c[ch]).epsilon(1e-12));
        CHECK(f.stddev(r, ch) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
      }
    for (int ch = 0; ch < 3; ++ch) CHECK(f.median(ch) == doctest::Approx(c[ch]).epsilon(1e-12));
  }
  // Normalized convolution keeps a constant map constant around a hole.
  EstimateMap holed = map;
  holed.invalidate(3, 2);
  const PooledFeatures f = pool_features(holed);
  for (std::size_t r = 0; r < 9; ++r) CHECK(f.mean(r, 1) == doctest::Approx(c[1]).epsilon(1e-12));
}

TEST_CASE("one cell per region without smoothing") {
  Rng rng(2);
  std::vector<Rgb> cells;
  for (int i = 0; i < 9; ++i) cells.push_back(normalized({rng.uniform(0.1, 1), rng.uniform(0.1, 1), rng.uniform(0.1, 1)}));
  const EstimateMap map = filled_map(3, 3, [&](int x, int y) { return cells[y * 3 + x]; });
  const PooledFeatures f = pool_features(map, kRaw);
  for (std::size_t r = 0; r < 9; ++r)
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(f.mean(r, ch) == doctest::Approx(cells[r][ch]).epsilon(1e-12));
      CHECK(f.stddev(r, ch) == 0.0);
    }
  for (int ch = 0; ch < 3; ++ch) {
    std::vector<double> col;
    for (const Rgb& c : cells) col.push_back(c[ch]);
    CHECK(f.median(ch) == doctest::Approx(oracle::median(col)).epsilon(1e-12));
  }
}

TEST_CASE("checkerboard regional statistics") {
  const Rgb a = normalized({0.9, 0.5, 0.2});
  const Rgb b = normalized({0.3, 0.6, 0.8});
  const EstimateMap map = filled_map(6, 6, [&](int x, int y) { return (x + y) % 2 ? a : b; });
  const PooledFeatures f = pool_features(map, kRaw);
  for (std::size_t r = 0; r < 9; ++r)
    for (int ch = 0; ch < 3; ++ch) {
      // Brute force over the 2x2 region members.
      const int rx = static_cast<int>(r % 3) * 2, ry = static_cast<int>(r / 3) * 2;
      std::vector<double> members;
      for (int y = ry; y < ry + 2; ++y)
        for (int x = rx; x < rx + 2; ++x) members.push_back(map.estimate(x, y)[ch]);
      double mean = 0.0;
      for (double v : members) mean += v / 4.0;
      double var = 0.0;
      for (double v : members) var += (v - mean) * (v - mean) / 4.0;
      CHECK(f.mean(r, ch) == doctest::Approx(mean).epsilon(1e-12));
      CHECK(f.stddev(r, ch) == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
      CHECK(f.stddev(r, ch) == doctest::Approx(std::abs(a[ch] - b[ch]) / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("balanced region partition") {
  // Cell value encodes its column, so a region mean reveals its columns.
  const EstimateMap map = filled_map(7, 4, [](int x, int) { return Rgb{1.0 + x, 1.0, 1.0}; });
  const PooledFeatures f = pool_features(map, kRaw);
  std::vector<double> expect;
  for (const auto& cols : std::vector<std::vector<int>>{{0, 1}, {2, 3}, {4, 5, 6}}) {
    double sum = 0.0;
    for (int x : cols) sum += normalized({1.0 + x, 1.0, 1.0})[0];
    expect.push_back(sum / static_cast<double>(cols.size()));
  }
  for (int r = 0; r < 9; ++r) CHECK(f.mean(static_cast<std::size_t>(r), 0) == doctest::Approx(expect[r % 3]).epsilon(1e-12));
}

TEST_CASE("empty regions copy the nearest region") {
  EstimateMap map = filled_map(6, 6, [](int x, int y) { return Rgb{1.0 + x, 1.0 + y, 1.0}; });
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 2; ++x) map.invalidate(x, y);
  const PooledFeatures f = pool_features(map, kRaw);
  CHECK(f.filled_regions);
  for (int row = 0; row < 3; ++row)
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(f.mean(row * 3, ch) == f.mean(row * 3 + 1, ch));
      CHECK(f.stddev(row * 3, ch) == f.stddev(row * 3 + 1, ch));
    }
}

TEST_CASE("pooling errors") {
  CHECK_THROWS_AS(pool_features(filled_map(2, 5, [](int, int) { return Rgb{1, 1, 1}; })), DataError);
  EstimateMap none(4, 4, 32);
  CHECK_THROWS_AS(pool_features(none), DataError);
  CHECK_THROWS_AS(median_pool_baseline(none), DataError);
}

TEST_CASE("median pooling baseline examples") {
  const Rgb c = normalized({0.3, 0.3, 0.6});
  const EstimateMap constant = filled_map(3, 3, [&](int, int) { return c; });
  for (int ch = 0; ch < 3; ++ch) CHECK(median_pool_baseline(constant)[ch] == doctest::Approx(c[ch]));

  EstimateMap basis(3, 1, 32);
  basis.set(0, 0, Illuminant::from_rgb({1, 0, 0}));
  basis.set(1, 0, Illuminant::from_rgb({0, 1, 0}));
  basis.set(2, 0, Illuminant::from_rgb({0, 0, 1}));
  // Channel medians are all zero; the clamp floor makes them equal.
  for (int ch = 0; ch < 3; ++ch) CHECK(median_pool_baseline(basis)[ch] == doctest::Approx(1.0 / std::sqrt(3.0)));

  EstimateMap single(2, 2, 32);
  single.set(1, 1, Illuminant::from_rgb({0.2, 0.7, 0.1}));
  CHECK(median_pool_baseline(single) == Illuminant::from_rgb({0.2, 0.7, 0.1}));
}

TEST_CASE("bias-only model predicts the neutral light") {
  AggregatorModel m;
  m.feature_mean.assign(kPooledFeatureCount, 0.0);
  m.feature_scale.assign(kPooledFeatureCount, 1.0);
  for (auto& ch : m.channels) {
    ch.gamma = 0.1;
    ch.bias = 0.2;
  }
  Rng rng(1);
  const Illuminant e = predict_global(m, biased_map(random_light(rng), rng));
  for (int ch = 0; ch < 3; ++ch) CHECK(e[ch] == doctest::Approx(1.0 / std::sqrt(3.0)));
}

TEST_CASE("constant target regression") {
  const Illuminant c = Illuminant::from_rgb({0.5, 0.7, 0.3});
  auto train = biased_set(11, 30);
  auto val = biased_set(12, 10);
  for (auto& s : train) s.target = c;
  for (auto& s : val) s.target = c;
  const AggregatorModel m = fit_aggregator(train, val, small_grid());
  Rng rng(13);
  for (int i = 0; i < 10; ++i)
    CHECK(angular_error(predict_global(m, biased_map(random_light(rng), rng)).rgb(), c.rgb()) < 0.5);
}

TEST_CASE("regressor beats median pooling on biased maps") {
  std::vector<EstimateMap> train_maps, test_maps;
  const auto train = biased_set(21, 80, &train_maps);
  const auto val = biased_set(22, 30);
  const auto test = biased_set(23, 40, &test_maps);
  const AggregatorModel m = fit_aggregator(train, val);
  CHECK(m.hyper.C > 0.0);
  CHECK(m.validation_median_error >= 0.0);

  const auto medians = [&](const std::vector<AggregatorSample>& set, const std::vector<EstimateMap>& maps) {
    std::vector<double> agg, base;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Illuminant p = predict_global(m, maps[i]);
      CHECK(norm(p.rgb()) == doctest::Approx(1.0).epsilon(1e-12));
      agg.push_back(angular_error(p.rgb(), set[i].target.rgb()));
      base.push_back(angular_error(median_pool_baseline(maps[i]).rgb(), set[i].target.rgb()));
    }
    return std::pair{oracle::median(agg), oracle::median(base)};
  };
  const auto [test_agg, test_base] = medians(test, test_maps);
  CHECK(test_agg < test_base);
  const auto [train_agg, train_base] = medians(train, train_maps);
  CHECK(train_agg <= train_base + 0.1);
}

TEST_CASE("duplicating training pairs changes nothing") {
  const auto train = biased_set(31, 20);
  const auto val = biased_set(32, 10);
  auto doubled = train;
  doubled.insert(doubled.end(), train.begin(), train.end());
  const AggregatorModel a = fit_aggregator(train, val, small_grid());
  const AggregatorModel b = fit_aggregator(doubled, val, small_grid());
  CHECK(a == b);
}

TEST_CASE("fit errors") {
  const auto train = biased_set(41, 12);
  CHECK_THROWS_AS(fit_aggregator(std::span(train).first(9), train), UsageError);
  CHECK_THROWS_AS(fit_aggregator(train, std::vector<AggregatorSample>{}), UsageError);
  auto flat = train;
  for (auto& s : flat) s.features = flat[0].features;
  CHECK_THROWS_AS(fit_aggregator(flat, train), NumericError);
}

TEST_CASE("model file round trip is bit exact") {
  testing::TempDir dir("agg");
  std::vector<EstimateMap> maps;
  const auto train = biased_set(51, 20, &maps);
  const AggregatorModel m = fit_aggregator(train, biased_set(52, 8), small_grid());
  save_aggregator(dir / "a.bin", m);
  const AggregatorModel back = load_aggregator(dir / "a.bin");
  CHECK(back == m);
  for (const auto& map : maps) CHECK(predict_global(back, map) == predict_global(m, map));
  const auto meta = aggregator_metadata(m);
  CHECK(meta.contains("validation_median_error"));

  std::filesystem::resize_file(dir / "a.bin", std::filesystem::file_size(dir / "a.bin") - 3);
  CHECK_THROWS_AS(load_aggregator(dir / "a.bin"), DataError);
  save_aggregator(dir / "b.bin", m);
  {
    std::ofstream out(dir / "b.bin", std::ios::app | std::ios::binary);
    out << "zz";
  }
  CHECK_THROWS_AS(load_aggregator(dir / "b.bin"), DataError);
  CHECK_THROWS_AS(load_aggregator(dir / "nothing.bin"), DataError);
}
