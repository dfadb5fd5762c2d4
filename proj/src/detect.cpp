#include "illumnet/detect.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <utility>

#include "illumnet/error.hpp"
#include "illumnet/metrics.hpp"

namespace illumnet {

namespace {

/// Local maximum: strictly above neighbours that precede it in row-major
/// order and not below the ones that follow, so plateaus yield one cell.
bool is_local_max(const std::vector<double>& v, int res, int ir, int ib) {
  const double c = v[static_cast<std::size_t>(ib) * res + ir];
  for (int db = -1; db <= 1; ++db) {
    for (int dr = -1; dr <= 1; ++dr) {
      if (dr == 0 && db == 0) continue;
      const int nr = ir + dr;
      const int nb = ib + db;
      if (nr < 0 || nb < 0 || nr >= res || nb >= res) continue;
      const double n = v[static_cast<std::size_t>(nb) * res + nr];
      const bool before = db < 0 || (db == 0 && dr < 0);
      if (before ? n >= c : n > c) return false;
    }
  }
  return true;
}

std::pair<int, int> hill_climb(const std::vector<double>& v, int res, int ir, int ib) {
  while (true) {
    double best = v[static_cast<std::size_t>(ib) * res + ir];
    int br = ir, bb = ib;
    for (int db = -1; db <= 1; ++db) {
      for (int dr = -1; dr <= 1; ++dr) {
        const int nr = ir + dr;
        const int nb = ib + db;
        if (nr < 0 || nb < 0 || nr >= res || nb >= res) continue;
        const double n = v[static_cast<std::size_t>(nb) * res + nr];
        if (n > best) {
          best = n;
          br = nr;
          bb = nb;
        }
      }
    }
    if (br == ir && bb == ib) return {ir, ib};
    ir = br;
    ib = bb;
  }
}

/// Separable Gaussian blur with zero padding (density vanishes off-grid).
std::vector<double> blur_grid(const std::vector<double>& v, int res, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  const auto taps = gaussian_kernel(sigma, radius);
  std::vector<double> tmp(v.size(), 0.0), out(v.size(), 0.0);
  for (int ib = 0; ib < res; ++ib) {
    for (int ir = 0; ir < res; ++ir) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int r = ir + k;
        if (r < 0 || r >= res) continue;
        acc += taps[static_cast<std::size_t>(k + radius)] * v[static_cast<std::size_t>(ib) * res + r];
      }
      tmp[static_cast<std::size_t>(ib) * res + ir] = acc;
    }
  }
  for (int ib = 0; ib < res; ++ib) {
    for (int ir = 0; ir < res; ++ir) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        const int b = ib + k;
        if (b < 0 || b >= res) continue;
        acc += taps[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(b) * res + ir];
      }
      out[static_cast<std::size_t>(ib) * res + ir] = acc;
    }
  }
  return out;
}

struct AxisFit {
  double lo = 0.0;
  double hi = 0.0;
  double bandwidth = 0.0;
};

AxisFit fit_axis(const std::vector<double>& xs, const DetectorConfig& cfg) {
  const auto n = static_cast<double>(xs.size());
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;

  AxisFit fit;
  fit.lo = *lo;
  fit.hi = *hi;
  // Two cells of a grid spanning [lo - 3h, hi + 3h]: h >= 2 (hi - lo + 6h) / res.
  const double cell_floor = 2.0 * (*hi - *lo) / (cfg.resolution - 12.0);
  fit.bandwidth = std::max({1.06 * sd * std::pow(n, -0.2), cell_floor, cfg.min_bandwidth});
  return fit;
}

}  // namespace

void DetectorConfig::validate() const {
  if (!(retention > 0.0 && retention <= 1.0)) throw UsageError("retention must be in (0, 1]");
  if (!(angle_threshold_deg >= 0.0)) throw UsageError("angle threshold must be >= 0");
  if (resolution <= 12) throw UsageError("density grid resolution must exceed 12");
  if (scale_levels < 0) throw UsageError("scale levels must be >= 0");
  if (!(min_bandwidth > 0.0)) throw UsageError("minimum bandwidth must be positive");
}

Projection project_chromaticity(std::span<const Rgb> estimates) {
  if (estimates.empty()) throw DataError("no valid estimates to project");
  Projection p;
  for (const Rgb& e : estimates) {
    if (!(e[1] >= kGreenEpsilon)) {
      ++p.dropped;
      continue;
    }
    p.points.push_back({e[0] / e[1], e[2] / e[1]});
  }
  return p;
}

Projection project_chromaticity(const EstimateMap& map) {
  const auto estimates = map.valid_estimates();
  return project_chromaticity(estimates);
}

DensityGrid kde_2d(std::span<const Chromaticity> points, const DetectorConfig& cfg) {
  cfg.validate();
  if (points.empty()) throw UsageError("kde_2d needs at least one point");
  std::vector<double> rs, bs;
  for (const auto& p : points) {
    rs.push_back(p.r);
    bs.push_back(p.b);
  }
  const AxisFit fr = fit_axis(rs, cfg);
  const AxisFit fb = fit_axis(bs, cfg);

  DensityGrid g;
  g.resolution = cfg.resolution;
  g.bandwidth_r = fr.bandwidth;
  g.bandwidth_b = fb.bandwidth;
  g.r_min = fr.lo - 3.0 * fr.bandwidth;
  g.r_max = fr.hi + 3.0 * fr.bandwidth;
  g.b_min = fb.lo - 3.0 * fb.bandwidth;
  g.b_max = fb.hi + 3.0 * fb.bandwidth;

  const int res = cfg.resolution;
  const auto ures = static_cast<std::size_t>(res);
  g.values.assign(ures * ures, 0.0);
  const double norm_r = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * fr.bandwidth);
  const double norm_b = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * fb.bandwidth);
  std::vector<double> kr(ures), kb(ures);
  for (const auto& p : points) {
    for (int i = 0; i < res; ++i) {
      const Chromaticity c = g.cell_center(i, i);
      const double ur = (c.r - p.r) / fr.bandwidth;
      const double ub = (c.b - p.b) / fb.bandwidth;
      kr[static_cast<std::size_t>(i)] = norm_r * std::exp(-0.5 * ur * ur);
      kb[static_cast<std::size_t>(i)] = norm_b * std::exp(-0.5 * ub * ub);
    }
    for (std::size_t ib = 0; ib < ures; ++ib) {
      const double wb = kb[ib];
      double* row = &g.values[ib * ures];
      for (std::size_t ir = 0; ir < ures; ++ir) row[ir] += wb * kr[ir];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(points.size());
  for (double& v : g.values) v *= inv_n;
  return g;
}

std::vector<Mode> find_modes(const DensityGrid& grid, const DetectorConfig& cfg) {
  cfg.validate();
  const int res = grid.resolution;
  if (res <= 0 || grid.values.size() != static_cast<std::size_t>(res) * res)
    throw UsageError("malformed density grid");

  std::vector<std::vector<double>> levels;
  levels.reserve(static_cast<std::size_t>(cfg.scale_levels));
  double sigma = 1.0;
  for (int k = 0; k < cfg.scale_levels; ++k, sigma *= 2.0)
    levels.push_back(blur_grid(grid.values, res, sigma));

  // Coarse endpoint -> densest fine maximum reaching it.
  std::map<std::pair<int, int>, Mode> survivors;
  for (int ib = 0; ib < res; ++ib) {
    for (int ir = 0; ir < res; ++ir) {
      if (!is_local_max(grid.values, res, ir, ib)) continue;
      std::pair<int, int> pos{ir, ib};
      for (const auto& level : levels) pos = hill_climb(level, res, pos.first, pos.second);
      const std::pair<int, int> key{pos.second, pos.first};  // row-major ordering
      const Mode m{grid.cell_center(ir, ib), grid.at(ir, ib), ir, ib};
      auto it = survivors.find(key);
      if (it == survivors.end() || m.density > it->second.density) survivors[key] = m;
    }
  }

  std::vector<Mode> modes;
  double peak = 0.0;
  for (const auto& [key, m] : survivors) peak = std::max(peak, m.density);
  for (const auto& [key, m] : survivors)
    if (m.density >= cfg.retention * peak) modes.push_back(m);
  std::stable_sort(modes.begin(), modes.end(),
                   [](const Mode& a, const Mode& b) { return a.density > b.density; });
  return modes;
}

double max_pairwise_angle(std::span<const Mode> modes) {
  double worst = 0.0;
  for (std::size_t i = 0; i < modes.size(); ++i)
    for (std::size_t j = i + 1; j < modes.size(); ++j)
      worst = std::max(worst, angular_error({std::max(0.0, modes[i].point.r), 1.0,
                                             std::max(0.0, modes[i].point.b)},
                                            {std::max(0.0, modes[j].point.r), 1.0,
                                             std::max(0.0, modes[j].point.b)}));
  return worst;
}

Detection detect_multiple(std::span<const Rgb> estimates, const DetectorConfig& cfg) {
  cfg.validate();
  Projection proj = project_chromaticity(estimates);
  if (proj.points.empty()) throw DataError("every estimate has green below epsilon");
  Detection d;
  d.dropped = proj.dropped;
  d.grid = kde_2d(proj.points, cfg);
  d.modes = find_modes(d.grid, cfg);
  d.max_angle_deg = max_pairwise_angle(d.modes);
  d.multiple = d.max_angle_deg > cfg.angle_threshold_deg;
  return d;
}

Detection detect_multiple(const EstimateMap& map, const DetectorConfig& cfg) {
  const auto estimates = map.valid_estimates();
  return detect_multiple(estimates, cfg);
}

}  // namespace illumnet
