#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "illumnet/image.hpp"

namespace illumnet {

/// Point on the chromaticity plane with green scaled to one: (R/G, B/G).
struct Chromaticity {
  double r = 0.0;
  double b = 0.0;
};

inline constexpr double kGreenEpsilon = 1e-6;

struct Projection {
  std::vector<Chromaticity> points;
  std::size_t dropped = 0;  ///< estimates whose green was below kGreenEpsilon
};

/// Projects valid estimates; throws DataError when none is valid.
Projection project_chromaticity(const EstimateMap& map);
Projection project_chromaticity(std::span<const Rgb> estimates);

struct DetectorConfig {
  double retention = 0.5;            ///< keep modes with density >= retention * max
  double angle_threshold_deg = 3.0;  ///< multiple iff max pairwise mode angle exceeds this
  int resolution = 256;              ///< density grid cells per axis
  int scale_levels = 5;              ///< blurs used for mode persistence (sigma 1, 2, 4, ... cells)
  double min_bandwidth = 1e-3;       ///< absolute bandwidth floor in chromaticity units

  void validate() const;
};

/// Density sampled at cell centers; values[ib * resolution + ir].
struct DensityGrid {
  int resolution = 0;
  double r_min = 0.0, r_max = 0.0;
  double b_min = 0.0, b_max = 0.0;
  double bandwidth_r = 0.0, bandwidth_b = 0.0;
  std::vector<double> values;

  double cell_width_r() const { return (r_max - r_min) / resolution; }
  double cell_width_b() const { return (b_max - b_min) / resolution; }
  double cell_area() const { return cell_width_r() * cell_width_b(); }
  Chromaticity cell_center(int ir, int ib) const {
    return {r_min + (ir + 0.5) * cell_width_r(), b_min + (ib + 0.5) * cell_width_b()};
  }
  double at(int ir, int ib) const {
    return values[static_cast<std::size_t>(ib) * resolution + ir];
  }
};

/// Gaussian product-kernel density. Per-axis bandwidth follows Silverman's
/// rule h = 1.06 sd n^(-1/5), floored at two grid cells and at
/// cfg.min_bandwidth; bounds are the data range padded by 3h.
/// Throws UsageError for an empty point set.
DensityGrid kde_2d(std::span<const Chromaticity> points, const DetectorConfig& cfg);

struct Mode {
  Chromaticity point;
  double density = 0.0;
  int ir = 0;
  int ib = 0;
};

/// Scale-space mode search. Local maxima of the grid are followed by
/// hill climbing through cfg.scale_levels increasingly blurred copies; maxima
/// that end on the same coarse peak are merged into the densest one. The
/// survivors with density >= cfg.retention * (max density) are returned,
/// densest first.
std::vector<Mode> find_modes(const DensityGrid& grid, const DetectorConfig& cfg);

/// Largest angle in degrees between the vectors (r, 1, b) of any two modes;
/// zero for fewer than two.
double max_pairwise_angle(std::span<const Mode> modes);

struct Detection {
  bool multiple = false;
  double max_angle_deg = 0.0;
  std::vector<Mode> modes;
  DensityGrid grid;
  std::size_t dropped = 0;
};

Detection detect_multiple(const EstimateMap& map, const DetectorConfig& cfg);
Detection detect_multiple(std::span<const Rgb> estimates, const DetectorConfig& cfg);

}  // namespace illumnet
