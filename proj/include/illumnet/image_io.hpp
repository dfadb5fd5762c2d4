#pragma once

#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "illumnet/image.hpp"

namespace illumnet {

enum class ImageFormat { Auto, Pfm, Png };

/// Reads an image scaled to [0,1] by the format's nominal white (255 or
/// 65535 for PNG, 1.0 for PFM). A `<path>.mask.png` sidecar, when present,
/// becomes the exclusion mask (nonzero = excluded).
LinearImage load_image(const std::filesystem::path& path, ImageFormat format = ImageFormat::Auto);

/// Little-endian color PFM (scale -1.0), rows stored bottom-to-top.
void save_pfm(const std::filesystem::path& path, const LinearImage& img);

/// Single-channel PFM ("Pf") from row-major values, row 0 at the top.
void save_pfm_gray(const std::filesystem::path& path, int width, int height,
                   const std::vector<float>& values);

/// Clipped PNG export. `srgb_preview` applies a fixed sRGB-style encode for
/// viewing; otherwise values are written linearly.
void save_png(const std::filesystem::path& path, const LinearImage& img, int bit_depth = 8,
              bool srgb_preview = false);

/// Writes an 8-bit mask sidecar (255 = excluded).
void save_mask_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask,
                   int width, int height);

std::filesystem::path mask_sidecar_path(const std::filesystem::path& image);
std::filesystem::path illum_sidecar_path(const std::filesystem::path& image);

/// Ground truth: either one global illuminant or a per-pixel illuminant field.
using GroundTruth = std::variant<Illuminant, LinearImage>;

/// Parses `<image>.illum.json`: {"illuminant": [r,g,b]} or {"gt_map": "file.gt.pfm"}
/// (map path relative to the sidecar's directory).
GroundTruth load_ground_truth(const std::filesystem::path& sidecar);

void save_ground_truth(const std::filesystem::path& sidecar, const Illuminant& illum);
/// Writes the field as a PFM at `map_path` and references it from the sidecar.
void save_ground_truth(const std::filesystem::path& sidecar, const LinearImage& field,
                       const std::filesystem::path& map_path);

}  // namespace illumnet
