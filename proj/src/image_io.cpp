#include "illumnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "illumnet/error.hpp"

namespace illumnet {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open file: " + path.string());
  return f;
}

std::string lower_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

// ---------------------------------------------------------------------------
// PNG

struct RawPng {
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> rgb;  // interleaved, 3 values per pixel
};

[[noreturn]] void png_error_handler(png_structp, png_const_charp msg) {
  throw DataError(std::string("PNG error: ") + msg);
}

void png_warning_handler(png_structp, png_const_charp) {}

RawPng read_png(const fs::path& path) {
  FilePtr file = open_file(path, "rb");
  unsigned char signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0)
    throw DataError("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                           png_warning_handler);
  if (!png) throw DataError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  RawPng out;
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  const int color_type = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    depth = 8;
  } else if (depth != 8 && depth != 16) {
    throw DataError("unsupported PNG bit depth " + std::to_string(depth) + ": " + path.string());
  }
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.bit_depth = depth;

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  const std::size_t bytes_per_sample = depth == 16 ? 2 : 1;
  if (rowbytes != static_cast<std::size_t>(out.width) * 3 * bytes_per_sample)
    throw DataError("unexpected PNG row layout: " + path.string());

  std::vector<unsigned char> buffer(rowbytes * static_cast<std::size_t>(out.height));
  std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);

  out.rgb.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  for (std::size_t i = 0; i < out.rgb.size(); ++i) {
    if (depth == 16)
      out.rgb[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
    else
      out.rgb[i] = buffer[i];
  }
  return out;
}

void write_png(const fs::path& path, int width, int height, int channels, int bit_depth,
               const std::vector<std::uint16_t>& samples) {
  if (bit_depth != 8 && bit_depth != 16) throw UsageError("PNG bit depth must be 8 or 16");
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler,
                                            png_warning_handler);
  if (!png) throw DataError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t bytes = bit_depth == 16 ? 2 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * bytes;
  std::vector<unsigned char> row(rowbytes);
  for (int y = 0; y < height; ++y) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(width) * channels; ++i) {
      const std::uint16_t v = samples[static_cast<std::size_t>(y) * width * channels + i];
      if (bytes == 2) {
        row[2 * i] = static_cast<unsigned char>(v >> 8);
        row[2 * i + 1] = static_cast<unsigned char>(v & 0xFF);
      } else {
        row[i] = static_cast<unsigned char>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
}

LinearImage load_png(const fs::path& path) {
  const RawPng raw = read_png(path);
  const double white = raw.bit_depth == 16 ? 65535.0 : 255.0;
  LinearImage img(raw.width, raw.height);
  auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<float>(raw.rgb[i] / white);
  return img;
}

// ---------------------------------------------------------------------------
// PFM

float byteswap_float(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  bits = ((bits & 0xFF) << 24) | ((bits & 0xFF00) << 8) | ((bits >> 8) & 0xFF00) | (bits >> 24);
  std::memcpy(&v, &bits, 4);
  return v;
}

constexpr bool kHostLittleEndian = std::endian::native == std::endian::little;

LinearImage load_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::string magic;
  int width = 0;
  int height = 0;
  double scale = 0.0;
  in >> magic >> width >> height >> scale;
  if (!in || (magic != "PF" && magic != "Pf"))
    throw DataError("malformed PFM header: " + path.string());
  if (width <= 0 || height <= 0) throw DataError("invalid PFM dimensions: " + path.string());
  in.get();  // single whitespace before the raster

  const int channels = magic == "PF" ? 3 : 1;
  const bool file_little = scale < 0.0;
  std::vector<float> raster(static_cast<std::size_t>(width) * height * channels);
  in.read(reinterpret_cast<char*>(raster.data()),
          static_cast<std::streamsize>(raster.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(raster.size() * sizeof(float)))
    throw DataError("truncated PFM raster: " + path.string());
  if (file_little != kHostLittleEndian)
    for (float& v : raster) v = byteswap_float(v);

  LinearImage img(width, height);
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;  // bottom-to-top storage
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const int src_c = channels == 3 ? c : 0;
        img.at(x, y, c) =
            raster[(static_cast<std::size_t>(row) * width + x) * channels + src_c];
      }
    }
  }
  return img;
}

void write_pfm(const fs::path& path, int width, int height, int channels,
               const std::vector<float>& top_down) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path.string());
  out << (channels == 3 ? "PF" : "Pf") << '\n' << width << ' ' << height << '\n' << "-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(width) * channels);
  for (int r = 0; r < height; ++r) {
    const int y = height - 1 - r;
    std::copy_n(top_down.begin() + static_cast<std::ptrdiff_t>(y) * width * channels, row.size(),
                row.begin());
    if (!kHostLittleEndian)
      for (float& v : row) v = byteswap_float(v);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing PFM: " + path.string());
}

std::uint16_t quantize(double v, double white) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * white));
}

double srgb_encode(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

}  // namespace

fs::path mask_sidecar_path(const fs::path& image) { return fs::path(image.string() + ".mask.png"); }

fs::path illum_sidecar_path(const fs::path& image) {
  return fs::path(image.string() + ".illum.json");
}

LinearImage load_image(const fs::path& path, ImageFormat format) {
  if (!fs::exists(path)) throw DataError("image not found: " + path.string());
  if (format == ImageFormat::Auto) {
    const std::string ext = lower_extension(path);
    if (ext == ".pfm")
      format = ImageFormat::Pfm;
    else if (ext == ".png")
      format = ImageFormat::Png;
    else
      throw DataError("unsupported image format: " + path.string());
  }
  LinearImage img = format == ImageFormat::Pfm ? load_pfm(path) : load_png(path);

  const fs::path mask_path = mask_sidecar_path(path);
  if (fs::exists(mask_path)) {
    const RawPng raw = read_png(mask_path);
    if (raw.width != img.width() || raw.height != img.height())
      throw DataError("mask " + mask_path.string() + " is " + std::to_string(raw.width) + "x" +
                      std::to_string(raw.height) + " but image is " + std::to_string(img.width()) +
                      "x" + std::to_string(img.height()));
    std::vector<std::uint8_t> mask(img.pixel_count());
    for (std::size_t i = 0; i < mask.size(); ++i)
      mask[i] = (raw.rgb[3 * i] | raw.rgb[3 * i + 1] | raw.rgb[3 * i + 2]) != 0 ? 1 : 0;
    img.set_mask(std::move(mask));
  }
  return img;
}

void save_pfm(const fs::path& path, const LinearImage& img) {
  std::vector<float> values(img.data().begin(), img.data().end());
  write_pfm(path, img.width(), img.height(), 3, values);
}

void save_pfm_gray(const fs::path& path, int width, int height, const std::vector<float>& values) {
  if (values.size() != static_cast<std::size_t>(width) * height)
    throw UsageError("gray PFM value count does not match dimensions");
  write_pfm(path, width, height, 1, values);
}

void save_png(const fs::path& path, const LinearImage& img, int bit_depth, bool srgb_preview) {
  const double white = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<std::uint16_t> samples(img.data().size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = img.data()[i];
    samples[i] = quantize(srgb_preview ? srgb_encode(v) : v, white);
  }
  write_png(path, img.width(), img.height(), 3, bit_depth, samples);
}

void save_mask_png(const fs::path& path, const std::vector<std::uint8_t>& mask, int width,
                   int height) {
  if (mask.size() != static_cast<std::size_t>(width) * height)
    throw UsageError("mask size does not match dimensions");
  std::vector<std::uint16_t> samples(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) samples[i] = mask[i] ? 255 : 0;
  write_png(path, width, height, 1, 8, samples);
}

GroundTruth load_ground_truth(const fs::path& sidecar) {
  std::ifstream in(sidecar);
  if (!in) throw DataError("cannot open ground-truth sidecar: " + sidecar.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed ground-truth sidecar " + sidecar.string() + ": " + e.what());
  }
  if (j.contains("illuminant")) {
    const auto v = j.at("illuminant").get<std::vector<double>>();
    if (v.size() != 3) throw DataError("illuminant must have 3 components: " + sidecar.string());
    return Illuminant::from_rgb({v[0], v[1], v[2]});
  }
  if (j.contains("gt_map")) {
    const fs::path map_path = sidecar.parent_path() / j.at("gt_map").get<std::string>();
    if (!fs::exists(map_path)) throw DataError("ground-truth map not found: " + map_path.string());
    return load_pfm(map_path);
  }
  throw DataError("sidecar has neither 'illuminant' nor 'gt_map': " + sidecar.string());
}

void save_ground_truth(const fs::path& sidecar, const Illuminant& illum) {
  nlohmann::json j;
  j["illuminant"] = {illum[0], illum[1], illum[2]};
  std::ofstream out(sidecar);
  if (!out) throw DataError("cannot write sidecar: " + sidecar.string());
  out << j.dump(2) << '\n';
}

void save_ground_truth(const fs::path& sidecar, const LinearImage& field, const fs::path& map_path) {
  save_pfm(map_path, field);
  nlohmann::json j;
  j["gt_map"] = fs::relative(map_path, sidecar.parent_path().empty() ? fs::path(".")
                                                                     : sidecar.parent_path())
                    .generic_string();
  std::ofstream out(sidecar);
  if (!out) throw DataError("cannot write sidecar: " + sidecar.string());
  out << j.dump(2) << '\n';
}

}  // namespace illumnet
