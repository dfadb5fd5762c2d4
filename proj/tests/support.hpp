#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>

#include "illumnet/image.hpp"
#include "illumnet/random.hpp"

namespace testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("illumnet_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline illumnet::LinearImage random_image(int w, int h, std::uint64_t seed, double lo = 0.0,
                                          double hi = 1.0) {
  illumnet::Rng rng(seed);
  illumnet::LinearImage img(w, h);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

inline illumnet::LinearImage constant_image(int w, int h, const illumnet::Rgb& c) {
  illumnet::LinearImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.set_pixel(x, y, c);
  return img;
}

}  // namespace testing
