#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "illumnet/cnn.hpp"
#include "illumnet/error.hpp"

namespace illumnet {

namespace {

constexpr char kMagic[8] = {'I', 'L', 'L', 'U', 'M', 'C', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("truncated model file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

double get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }

}  // namespace

void save_cnn(const std::filesystem::path& path, const CnnModel& model) {
  model.config.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(model.config.patch_size));
  put_u32(out, static_cast<std::uint32_t>(model.config.conv_filters));
  put_u32(out, static_cast<std::uint32_t>(model.config.pool_size));
  put_u32(out, static_cast<std::uint32_t>(model.config.hidden_units));
  put_u32(out, static_cast<std::uint32_t>(CnnConfig::kOutputs));
  for (const auto& tensor : model.tensors())
    for (double v : tensor) put_f32(out, v);
  if (!out) throw DataError("failed writing model file: " + path.string());
}

CnnModel load_cnn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a CNN model file: " + path.string());
  const std::uint32_t version = get_u32(in);
  if (version != kVersion)
    throw DataError("unsupported CNN model version " + std::to_string(version));
  CnnConfig cfg;
  cfg.patch_size = static_cast<int>(get_u32(in));
  cfg.conv_filters = static_cast<int>(get_u32(in));
  cfg.pool_size = static_cast<int>(get_u32(in));
  cfg.hidden_units = static_cast<int>(get_u32(in));
  if (get_u32(in) != CnnConfig::kOutputs) throw DataError("model must have 3 outputs");
  try {
    cfg.validate();
  } catch (const UsageError& e) {
    throw DataError(std::string("invalid model configuration: ") + e.what());
  }

  CnnModel model = CnnModel::zeros(cfg);
  for (auto tensor : model.tensors()) {
    for (double& v : tensor) {
      v = get_f32(in);
      if (!std::isfinite(v)) throw DataError("non-finite parameter in " + path.string());
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw DataError("trailing bytes in model file: " + path.string());
  return model;
}

nlohmann::json training_metadata(const TrainConfig& cfg, const TrainResult& result) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["epochs"] = cfg.epochs;
  j["learning_rate"] = cfg.learning_rate;
  j["momentum"] = cfg.momentum;
  j["batch_size"] = cfg.batch_size;
  j["patches_per_image"] = cfg.patches_per_image;
  j["lr_decay"] = cfg.lr_decay;
  j["best_epoch"] = result.best_epoch;
  nlohmann::json history = nlohmann::json::array();
  for (const auto& e : result.history) {
    history.push_back({{"epoch", e.epoch},
                       {"learning_rate", e.learning_rate},
                       {"train_loss", e.train_loss},
                       {"validation_loss", e.validation_loss},
                       {"validation_median_angle", e.validation_median_angle}});
  }
  j["history"] = history;
  if (!result.history.empty()) {
    j["final_train_loss"] = result.history.back().train_loss;
    j["final_validation_loss"] = result.history.back().validation_loss;
  }
  return j;
}

}  // namespace illumnet
