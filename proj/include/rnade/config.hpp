#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rnade/baselines.hpp"
#include "rnade/data.hpp"
#include "rnade/training.hpp"

namespace rnade {

// `section.key = value` lines; '#' starts a comment. Every key must be known.
struct ConfigEntries {
  struct Entry {
    std::string value;
    std::string origin;  // "file:line" or "--set"
    std::filesystem::path base_dir;  // relative paths resolve against this
  };
  std::map<std::string, Entry> entries;
};

ConfigEntries parse_config_text(std::string_view text, const std::string& source,
                                const std::filesystem::path& base_dir);
// Applies a "section.key=value" override.
void apply_override(ConfigEntries& entries, std::string_view assignment);

enum class DataKind { kTable, kPatches };

struct RunConfig {
  // data.*
  DataKind data_kind = DataKind::kTable;
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  MatrixFormat format = MatrixFormat::kCsv;
  CsvOptions csv;
  std::vector<std::filesystem::path> images;
  std::size_t patch_size = 4;
  std::size_t n_patches = 50000;
  double valid_fraction = 0.0;
  double test_fraction = 0.0;

  // preprocess.*
  std::vector<std::string> discrete;  // column names or 0-based indices
  bool filter = false;
  double corr_threshold = 0.98;
  bool standardize = true;
  bool dequantize = false;
  bool drop_last_pixel = false;

  // model.*
  std::string model_type = "rnade";  // rnade | gaussian | mog
  std::vector<std::size_t> hidden{50};
  std::vector<std::size_t> components{5};
  Family family = Family::MoG;
  Activation activation = Activation::RescaledReLU;
  std::string ordering = "identity";  // identity | random | comma list

  // train.*
  TrainConfig train;
  std::vector<double> lr{0.01};
  std::vector<double> weight_decay{0.0};

  // em.*
  EmConfig em;
  std::vector<std::size_t> em_components{5};

  // folds.*
  std::size_t n_folds = 10;
  std::vector<std::string> baselines{"gaussian"};

  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;

  // Hyperparameter combinations in deterministic order (lr, weight decay,
  // hidden, components), each with `seed` and the resolved ordering.
  std::vector<TrainConfig> train_grid(std::size_t D) const;
  std::vector<EmConfig> em_grid() const;
};

RunConfig build_run_config(const ConfigEntries& entries);
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

// All keys the parser accepts, for help output.
const std::vector<std::string>& known_config_keys();

}  // namespace rnade
