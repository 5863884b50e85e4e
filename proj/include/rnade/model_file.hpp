#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rnade/baselines.hpp"
#include "rnade/data.hpp"
#include "rnade/model.hpp"

namespace rnade {

enum class ModelKind : std::uint8_t { kRnade = 0, kGaussian = 1, kMog = 2 };

std::string to_string(ModelKind kind);

// Maps raw input columns onto model space: keep `kept` columns, then
// standardize with `stats` if present.
struct Preprocessing {
  std::size_t input_columns = 0;
  std::vector<std::size_t> kept;
  std::vector<std::string> names;  // names of the kept columns
  std::optional<NormStats> stats;

  Dataset apply(const Dataset& raw) const;
  // Inverse of the standardization for model-space rows.
  Dataset invert(const Dataset& model_space) const;
};

struct ModelFile {
  std::variant<RnadeParams, FullGaussian, MogModel> model;
  // RNADE only; empty means identity.
  std::vector<std::size_t> ordering;
  std::optional<Preprocessing> preprocessing;

  ModelKind kind() const { return static_cast<ModelKind>(model.index()); }
  std::size_t dim() const;
};

inline constexpr std::string_view kModelMagic = "RNADEBIN";
inline constexpr std::uint32_t kModelFormatVersion = 1;

// Layout, all integers and floats little-endian:
//   "RNADEBIN", u32 version, u8 kind
//   rnade:    u64 D, u64 H, u64 K, u8 family, u8 activation, then tensors
//             rho, W (H x (D-1)), c, V_alpha (D x H x K), b_alpha (D x K),
//             V_mu, b_mu, V_sigma, b_sigma; then the ordering block
//   gaussian: u64 D, mean, covariance (D x D)
//   mog:      u64 D, u64 n_components, weights, then mean and covariance of
//             each component
//   preprocessing: u8 flag; if set, u64 input_columns, u64 list of kept
//             columns, names (u64 length + bytes each), u8 has_stats, mean,
//             stddev
//   u64 FNV-1a checksum of every preceding byte
// A tensor is a u64 element count followed by row-major f64 values. An
// ordering block is a u64 count followed by that many u64 entries.
std::string serialize(const ModelFile& file);
ModelFile deserialize(std::string_view bytes, const std::string& source);

void save_model(const std::filesystem::path& path, const ModelFile& file);
ModelFile load_model(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace rnade
