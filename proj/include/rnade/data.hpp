#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rnade/mixture.hpp"
#include "rnade/model.hpp"

namespace rnade {

struct Dataset {
  Matrix values;  // N x D
  std::vector<std::string> columns;
  std::string provenance;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * cols(), cols()};
  }

  // Throws DataError when entries are non-finite or names mismatch.
  void validate() const;
  Dataset select_rows(std::span<const std::size_t> indices) const;
  Dataset select_columns(std::span<const std::size_t> indices) const;
};

// Builds a dataset with generated column names c0, c1, ...
Dataset make_dataset(Matrix values, std::string provenance = {});

enum class MatrixFormat { kCsv, kRawF64 };

MatrixFormat parse_matrix_format(std::string_view text);

struct CsvOptions {
  bool header = false;
  char separator = ',';
};

// CSV: '.' decimal point, optional header row. Raw: two little-endian u64
// counts (N, D) then N*D little-endian f64 values, row-major.
Dataset load_matrix(const std::filesystem::path& path, MatrixFormat format,
                    const CsvOptions& csv = {});
Dataset parse_csv(std::istream& in, const CsvOptions& options, const std::string& source);

void save_matrix(const std::filesystem::path& path, const Dataset& data, MatrixFormat format);
std::string to_csv(const Dataset& data, bool header = true);
std::string to_raw_f64(const Matrix& values);
Matrix parse_raw_f64(std::string_view bytes, const std::string& source);

// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// Per-column mean and population standard deviation.
struct NormStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

NormStats compute_stats(const Dataset& train);
Dataset standardize(const Dataset& data, const NormStats& stats);
Dataset destandardize(const Dataset& data, const NormStats& stats);

struct DroppedColumn {
  std::size_t index = 0;  // column index in the input
  std::string name;
  bool discrete = false;
  std::size_t partner = 0;  // earlier kept column it correlates with
  double correlation = 0.0;
};

struct FilterReport {
  std::vector<std::size_t> kept;
  std::vector<DroppedColumn> dropped;
};

struct FilterResult {
  Dataset data;
  FilterReport report;
};

double pearson_correlation(const Eigen::Ref<const Eigen::VectorXd>& a,
                           const Eigen::Ref<const Eigen::VectorXd>& b);

// Drops the declared discrete columns, then scans the remaining pairs in
// column order and drops the later column of every pair with
// |r| > corr_threshold.
FilterResult filter_attributes(const Dataset& data, std::span<const std::size_t> discrete_columns,
                               double corr_threshold = 0.98);

struct FoldSpec {
  std::size_t n_folds = 0;
  std::vector<std::vector<std::size_t>> test;
  std::vector<std::vector<std::size_t>> valid;
  // Training indices of each fold excluding its validation block.
  std::vector<std::vector<std::size_t>> train;

  // Training indices including validation (everything but the test block).
  std::vector<std::size_t> full_train(std::size_t fold) const;
};

FoldSpec make_folds(std::size_t n, std::size_t n_folds, std::uint64_t seed);
std::string folds_to_csv(const FoldSpec& folds);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

// Binary PGM (P5) with maxval 255.
GrayImage read_pgm(const std::filesystem::path& path);
GrayImage parse_pgm(std::string_view bytes, const std::string& source);
std::string to_pgm(const GrayImage& image);

// Patches as rows of raster-ordered pixel values 0..255. Top-left corners are
// uniform within a uniformly chosen image. Images smaller than the patch are
// skipped with a message appended to *warnings.
Dataset extract_patches(std::span<const GrayImage> images, std::size_t patch_size,
                        std::size_t n_patches, Rng& rng,
                        std::vector<std::string>* warnings = nullptr);

// (pixel + noise) / 256 for noise in [0, 1).
double dequantize_value(double pixel, double noise);

// Adds U[0,1) noise to every pixel and divides by 256. With drop_last_pixel
// the final column is removed.
Dataset dequantize(const Dataset& patches, bool drop_last_pixel, Rng& rng);

}  // namespace rnade
