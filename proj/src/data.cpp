#include "rnade/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rnade/errors.hpp"

namespace rnade {

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::string_view bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) {
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]);
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, end);
}

}  // namespace

void Dataset::validate() const {
  if (!columns.empty() && columns.size() != cols()) {
    throw DataError("dataset has " + std::to_string(cols()) + " columns but " +
                    std::to_string(columns.size()) + " names");
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (!std::isfinite(values(i, j))) {
        throw DataError("non-finite value at row " + std::to_string(i + 1) + ", column " +
                        std::to_string(j + 1));
      }
    }
  }
}

Dataset Dataset::select_rows(std::span<const std::size_t> indices) const {
  Dataset out;
  out.columns = columns;
  out.provenance = provenance;
  out.values.resize(idx(indices.size()), values.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows()) throw ValidationError("row index out of range");
    out.values.row(idx(i)) = values.row(idx(indices[i]));
  }
  return out;
}

Dataset Dataset::select_columns(std::span<const std::size_t> indices) const {
  Dataset out;
  out.provenance = provenance;
  out.values.resize(values.rows(), idx(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= cols()) throw ValidationError("column index out of range");
    out.values.col(idx(j)) = values.col(idx(indices[j]));
    out.columns.push_back(columns.empty() ? "c" + std::to_string(indices[j]) : columns[indices[j]]);
  }
  return out;
}

Dataset make_dataset(Matrix values, std::string provenance) {
  Dataset d;
  d.values = std::move(values);
  d.provenance = std::move(provenance);
  for (std::size_t j = 0; j < d.cols(); ++j) d.columns.push_back("c" + std::to_string(j));
  return d;
}

MatrixFormat parse_matrix_format(std::string_view text) {
  if (text == "csv") return MatrixFormat::kCsv;
  if (text == "raw" || text == "raw-f64") return MatrixFormat::kRawF64;
  throw ValidationError("unknown matrix format '" + std::string(text) + "' (expected csv or raw-f64)");
}

Dataset parse_csv(std::istream& in, const CsvOptions& options, const std::string& source) {
  std::vector<double> values;
  std::vector<std::string> names;
  std::size_t width = 0;
  std::size_t line_no = 0;
  std::size_t row = 0;
  bool header_pending = options.header;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line, options.separator);
    if (header_pending) {
      for (auto c : cells) names.emplace_back(c);
      width = cells.size();
      header_pending = false;
      continue;
    }
    ++row;
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw DataError(source + ": row " + std::to_string(row) + " (line " + std::to_string(line_no) +
                      ") has " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(width));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const auto cell = cells[j];
      double v = 0.0;
      const auto* first = cell.data();
      const auto* last = cell.data() + cell.size();
      if (!cell.empty() && *first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (cell.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw DataError(source + ": row " + std::to_string(row) + " (line " +
                        std::to_string(line_no) + "), column " + std::to_string(j + 1) +
                        ": cannot parse '" + std::string(cell) + "' as a number");
      }
      values.push_back(v);
    }
  }
  Dataset d;
  d.provenance = source;
  d.values.resize(idx(row), idx(width));
  std::copy(values.begin(), values.end(), d.values.data());
  if (!names.empty()) {
    d.columns = std::move(names);
  } else {
    for (std::size_t j = 0; j < width; ++j) d.columns.push_back("c" + std::to_string(j));
  }
  return d;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Matrix parse_raw_f64(std::string_view bytes, const std::string& source) {
  if (bytes.size() < 16) {
    throw DataError(source + ": truncated raw header (" + std::to_string(bytes.size()) + " bytes)");
  }
  const auto n = get_u64(bytes, 0);
  const auto d = get_u64(bytes, 8);
  if (d != 0 && n > (bytes.size() - 16) / 8 / d) {
    throw DataError(source + ": raw file declares " + std::to_string(n) + "x" + std::to_string(d) +
                    " values but holds only " + std::to_string(bytes.size() - 16) + " payload bytes");
  }
  const std::size_t expected = 16 + 8 * n * d;
  if (bytes.size() != expected) {
    throw DataError(source + ": raw file size " + std::to_string(bytes.size()) +
                    " does not match header (expected " + std::to_string(expected) + ", offset " +
                    std::to_string(std::min(bytes.size(), expected)) + ")");
  }
  Matrix m(idx(n), idx(d));
  for (std::size_t i = 0; i < n * d; ++i) {
    m.data()[i] = std::bit_cast<double>(get_u64(bytes, 16 + 8 * i));
  }
  return m;
}

std::string to_raw_f64(const Matrix& values) {
  std::string out;
  out.reserve(16 + 8 * static_cast<std::size_t>(values.size()));
  put_u64(out, static_cast<std::uint64_t>(values.rows()));
  put_u64(out, static_cast<std::uint64_t>(values.cols()));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    put_u64(out, std::bit_cast<std::uint64_t>(values.data()[i]));
  }
  return out;
}

Dataset load_matrix(const std::filesystem::path& path, MatrixFormat format, const CsvOptions& csv) {
  if (format == MatrixFormat::kCsv) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    auto d = parse_csv(in, csv, path.string());
    d.validate();
    return d;
  }
  auto d = make_dataset(parse_raw_f64(read_file(path), path.string()), path.string());
  d.validate();
  return d;
}

std::string to_csv(const Dataset& data, bool header) {
  std::string out;
  if (header) {
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (j) out += ',';
      out += data.columns.empty() ? "c" + std::to_string(j) : data.columns[j];
    }
    out += '\n';
  }
  for (std::size_t i = 0; i < data.rows(); ++i) {
    for (std::size_t j = 0; j < data.cols(); ++j) {
      if (j) out += ',';
      out += format_double(data.values(idx(i), idx(j)));
    }
    out += '\n';
  }
  return out;
}

void save_matrix(const std::filesystem::path& path, const Dataset& data, MatrixFormat format) {
  write_file_atomic(path, format == MatrixFormat::kCsv ? to_csv(data) : to_raw_f64(data.values));
}

NormStats compute_stats(const Dataset& train) {
  if (train.rows() == 0) throw DataError("cannot compute statistics of an empty dataset");
  NormStats s;
  s.mean = train.values.colwise().mean().transpose();
  s.stddev.resize(train.values.cols());
  for (Eigen::Index j = 0; j < train.values.cols(); ++j) {
    s.stddev[j] = std::sqrt((train.values.col(j).array() - s.mean[j]).square().mean());
  }
  return s;
}

Dataset standardize(const Dataset& data, const NormStats& stats) {
  if (stats.mean.size() != data.values.cols() || stats.stddev.size() != data.values.cols()) {
    throw ValidationError("normalization statistics do not match the dataset's column count");
  }
  for (Eigen::Index j = 0; j < stats.stddev.size(); ++j) {
    if (!(stats.stddev[j] > 0.0)) {
      const auto name = data.columns.empty() ? std::to_string(j) : data.columns[static_cast<std::size_t>(j)];
      throw DataError("column '" + name +
                      "' has zero standard deviation; drop it with preprocess.discrete_columns "
                      "or attribute filtering");
    }
  }
  Dataset out = data;
  for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
    out.values.col(j) = (out.values.col(j).array() - stats.mean[j]) / stats.stddev[j];
  }
  return out;
}

Dataset destandardize(const Dataset& data, const NormStats& stats) {
  if (stats.mean.size() != data.values.cols() || stats.stddev.size() != data.values.cols()) {
    throw ValidationError("normalization statistics do not match the dataset's column count");
  }
  Dataset out = data;
  for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
    out.values.col(j) = out.values.col(j).array() * stats.stddev[j] + stats.mean[j];
  }
  return out;
}

double pearson_correlation(const Eigen::Ref<const Eigen::VectorXd>& a,
                           const Eigen::Ref<const Eigen::VectorXd>& b) {
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double denom = std::sqrt((da * da).sum() * (db * db).sum());
  if (!(denom > 0.0)) return 0.0;
  return (da * db).sum() / denom;
}

FilterResult filter_attributes(const Dataset& data, std::span<const std::size_t> discrete_columns,
                               double corr_threshold) {
  if (!(corr_threshold > 0.0 && corr_threshold <= 1.0)) {
    throw ValidationError("correlation threshold must lie in (0, 1]");
  }
  auto name_of = [&](std::size_t j) {
    return data.columns.empty() ? "c" + std::to_string(j) : data.columns[j];
  };
  for (auto d : discrete_columns) {
    if (d >= data.cols()) throw ValidationError("discrete column index " + std::to_string(d) + " out of range");
  }
  FilterReport report;
  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < data.cols(); ++j) {
    if (std::find(discrete_columns.begin(), discrete_columns.end(), j) != discrete_columns.end()) {
      report.dropped.push_back({j, name_of(j), true, 0, 0.0});
    } else {
      candidates.push_back(j);
    }
  }
  for (auto j : candidates) {
    bool keep = true;
    for (auto i : report.kept) {
      const double r = pearson_correlation(data.values.col(idx(i)), data.values.col(idx(j)));
      if (std::abs(r) > corr_threshold) {
        report.dropped.push_back({j, name_of(j), false, i, r});
        keep = false;
        break;
      }
    }
    if (keep) report.kept.push_back(j);
  }
  return {data.select_columns(report.kept), std::move(report)};
}

std::vector<std::size_t> FoldSpec::full_train(std::size_t fold) const {
  std::vector<std::size_t> out = valid.at(fold);
  out.insert(out.end(), train.at(fold).begin(), train.at(fold).end());
  return out;
}

FoldSpec make_folds(std::size_t n, std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw ValidationError("need at least two folds");
  if (n < n_folds) throw ValidationError("fewer datapoints than folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  FoldSpec spec;
  spec.n_folds = n_folds;
  std::size_t start = 0;
  for (std::size_t f = 0; f < n_folds; ++f) {
    const std::size_t size = n / n_folds + (f < n % n_folds ? 1 : 0);
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(start + size));
    std::vector<std::size_t> rest;
    rest.reserve(n - size);
    rest.insert(rest.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(start));
    rest.insert(rest.end(), order.begin() + static_cast<std::ptrdiff_t>(start + size), order.end());
    const std::size_t n_valid = (rest.size() + 8) / 9;
    spec.valid.emplace_back(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_valid));
    spec.train.emplace_back(rest.begin() + static_cast<std::ptrdiff_t>(n_valid), rest.end());
    spec.test.push_back(std::move(test));
    start += size;
  }
  return spec;
}

std::string folds_to_csv(const FoldSpec& folds) {
  std::string out = "fold,role,index\n";
  auto emit = [&](std::size_t f, const char* role, const std::vector<std::size_t>& v) {
    for (auto i : v) out += std::to_string(f) + "," + role + "," + std::to_string(i) + "\n";
  };
  for (std::size_t f = 0; f < folds.n_folds; ++f) {
    emit(f, "test", folds.test[f]);
    emit(f, "valid", folds.valid[f]);
    emit(f, "train", folds.train[f]);
  }
  return out;
}

GrayImage parse_pgm(std::string_view bytes, const std::string& source) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_number = [&](const char* what) {
    skip_space_and_comments();
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), v);
    if (ec != std::errc()) throw DataError(source + ": bad PGM header field " + what);
    pos = static_cast<std::size_t>(ptr - bytes.data());
    return v;
  };
  if (bytes.size() < 2 || bytes.substr(0, 2) != "P5") {
    throw DataError(source + ": not a binary PGM (P5) file");
  }
  pos = 2;
  GrayImage img;
  img.width = read_number("width");
  img.height = read_number("height");
  const auto maxval = read_number("maxval");
  if (maxval != 255) throw DataError(source + ": only 8-bit PGM (maxval 255) is supported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw DataError(source + ": malformed PGM header");
  }
  ++pos;
  const std::size_t count = img.width * img.height;
  if (bytes.size() - pos < count) throw DataError(source + ": truncated PGM pixel data");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + count));
  return img;
}

GrayImage read_pgm(const std::filesystem::path& path) { return parse_pgm(read_file(path), path.string()); }

std::string to_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(image.pixels.begin(), image.pixels.end());
  return out;
}

Dataset extract_patches(std::span<const GrayImage> images, std::size_t patch_size,
                        std::size_t n_patches, Rng& rng, std::vector<std::string>* warnings) {
  if (patch_size == 0) throw ValidationError("patch size must be positive");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].width >= patch_size && images[i].height >= patch_size) {
      usable.push_back(i);
    } else if (warnings != nullptr) {
      warnings->push_back("image " + std::to_string(i) + " (" + std::to_string(images[i].width) + "x" +
                          std::to_string(images[i].height) + ") is smaller than the patch; skipped");
    }
  }
  if (usable.empty()) throw DataError("no image is large enough for " + std::to_string(patch_size) + "-pixel patches");

  const std::size_t dim = patch_size * patch_size;
  Matrix out(idx(n_patches), idx(dim));
  std::uniform_int_distribution<std::size_t> pick_image(0, usable.size() - 1);
  for (std::size_t p = 0; p < n_patches; ++p) {
    const auto& img = images[usable[pick_image(rng)]];
    std::uniform_int_distribution<std::size_t> pick_row(0, img.height - patch_size);
    std::uniform_int_distribution<std::size_t> pick_col(0, img.width - patch_size);
    const std::size_t r0 = pick_row(rng);
    const std::size_t c0 = pick_col(rng);
    for (std::size_t r = 0; r < patch_size; ++r) {
      for (std::size_t c = 0; c < patch_size; ++c) {
        out(idx(p), idx(r * patch_size + c)) = img.at(r0 + r, c0 + c);
      }
    }
  }
  auto d = make_dataset(std::move(out), "patches");
  for (std::size_t j = 0; j < dim; ++j) d.columns[j] = "px" + std::to_string(j);
  return d;
}

double dequantize_value(double pixel, double noise) {
  // Rounding of pixel + noise can reach the next level when noise is just
  // below 1; keep the value inside its own bin.
  const double v = (pixel + noise) / 256.0;
  const double upper = (pixel + 1.0) / 256.0;
  return v < upper ? v : std::nextafter(upper, 0.0);
}

Dataset dequantize(const Dataset& patches, bool drop_last_pixel, Rng& rng) {
  for (Eigen::Index i = 0; i < patches.values.size(); ++i) {
    const double v = patches.values.data()[i];
    if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
      throw ValidationError("dequantize expects integer pixel values in [0, 255], got " + format_double(v));
    }
  }
  if (drop_last_pixel && patches.cols() == 0) throw ValidationError("no pixel to drop");
  std::uniform_real_distribution<double> noise(0.0, 1.0);
  Dataset out = patches;
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    out.values.data()[i] = dequantize_value(out.values.data()[i], noise(rng));
  }
  if (drop_last_pixel) {
    std::vector<std::size_t> keep(patches.cols() - 1);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    out = out.select_columns(keep);
  }
  return out;
}

}  // namespace rnade
