#include "rnade/model_file.hpp"

#include <bit>
#include <type_traits>

#include "rnade/errors.hpp"

namespace rnade {

namespace {

using Index = Eigen::Index;

class Writer {
 public:
  void bytes(std::string_view s) { out_ += s; }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void count(std::size_t n) { u64(static_cast<std::uint64_t>(n)); }

  // Row-major dump of a matrix.
  template <typename M>
  void matrix(const M& m) {
    count(static_cast<std::size_t>(m.size()));
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }
  void vector(const Eigen::VectorXd& v) {
    count(static_cast<std::size_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) f64(v[i]);
  }
  // V stored as D x H x K from its H x (D*K) in-memory layout.
  void head_tensor(const Eigen::MatrixXd& V, std::size_t D, std::size_t K) {
    count(static_cast<std::size_t>(V.size()));
    for (std::size_t d = 0; d < D; ++d) {
      for (Index h = 0; h < V.rows(); ++h) {
        for (std::size_t k = 0; k < K; ++k) f64(V(h, static_cast<Index>(d * K + k)));
      }
    }
  }
  void indices(const std::vector<std::size_t>& v) {
    count(v.size());
    for (auto i : v) u64(i);
  }
  void string(const std::string& s) {
    count(s.size());
    out_ += s;
  }

  std::string& str() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw CorruptModelError(source_ + ": " + what + " at byte offset " + std::to_string(pos_));
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("unexpected end of model data");
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto s = bytes(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  std::uint64_t u64() {
    auto s = bytes(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(s[static_cast<std::size_t>(i)]);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }

  std::size_t count(std::size_t element_size, std::uint64_t expected) {
    const auto n = u64();
    if (n != expected) {
      fail("tensor has " + std::to_string(n) + " elements, header implies " + std::to_string(expected));
    }
    need(static_cast<std::size_t>(n) * element_size);
    return static_cast<std::size_t>(n);
  }
  // Sizes read from the header, bounded by the remaining bytes.
  std::size_t dim(const char* what) {
    const auto n = u64();
    if (n > bytes_.size()) fail(std::string("implausible ") + what + " " + std::to_string(n));
    return static_cast<std::size_t>(n);
  }

  void matrix(Eigen::MatrixXd& m, std::size_t rows, std::size_t cols) {
    count(8, static_cast<std::uint64_t>(rows) * cols);
    m.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
    }
  }
  void vector(Eigen::VectorXd& v, std::size_t n) {
    count(8, n);
    v.resize(static_cast<Index>(n));
    for (Index i = 0; i < v.size(); ++i) v[i] = f64();
  }
  void head_tensor(Eigen::MatrixXd& V, std::size_t D, std::size_t H, std::size_t K) {
    count(8, static_cast<std::uint64_t>(D) * H * K);
    V.resize(static_cast<Index>(H), static_cast<Index>(D * K));
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t k = 0; k < K; ++k) V(static_cast<Index>(h), static_cast<Index>(d * K + k)) = f64();
      }
    }
  }
  std::vector<std::size_t> indices() {
    const auto n = dim("index count");
    need(n * 8);
    std::vector<std::size_t> v(n);
    for (auto& x : v) x = static_cast<std::size_t>(u64());
    return v;
  }
  std::string string() {
    const auto n = dim("string length");
    return std::string(bytes(n));
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

void write_gaussian_tensors(Writer& w, const FullGaussian& g) {
  w.vector(g.mean);
  w.matrix(g.covariance);
}

FullGaussian read_gaussian_tensors(Reader& r, std::size_t D) {
  FullGaussian g;
  r.vector(g.mean, D);
  r.matrix(g.covariance, D, D);
  return g;
}

template <typename F>
auto as_corrupt(const std::string& source, F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw CorruptModelError(source + ": " + e.what());
  }
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kRnade:
      return "rnade";
    case ModelKind::kGaussian:
      return "gaussian";
    case ModelKind::kMog:
      return "mog";
  }
  return "unknown";
}

Dataset Preprocessing::apply(const Dataset& raw) const {
  if (raw.cols() != input_columns) {
    throw DataError(raw.provenance + ": expected " + std::to_string(input_columns) + " input columns, found " +
                    std::to_string(raw.cols()));
  }
  Dataset out = raw.select_columns(kept);
  if (!names.empty()) out.columns = names;
  if (stats) out = standardize(out, *stats);
  return out;
}

Dataset Preprocessing::invert(const Dataset& model_space) const {
  Dataset out = stats ? destandardize(model_space, *stats) : model_space;
  if (!names.empty() && names.size() == out.cols()) out.columns = names;
  return out;
}

std::size_t ModelFile::dim() const {
  return std::visit([](const auto& m) -> std::size_t {
    if constexpr (std::is_same_v<std::decay_t<decltype(m)>, RnadeParams>) {
      return m.D;
    } else {
      return m.dim();
    }
  }, model);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string serialize(const ModelFile& file) {
  Writer w;
  w.bytes(kModelMagic);
  w.u32(kModelFormatVersion);
  w.u8(static_cast<std::uint8_t>(file.kind()));
  if (const auto* p = std::get_if<RnadeParams>(&file.model)) {
    p->validate();
    w.count(p->D);
    w.count(p->H);
    w.count(p->K);
    w.u8(static_cast<std::uint8_t>(p->family));
    w.u8(static_cast<std::uint8_t>(p->activation));
    w.vector(p->rho);
    w.matrix(p->W);
    w.vector(p->c);
    const std::pair<const Eigen::MatrixXd*, const Eigen::MatrixXd*> heads[] = {
        {&p->V_alpha, &p->b_alpha}, {&p->V_mu, &p->b_mu}, {&p->V_sigma, &p->b_sigma}};
    for (const auto& [V, b] : heads) {
      w.head_tensor(*V, p->D, p->K);
      w.matrix(*b);
    }
    if (!file.ordering.empty()) Ordering{file.ordering}.validate(p->D);
    w.indices(file.ordering);
  } else if (const auto* g = std::get_if<FullGaussian>(&file.model)) {
    g->validate();
    w.count(g->dim());
    write_gaussian_tensors(w, *g);
  } else {
    const auto& m = std::get<MogModel>(file.model);
    m.validate();
    w.count(m.dim());
    w.count(m.components.size());
    w.vector(m.weights);
    for (const auto& c : m.components) write_gaussian_tensors(w, c);
  }

  if (file.preprocessing) {
    const auto& pp = *file.preprocessing;
    if (pp.kept.size() != file.dim()) {
      throw ValidationError("preprocessing keeps a different number of columns than the model has");
    }
    w.u8(1);
    w.count(pp.input_columns);
    w.indices(pp.kept);
    w.count(pp.names.size());
    for (const auto& n : pp.names) w.string(n);
    w.u8(pp.stats ? 1 : 0);
    if (pp.stats) {
      w.vector(pp.stats->mean);
      w.vector(pp.stats->stddev);
    }
  } else {
    w.u8(0);
  }
  const auto checksum = fnv1a64(w.str());
  w.u64(checksum);
  return std::move(w.str());
}

ModelFile deserialize(std::string_view bytes, const std::string& source) {
  const std::size_t min_size = kModelMagic.size() + 4 + 1 + 8;
  if (bytes.size() < min_size) {
    throw CorruptModelError(source + ": model file too short (" + std::to_string(bytes.size()) + " bytes)");
  }
  if (bytes.substr(0, kModelMagic.size()) != kModelMagic) {
    throw CorruptModelError(source + ": not a model file (bad magic)");
  }
  const auto body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8), source);
  const auto stored = tail.u64();
  if (stored != fnv1a64(body)) throw CorruptModelError(source + ": checksum mismatch (truncated or modified file)");

  Reader r(body, source);
  r.bytes(kModelMagic.size());
  const auto version = r.u32();
  if (version != kModelFormatVersion) r.fail("unsupported format version " + std::to_string(version));
  const auto kind = r.u8();

  ModelFile file;
  if (kind == static_cast<std::uint8_t>(ModelKind::kRnade)) {
    RnadeParams p;
    p.D = r.dim("D");
    p.H = r.dim("H");
    p.K = r.dim("K");
    const auto family = r.u8();
    const auto activation = r.u8();
    if (family > 1) r.fail("unknown family tag " + std::to_string(family));
    if (activation > 1) r.fail("unknown activation tag " + std::to_string(activation));
    if (p.D == 0 || p.H == 0 || p.K == 0) r.fail("zero model dimension");
    p.family = static_cast<Family>(family);
    p.activation = static_cast<Activation>(activation);
    r.vector(p.rho, p.D);
    r.matrix(p.W, p.H, p.D - 1);
    r.vector(p.c, p.H);
    const std::pair<Eigen::MatrixXd*, Eigen::MatrixXd*> heads[] = {
        {&p.V_alpha, &p.b_alpha}, {&p.V_mu, &p.b_mu}, {&p.V_sigma, &p.b_sigma}};
    for (const auto& [V, b] : heads) {
      r.head_tensor(*V, p.D, p.H, p.K);
      r.matrix(*b, p.D, p.K);
    }
    file.ordering = r.indices();
    as_corrupt(source, [&] {
      p.validate();
      if (!file.ordering.empty()) Ordering{file.ordering}.validate(p.D);
      return 0;
    });
    file.model = std::move(p);
  } else if (kind == static_cast<std::uint8_t>(ModelKind::kGaussian)) {
    const auto D = r.dim("D");
    auto g = read_gaussian_tensors(r, D);
    as_corrupt(source, [&] {
      g.validate();
      return 0;
    });
    file.model = std::move(g);
  } else if (kind == static_cast<std::uint8_t>(ModelKind::kMog)) {
    const auto D = r.dim("D");
    const auto n = r.dim("component count");
    MogModel m;
    r.vector(m.weights, n);
    for (std::size_t k = 0; k < n; ++k) m.components.push_back(read_gaussian_tensors(r, D));
    as_corrupt(source, [&] {
      m.validate();
      return 0;
    });
    file.model = std::move(m);
  } else {
    r.fail("unknown model kind " + std::to_string(kind));
  }

  const auto has_pp = r.u8();
  if (has_pp > 1) r.fail("bad preprocessing flag");
  if (has_pp == 1) {
    Preprocessing pp;
    pp.input_columns = r.dim("input column count");
    pp.kept = r.indices();
    const auto n_names = r.dim("name count");
    for (std::size_t i = 0; i < n_names; ++i) pp.names.push_back(r.string());
    const auto has_stats = r.u8();
    if (has_stats > 1) r.fail("bad statistics flag");
    if (has_stats == 1) {
      NormStats s;
      r.vector(s.mean, pp.kept.size());
      r.vector(s.stddev, pp.kept.size());
      pp.stats = std::move(s);
    }
    if (pp.kept.size() != file.dim()) r.fail("preprocessing keeps a different number of columns than the model has");
    for (auto k : pp.kept) {
      if (k >= pp.input_columns) r.fail("kept column index out of range");
    }
    file.preprocessing = std::move(pp);
  }
  if (!r.at_end()) r.fail("trailing bytes after model data");
  return file;
}

void save_model(const std::filesystem::path& path, const ModelFile& file) {
  write_file_atomic(path, serialize(file));
}

ModelFile load_model(const std::filesystem::path& path) {
  return deserialize(read_file(path), path.string());
}

}  // namespace rnade
