#include "rnade/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "rnade/errors.hpp"

namespace rnade {

namespace {

using Entry = ConfigEntries::Entry;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const Entry& e, const std::string& why) {
  throw ConfigError(e.origin + ": " + key + " = '" + e.value + "': " + why);
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find(',', start);
    const auto item = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (!item.empty()) out.emplace_back(item);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

std::size_t to_size(const std::string& key, const Entry& e, std::string_view text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    bad_value(key, e, "expected a non-negative integer");
  }
  return v;
}

double to_double(const std::string& key, const Entry& e, std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
    bad_value(key, e, "expected a finite number");
  }
  return v;
}

bool to_bool(const std::string& key, const Entry& e) {
  const auto& v = e.value;
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  bad_value(key, e, "expected true or false");
}

std::filesystem::path to_path(const Entry& e) {
  std::filesystem::path p(e.value);
  return p.is_absolute() || e.base_dir.empty() ? p : e.base_dir / p;
}

// Handlers receive the entry and update the config.
struct Handler {
  void (*apply)(RunConfig&, const std::string&, const Entry&);
};

template <typename F>
std::vector<std::size_t> size_list(const std::string& key, const Entry& e, F&& check) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(e.value)) out.push_back(to_size(key, e, item));
  if (out.empty()) bad_value(key, e, "expected at least one value");
  for (auto v : out) check(v);
  return out;
}

std::vector<double> double_list(const std::string& key, const Entry& e) {
  std::vector<double> out;
  for (const auto& item : split_list(e.value)) out.push_back(to_double(key, e, item));
  if (out.empty()) bad_value(key, e, "expected at least one value");
  return out;
}

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = {
      {"data.kind", {[](RunConfig& c, const std::string& k, const Entry& e) {
         if (e.value == "table") {
           c.data_kind = DataKind::kTable;
         } else if (e.value == "patches") {
           c.data_kind = DataKind::kPatches;
         } else {
           bad_value(k, e, "expected table or patches");
         }
       }}},
      {"data.train", {[](RunConfig& c, const std::string&, const Entry& e) { c.train_path = to_path(e); }}},
      {"data.valid", {[](RunConfig& c, const std::string&, const Entry& e) { c.valid_path = to_path(e); }}},
      {"data.test", {[](RunConfig& c, const std::string&, const Entry& e) { c.test_path = to_path(e); }}},
      {"data.format", {[](RunConfig& c, const std::string& k, const Entry& e) {
         try {
           c.format = parse_matrix_format(e.value);
         } catch (const ValidationError& err) {
           bad_value(k, e, err.what());
         }
       }}},
      {"data.header", {[](RunConfig& c, const std::string& k, const Entry& e) { c.csv.header = to_bool(k, e); }}},
      {"data.separator", {[](RunConfig& c, const std::string& k, const Entry& e) {
         if (e.value == "tab" || e.value == "\\t") {
           c.csv.separator = '\t';
         } else if (e.value == "semicolon") {
           c.csv.separator = ';';
         } else if (e.value == "comma") {
           c.csv.separator = ',';
         } else if (e.value.size() == 1) {
           c.csv.separator = e.value[0];
         } else {
           bad_value(k, e, "expected a single character, comma, semicolon or tab");
         }
       }}},
      {"data.images", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.images.clear();
         for (const auto& item : split_list(e.value)) {
           Entry one = e;
           one.value = item;
           const auto p = to_path(one);
           if (std::filesystem::is_directory(p)) {
             std::vector<std::filesystem::path> found;
             for (const auto& f : std::filesystem::directory_iterator(p)) {
               if (f.path().extension() == ".pgm") found.push_back(f.path());
             }
             std::sort(found.begin(), found.end());
             c.images.insert(c.images.end(), found.begin(), found.end());
           } else {
             c.images.push_back(p);
           }
         }
         if (c.images.empty()) bad_value(k, e, "no PGM images found");
       }}},
      {"data.patch_size", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.patch_size = to_size(k, e, e.value);
         if (c.patch_size == 0) bad_value(k, e, "must be positive");
       }}},
      {"data.patches", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.n_patches = to_size(k, e, e.value);
       }}},
      {"data.valid_fraction", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.valid_fraction = to_double(k, e, e.value);
         if (c.valid_fraction < 0.0 || c.valid_fraction >= 1.0) bad_value(k, e, "must lie in [0, 1)");
       }}},
      {"data.test_fraction", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.test_fraction = to_double(k, e, e.value);
         if (c.test_fraction < 0.0 || c.test_fraction >= 1.0) bad_value(k, e, "must lie in [0, 1)");
       }}},
      {"preprocess.discrete", {[](RunConfig& c, const std::string&, const Entry& e) {
         c.discrete = split_list(e.value);
       }}},
      {"preprocess.filter", {[](RunConfig& c, const std::string& k, const Entry& e) { c.filter = to_bool(k, e); }}},
      {"preprocess.corr_threshold", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.corr_threshold = to_double(k, e, e.value);
         if (!(c.corr_threshold > 0.0 && c.corr_threshold <= 1.0)) bad_value(k, e, "must lie in (0, 1]");
       }}},
      {"preprocess.standardize", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.standardize = to_bool(k, e);
       }}},
      {"preprocess.dequantize", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.dequantize = to_bool(k, e);
       }}},
      {"preprocess.drop_last_pixel", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.drop_last_pixel = to_bool(k, e);
       }}},
      {"model.type", {[](RunConfig& c, const std::string& k, const Entry& e) {
         if (e.value != "rnade" && e.value != "gaussian" && e.value != "mog") {
           bad_value(k, e, "expected rnade, gaussian or mog");
         }
         c.model_type = e.value;
       }}},
      {"model.hidden", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.hidden = size_list(k, e, [&](std::size_t v) {
           if (v == 0) bad_value(k, e, "must be positive");
         });
       }}},
      {"model.components", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.components = size_list(k, e, [&](std::size_t v) {
           if (v == 0) bad_value(k, e, "must be positive");
         });
       }}},
      {"model.family", {[](RunConfig& c, const std::string& k, const Entry& e) {
         try {
           c.family = parse_family(e.value);
         } catch (const Error& err) {
           bad_value(k, e, err.what());
         }
       }}},
      {"model.activation", {[](RunConfig& c, const std::string& k, const Entry& e) {
         try {
           c.activation = parse_activation(e.value);
         } catch (const Error& err) {
           bad_value(k, e, err.what());
         }
       }}},
      {"model.ordering", {[](RunConfig& c, const std::string& k, const Entry& e) {
         if (e.value != "identity" && e.value != "random") {
           for (const auto& item : split_list(e.value)) to_size(k, e, item);
         }
         c.ordering = e.value;
       }}},
      {"train.lr", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.lr = double_list(k, e);
         for (double v : c.lr) {
           if (v < 0.0) bad_value(k, e, "learning rates must be non-negative");
         }
       }}},
      {"train.weight_decay", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.weight_decay = double_list(k, e);
         for (double v : c.weight_decay) {
           if (v < 0.0) bad_value(k, e, "weight decay must be non-negative");
         }
       }}},
      {"train.epochs", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.train.epochs = to_size(k, e, e.value);
         if (c.train.epochs == 0) bad_value(k, e, "must be at least 1");
       }}},
      {"train.minibatch_size", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.train.minibatch_size = to_size(k, e, e.value);
         if (c.train.minibatch_size == 0) bad_value(k, e, "must be at least 1");
       }}},
      {"train.minibatches_per_epoch", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.train.minibatches_per_epoch = to_size(k, e, e.value);
         if (c.train.minibatches_per_epoch == 0) bad_value(k, e, "must be at least 1");
       }}},
      {"train.momentum", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.train.momentum = to_double(k, e, e.value);
         if (!(c.train.momentum >= 0.0 && c.train.momentum < 1.0)) bad_value(k, e, "must lie in [0, 1)");
       }}},
      {"train.momentum_start_epoch", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.train.momentum_start_epoch = to_size(k, e, e.value);
         if (c.train.momentum_start_epoch == 0) bad_value(k, e, "epochs are counted from 1");
       }}},
      {"train.mean_grad_scaling", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.train.mean_grad_scaling = to_bool(k, e);
       }}},
      {"train.patience", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.train.patience = to_size(k, e, e.value);
       }}},
      {"em.components", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.em_components = size_list(k, e, [&](std::size_t v) {
           if (v == 0) bad_value(k, e, "must be positive");
         });
       }}},
      {"em.iterations", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.em.iterations = to_size(k, e, e.value);
       }}},
      {"em.batch_size", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.em.batch_size = to_size(k, e, e.value);
         if (c.em.batch_size == 0) bad_value(k, e, "must be at least 1");
       }}},
      {"em.eta0", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.em.eta0 = to_double(k, e, e.value);
         if (!(c.em.eta0 > 0.0 && c.em.eta0 <= 1.0)) bad_value(k, e, "must lie in (0, 1]");
       }}},
      {"em.covariance_floor", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.em.covariance_floor = to_double(k, e, e.value);
         if (!(c.em.covariance_floor > 0.0)) bad_value(k, e, "must be positive");
       }}},
      {"folds.count", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.n_folds = to_size(k, e, e.value);
         if (c.n_folds < 2) bad_value(k, e, "need at least two folds");
       }}},
      {"folds.baselines", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.baselines = split_list(e.value);
         for (const auto& b : c.baselines) {
           if (b != "gaussian" && b != "mog") bad_value(k, e, "baselines are gaussian and mog");
         }
       }}},
      {"output.dir", {[](RunConfig& c, const std::string&, const Entry& e) { c.output_dir = to_path(e); }}},
      {"run.seed", {[](RunConfig& c, const std::string& k, const Entry& e) {
         c.seed = to_size(k, e, e.value);
       }}},
  };
  return table;
}

std::pair<std::string, std::string> split_assignment(std::string_view line, const std::string& origin) {
  const auto eq = line.find('=');
  if (eq == std::string_view::npos) throw ConfigError(origin + ": expected 'section.key = value'");
  const auto key = trim(line.substr(0, eq));
  const auto value = trim(line.substr(eq + 1));
  if (key.empty()) throw ConfigError(origin + ": missing key");
  if (!handlers().contains(std::string(key))) {
    throw ConfigError(origin + ": unknown configuration key '" + std::string(key) + "'");
  }
  return {std::string(key), std::string(value)};
}

}  // namespace

ConfigEntries parse_config_text(std::string_view text, const std::string& source,
                                const std::filesystem::path& base_dir) {
  ConfigEntries out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    auto line = text.substr(start, end - start);
    start = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto origin = source + ":" + std::to_string(line_no);
    auto [key, value] = split_assignment(line, origin);
    if (out.entries.contains(key)) {
      throw ConfigError(origin + ": duplicate key '" + key + "' (first set at " + out.entries[key].origin + ")");
    }
    out.entries[key] = {value, origin, base_dir};
  }
  return out;
}

void apply_override(ConfigEntries& entries, std::string_view assignment) {
  const std::string origin = "--set " + std::string(assignment);
  auto [key, value] = split_assignment(assignment, origin);
  entries.entries[key] = {value, origin, std::filesystem::current_path()};
}

RunConfig build_run_config(const ConfigEntries& entries) {
  RunConfig c;
  // Order-independent: the table is keyed, application follows key order.
  for (const auto& [key, entry] : entries.entries) handlers().at(key).apply(c, key, entry);
  c.em.seed = c.seed;
  c.train.seed = c.seed;
  if (c.data_kind == DataKind::kPatches && c.images.empty()) {
    throw ConfigError("data.kind = patches needs data.images");
  }
  if (c.data_kind == DataKind::kTable && c.train_path.empty()) throw ConfigError("data.train is required");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  ConfigEntries entries;
  if (!path.empty()) {
    std::string text;
    try {
      text = read_file(path);
    } catch (const DataError&) {
      throw ConfigError("cannot read configuration file " + path.string());
    }
    entries = parse_config_text(text, path.string(), path.parent_path());
  }
  for (const auto& o : overrides) apply_override(entries, o);
  return build_run_config(entries);
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, h] : handlers()) k.push_back(name);
    return k;
  }();
  return keys;
}

std::vector<TrainConfig> RunConfig::train_grid(std::size_t D) const {
  std::vector<std::size_t> perm;
  if (ordering == "random") {
    Rng rng(seed ^ 0x5bd1e995ULL);
    perm = Ordering::random(D, rng).perm;
  } else if (ordering != "identity") {
    for (const auto& item : split_list(ordering)) perm.push_back(static_cast<std::size_t>(std::stoull(item)));
    try {
      Ordering{perm}.validate(D);
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("model.ordering: ") + e.what());
    }
  }
  std::vector<TrainConfig> grid;
  for (double l : lr) {
    for (double wd : weight_decay) {
      for (auto h : hidden) {
        for (auto k : components) {
          TrainConfig t = train;
          t.lr0 = l;
          t.weight_decay = wd;
          t.H = h;
          t.K = k;
          t.family = family;
          t.activation = activation;
          t.seed = seed;
          t.ordering = perm;
          grid.push_back(std::move(t));
        }
      }
    }
  }
  return grid;
}

std::vector<EmConfig> RunConfig::em_grid() const {
  std::vector<EmConfig> grid;
  for (auto k : em_components) {
    EmConfig e = em;
    e.n_components = k;
    e.seed = seed;
    grid.push_back(e);
  }
  return grid;
}

}  // namespace rnade
