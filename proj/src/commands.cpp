#include "rnade/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "rnade/errors.hpp"

namespace rnade {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

// Shuffled split into (test, valid, train) blocks by fraction.
struct Split {
  std::vector<std::size_t> train, valid, test;
};

Split random_split(std::size_t n, double valid_fraction, double test_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(n)));
  const auto rest = n - n_test;
  const auto n_valid = static_cast<std::size_t>(std::round(valid_fraction * static_cast<double>(rest)));
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                 order.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid), order.end());
  return s;
}

std::string trace_csv(const TrainTrace& t) {
  std::string out = "epoch,train_ll,valid_ll,lr,scale_floor_hits\n";
  for (std::size_t e = 0; e < t.epochs(); ++e) {
    out += std::to_string(e + 1) + "," + num(t.train_ll[e]) + "," + (e < t.valid_ll.size() ? num(t.valid_ll[e]) : "") +
           "," + num(t.lr[e]) + "," + std::to_string(t.scale_floor_hits[e]) + "\n";
  }
  return out;
}

std::string em_trace_csv(const EmTrace& t) {
  std::string out = "iteration,batch_ll,valid_ll,eta\n";
  for (std::size_t i = 0; i < t.train_ll.size(); ++i) {
    const std::string v = i + 1 < t.valid_ll.size() ? num(t.valid_ll[i + 1]) : "";
    out += std::to_string(i + 1) + "," + num(t.train_ll[i]) + "," + v + "," + num(t.eta[i]) + "\n";
  }
  return out;
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::string out = "model,mean_ll,stderr,n\n";
  for (const auto& r : reports) out += r.model_id + "," + num(r.mean) + "," + num(r.standard_error) + "," + std::to_string(r.n) + "\n";
  return out;
}

json report_json(const EvalReport& r) {
  return {{"model", r.model_id}, {"mean_ll", r.mean}, {"stderr", r.standard_error}, {"n", r.n}};
}

json ttest_json(const TTestRow& row) {
  return {{"model_a", row.a},
          {"model_b", row.b},
          {"t", std::isfinite(row.result.t) ? json(row.result.t) : json(num(row.result.t))},
          {"dof", row.result.dof},
          {"p_two_sided", row.result.p_two_sided},
          {"p_one_sided", row.result.p_one_sided},
          {"degenerate", row.result.degenerate}};
}

std::string ttest_csv(const std::vector<TTestRow>& rows) {
  std::string out = "model_a,model_b,t,dof,p_two_sided,p_one_sided,mean_diff,degenerate\n";
  for (const auto& r : rows) {
    const auto& d = r.result.diffs;
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    out += r.a + "," + r.b + "," + num(r.result.t) + "," + std::to_string(r.result.dof) + "," +
           num(r.result.p_two_sided) + "," + num(r.result.p_one_sided) + "," + num(mean) + "," +
           (r.result.degenerate ? "true" : "false") + "\n";
  }
  return out;
}

void print_report(std::ostream& out, const EvalReport& r) {
  out << std::left << std::setw(12) << r.model_id << " mean_ll " << std::right << std::setw(12) << fixed(r.mean)
      << "  stderr " << std::setw(9) << fixed(r.standard_error) << "  n " << r.n << "\n";
}

void print_ttest(std::ostream& out, const TTestRow& r) {
  out << r.a << " vs " << r.b << ": t = " << fixed(r.result.t, 3) << " (dof " << r.result.dof
      << "), p two-sided = " << num(r.result.p_two_sided) << ", p one-sided = " << num(r.result.p_one_sided)
      << (r.result.degenerate ? " [degenerate]" : "") << "\n";
}

Dataset load_table(const fs::path& path, const RunConfig& config) {
  return load_matrix(path, config.format, config.csv);
}

std::vector<GrayImage> load_images(const RunConfig& config) {
  std::vector<GrayImage> images;
  for (const auto& p : config.images) images.push_back(read_pgm(p));
  return images;
}

}  // namespace

Dataset load_raw_dataset(const RunConfig& config, std::ostream& log) {
  if (config.data_kind == DataKind::kTable) {
    auto d = load_table(config.train_path, config);
    d.validate();
    return d;
  }
  const auto images = load_images(config);
  Rng rng(config.seed);
  std::vector<std::string> warnings;
  auto patches = extract_patches(images, config.patch_size, config.n_patches, rng, &warnings);
  for (const auto& w : warnings) log << "warning: " << w << "\n";
  if (config.dequantize) {
    patches = dequantize(patches, config.drop_last_pixel, rng);
  } else if (config.drop_last_pixel) {
    std::vector<std::size_t> keep(patches.cols() - 1);
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    patches = patches.select_columns(keep);
  }
  patches.provenance = std::to_string(config.n_patches) + " patches from " + std::to_string(images.size()) + " images";
  return patches;
}

ColumnSelection select_columns(const RunConfig& config, const Dataset& raw) {
  std::vector<std::size_t> discrete;
  for (const auto& token : config.discrete) {
    const auto it = std::find(raw.columns.begin(), raw.columns.end(), token);
    if (it != raw.columns.end()) {
      discrete.push_back(static_cast<std::size_t>(it - raw.columns.begin()));
      continue;
    }
    std::size_t idx = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), idx);
    if (ec != std::errc() || ptr != token.data() + token.size() || idx >= raw.cols()) {
      throw ConfigError("preprocess.discrete: '" + token + "' is neither a column name nor a column index");
    }
    discrete.push_back(idx);
  }
  ColumnSelection out;
  if (config.filter) {
    out.report = filter_attributes(raw, discrete, config.corr_threshold).report;
  } else {
    // Without correlation filtering only the discrete columns go.
    for (std::size_t j = 0; j < raw.cols(); ++j) {
      if (std::find(discrete.begin(), discrete.end(), j) == discrete.end()) {
        out.report.kept.push_back(j);
      } else {
        out.report.dropped.push_back({j, raw.columns[j], true, 0, 0.0});
      }
    }
  }
  out.kept = out.report.kept;
  if (out.kept.empty()) throw DataError("preprocessing removed every column");
  return out;
}

Preprocessing fit_preprocessing(const RunConfig& config, const Dataset& raw, const ColumnSelection& columns,
                                std::span<const std::size_t> train_rows) {
  Preprocessing pp;
  pp.input_columns = raw.cols();
  pp.kept = columns.kept;
  for (auto j : columns.kept) pp.names.push_back(raw.columns[j]);
  if (config.standardize) pp.stats = compute_stats(raw.select_rows(train_rows).select_columns(columns.kept));
  return pp;
}

GridSearch grid_search(const RunConfig& config, const Dataset& train, const Dataset* valid, std::ostream& log) {
  const auto grid = config.train_grid(train.cols());
  if (grid.size() > 1 && valid == nullptr) {
    throw ConfigError("a hyperparameter grid needs a validation set (data.valid or data.valid_fraction)");
  }
  GridSearch out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& g = grid[i];
    auto result = sgd_train(train, valid, g);
    log << "  lr " << num(g.lr0) << " wd " << num(g.weight_decay) << " H " << g.H << " K " << g.K;
    if (valid != nullptr) {
      log << ": best valid " << fixed(result.early_stop.best_validation_ll) << " at epoch "
          << result.early_stop.best_epoch;
    } else {
      log << ": final train " << fixed(result.trace.train_ll.back());
    }
    log << "\n";
    out.runs.push_back({g, std::move(result)});
    if (out.runs[i].result.early_stop.best_validation_ll > out.runs[out.best].result.early_stop.best_validation_ll) {
      out.best = i;
    }
  }
  return out;
}

MogSearch mog_search(const RunConfig& config, const Dataset& train, const Dataset* valid) {
  MogSearch out;
  out.configs = config.em_grid();
  if (out.configs.size() > 1 && valid == nullptr) {
    throw ConfigError("a component grid needs a validation set (data.valid or data.valid_fraction)");
  }
  for (std::size_t i = 0; i < out.configs.size(); ++i) {
    out.runs.push_back(train_mog(train, valid, out.configs[i]));
    if (out.runs[i].trace.best_valid_ll > out.runs[out.best].trace.best_valid_ll) out.best = i;
  }
  return out;
}

FoldsResult run_folds(const RunConfig& config, const Dataset& raw, std::ostream& log, bool write_outputs) {
  if (config.model_type != "rnade") throw ConfigError("folds runs RNADE; set model.type = rnade");
  FoldsResult out;
  out.columns = select_columns(config, raw);
  out.folds = make_folds(raw.rows(), config.n_folds, config.seed);
  out.models.push_back("rnade");
  for (const auto& b : config.baselines) out.models.push_back(b);
  for (const auto& d : out.columns.report.dropped) {
    log << "dropped column " << d.name
        << (d.discrete ? " (discrete)" : " (|r| = " + fixed(std::abs(d.correlation), 4) + " with " + raw.columns[d.partner] + ")")
        << "\n";
  }
  if (write_outputs) {
    ensure_dir(config.output_dir);
    write_file_atomic(config.output_dir / "folds.csv", folds_to_csv(out.folds));
  }

  std::string fold_rows = "fold,model,mean_ll,stderr,n\n";
  std::string selection_rows = "fold,lr,weight_decay,hidden,components,best_valid_ll,best_epoch,final_epochs,threshold_reached\n";
  json lines = json::array();
  for (std::size_t f = 0; f < config.n_folds; ++f) {
    log << "fold " << f + 1 << "/" << config.n_folds << "\n";
    const auto full_train = out.folds.full_train(f);
    const auto pp = fit_preprocessing(config, raw, out.columns, full_train);
    const auto train = pp.apply(raw.select_rows(out.folds.train[f]));
    const auto valid = pp.apply(raw.select_rows(out.folds.valid[f]));
    const auto all_train = pp.apply(raw.select_rows(full_train));
    const auto test = pp.apply(raw.select_rows(out.folds.test[f]));

    const auto search = grid_search(config, train, &valid, log);
    const auto& best = search.runs[search.best];
    const auto final_run = early_stopped_final_train(all_train, best.result.early_stop, best.config);
    log << "  final retrain stopped after " << final_run.stopped_epoch << " epochs"
        << (final_run.threshold_reached ? "" : " (threshold not reached)") << "\n";
    const auto ordering = best.config.resolved_ordering(all_train.cols());
    std::map<std::string, EvalReport> reports;
    reports["rnade"] = evaluate(final_run.params, test, ordering, "rnade");

    FoldSelection sel{f, best.config, best.result.early_stop.best_validation_ll, best.result.early_stop.best_epoch,
                      final_run.stopped_epoch, final_run.threshold_reached};
    out.selection.push_back(sel);
    selection_rows += std::to_string(f + 1) + "," + num(sel.chosen.lr0) + "," + num(sel.chosen.weight_decay) + "," +
                      std::to_string(sel.chosen.H) + "," + std::to_string(sel.chosen.K) + "," + num(sel.best_valid_ll) +
                      "," + std::to_string(sel.best_epoch) + "," + std::to_string(sel.final_epochs) + "," +
                      (sel.threshold_reached ? "true" : "false") + "\n";

    const fs::path fold_dir = config.output_dir / ("fold_" + std::to_string(f + 1));
    if (write_outputs) {
      ensure_dir(fold_dir);
      save_model(fold_dir / "rnade.bin", {final_run.params, best.config.ordering, pp});
      write_file_atomic(fold_dir / "rnade_valid_trace.csv", trace_csv(best.result.trace));
      write_file_atomic(fold_dir / "rnade_final_trace.csv", trace_csv(final_run.trace));
    }
    for (const auto& b : config.baselines) {
      if (b == "gaussian") {
        const auto g = fit_gaussian_mle(all_train);
        reports[b] = evaluate(g, test, b);
        if (write_outputs) save_model(fold_dir / "gaussian.bin", {g, {}, pp});
      } else {
        const auto ms = mog_search(config, train, &valid);
        const auto& fit = ms.runs[ms.best];
        reports[b] = evaluate(fit.model, test, b);
        if (write_outputs) {
          save_model(fold_dir / "mog.bin", {fit.model, {}, pp});
          write_file_atomic(fold_dir / "mog_trace.csv", em_trace_csv(fit.trace));
        }
      }
    }
    for (const auto& m : out.models) {
      const auto& r = reports.at(m);
      out.per_fold[m].push_back(r);
      log << "  ";
      print_report(log, r);
      fold_rows += std::to_string(f + 1) + "," + m + "," + num(r.mean) + "," + num(r.standard_error) + "," +
                   std::to_string(r.n) + "\n";
      auto j = report_json(r);
      j["fold"] = f + 1;
      lines.push_back(j);
    }
  }

  std::string summary_rows = "model,mean_ll,stderr_across_folds,n_folds\n";
  for (const auto& m : out.models) {
    std::vector<double> means;
    for (const auto& r : out.per_fold[m]) means.push_back(r.mean);
    const auto s = summarize(means, m);
    out.aggregate[m] = s.mean;
    summary_rows += m + "," + num(s.mean) + "," + num(s.standard_error) + "," + std::to_string(means.size()) + "\n";
  }
  std::vector<double> rnade_means;
  for (const auto& r : out.per_fold["rnade"]) rnade_means.push_back(r.mean);
  for (const auto& b : config.baselines) {
    std::vector<double> base;
    for (const auto& r : out.per_fold[b]) base.push_back(r.mean);
    out.ttests.push_back({"rnade", b, paired_t_test(rnade_means, base)});
  }

  if (write_outputs) {
    write_file_atomic(config.output_dir / "fold_results.csv", fold_rows);
    write_file_atomic(config.output_dir / "selection.csv", selection_rows);
    write_file_atomic(config.output_dir / "summary.csv", summary_rows);
    write_file_atomic(config.output_dir / "ttests.csv", ttest_csv(out.ttests));
    std::string jl;
    for (const auto& j : lines) jl += j.dump() + "\n";
    for (const auto& m : out.models) jl += json{{"model", m}, {"aggregate_mean_ll", out.aggregate[m]}}.dump() + "\n";
    for (const auto& t : out.ttests) jl += ttest_json(t).dump() + "\n";
    write_file_atomic(config.output_dir / "results.jsonl", jl);
  }
  return out;
}

namespace {

// Training-style commands share the data handling.
struct Prepared {
  Dataset raw;
  ColumnSelection columns;
  Preprocessing preprocessing;
  Dataset train, valid, test;
  bool has_valid = false;
  bool has_test = false;
};

Prepared prepare(const RunConfig& config, std::ostream& log) {
  Prepared p;
  p.raw = load_raw_dataset(config, log);
  p.columns = select_columns(config, p.raw);
  const bool external_valid = !config.valid_path.empty();
  const bool external_test = !config.test_path.empty();
  const auto split = random_split(p.raw.rows(), external_valid ? 0.0 : config.valid_fraction,
                                  external_test ? 0.0 : config.test_fraction, config.seed);
  if (split.train.empty()) throw DataError("no training rows left after splitting");
  p.preprocessing = fit_preprocessing(config, p.raw, p.columns, split.train);
  p.train = p.preprocessing.apply(p.raw.select_rows(split.train));
  if (external_valid) {
    p.valid = p.preprocessing.apply(load_table(config.valid_path, config));
    p.has_valid = true;
  } else if (!split.valid.empty()) {
    p.valid = p.preprocessing.apply(p.raw.select_rows(split.valid));
    p.has_valid = true;
  }
  if (external_test) {
    p.test = p.preprocessing.apply(load_table(config.test_path, config));
    p.has_test = true;
  } else if (!split.test.empty()) {
    p.test = p.preprocessing.apply(p.raw.select_rows(split.test));
    p.has_test = true;
  }
  log << "data: " << p.train.rows() << " training rows, " << (p.has_valid ? p.valid.rows() : 0) << " validation, "
      << (p.has_test ? p.test.rows() : 0) << " test, " << p.train.cols() << " dimensions\n";
  return p;
}

void write_eval_outputs(const fs::path& dir, const EvalReport& r) {
  write_file_atomic(dir / "eval.csv", report_csv({r}));
  write_file_atomic(dir / "eval.jsonl", report_json(r).dump() + "\n");
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& log) {
  if (config.model_type != "rnade") throw ConfigError("train fits RNADE models; use baseline for model.type = " + config.model_type);
  const auto p = prepare(config, log);
  const auto search = grid_search(config, p.train, p.has_valid ? &p.valid : nullptr, log);
  const auto& best = search.runs[search.best];
  ensure_dir(config.output_dir);
  save_model(config.output_dir / "model.bin", {best.result.params, best.config.ordering, p.preprocessing});
  write_file_atomic(config.output_dir / "trace.csv", trace_csv(best.result.trace));
  std::string sel = "lr,weight_decay,hidden,components,best_valid_ll,best_epoch,final_train_ll\n";
  for (const auto& r : search.runs) {
    sel += num(r.config.lr0) + "," + num(r.config.weight_decay) + "," + std::to_string(r.config.H) + "," +
           std::to_string(r.config.K) + "," + (p.has_valid ? num(r.result.early_stop.best_validation_ll) : "") + "," +
           std::to_string(r.result.early_stop.best_epoch) + "," + num(r.result.trace.train_ll.back()) + "\n";
  }
  write_file_atomic(config.output_dir / "selection.csv", sel);
  out << "trained RNADE-" << (config.family == Family::MoG ? "MoG" : "MoL") << " D=" << p.train.cols()
      << " H=" << best.config.H << " K=" << best.config.K << " lr=" << num(best.config.lr0) << "\n";
  out << "final train_ll " << fixed(best.result.trace.train_ll.back());
  if (p.has_valid) out << ", best valid_ll " << fixed(best.result.early_stop.best_validation_ll) << " at epoch " << best.result.early_stop.best_epoch;
  out << "\n";
  if (p.has_test) {
    const auto ordering = best.config.resolved_ordering(p.train.cols());
    const auto r = evaluate(best.result.params, p.test, ordering, "rnade");
    print_report(out, r);
    write_eval_outputs(config.output_dir, r);
  }
  out << "model written to " << (config.output_dir / "model.bin").string() << "\n";
  return 0;
}

int cmd_baseline(const RunConfig& config, std::ostream& out, std::ostream& log) {
  if (config.model_type == "rnade") throw ConfigError("baseline needs model.type = gaussian or mog");
  const auto p = prepare(config, log);
  ensure_dir(config.output_dir);
  EvalReport r;
  if (config.model_type == "gaussian") {
    const auto g = fit_gaussian_mle(p.train);
    save_model(config.output_dir / "model.bin", {g, {}, p.preprocessing});
    out << "fitted full-covariance Gaussian, train_ll " << fixed(mean_log_likelihood(g, p.train)) << "\n";
    if (p.has_test) r = evaluate(g, p.test, "gaussian");
  } else {
    const auto ms = mog_search(config, p.train, p.has_valid ? &p.valid : nullptr);
    const auto& fit = ms.runs[ms.best];
    save_model(config.output_dir / "model.bin", {fit.model, {}, p.preprocessing});
    write_file_atomic(config.output_dir / "em_trace.csv", em_trace_csv(fit.trace));
    out << "fitted MoG with " << fit.model.components.size() << " components, train_ll "
        << fixed(mean_log_likelihood(fit.model, p.train)) << "\n";
    if (!fit.trace.empty_component_events.empty()) {
      log << "warning: " << fit.trace.empty_component_events.size() << " empty-component events during EM\n";
    }
    if (p.has_test) r = evaluate(fit.model, p.test, "mog");
  }
  if (p.has_test) {
    print_report(out, r);
    write_eval_outputs(config.output_dir, r);
  }
  out << "model written to " << (config.output_dir / "model.bin").string() << "\n";
  return 0;
}

int cmd_folds(const RunConfig& config, std::ostream& out, std::ostream& log) {
  const auto raw = load_raw_dataset(config, log);
  const auto r = run_folds(config, raw, log, true);
  out << "cross-validated mean test log-likelihood over " << config.n_folds << " folds\n";
  for (const auto& m : r.models) {
    std::vector<double> means;
    for (const auto& e : r.per_fold.at(m)) means.push_back(e.mean);
    print_report(out, summarize(means, m));
  }
  for (const auto& t : r.ttests) print_ttest(out, t);
  out << "tables written to " << config.output_dir.string() << "\n";
  return 0;
}

struct DataOptions {
  std::string format = "csv";
  bool header = false;
  std::string separator = ",";
  bool no_preprocess = false;

  void add_to(CLI::App* app) {
    app->add_option("--format", format, "csv or raw-f64");
    app->add_flag("--header", header, "CSV has a header row");
    app->add_option("--separator", separator, "CSV field separator");
    app->add_flag("--no-preprocess", no_preprocess, "data is already in model space");
  }

  Dataset load(const fs::path& path, const ModelFile& model) const {
    if (separator.size() != 1) throw ConfigError("--separator must be a single character");
    auto d = load_matrix(path, parse_matrix_format(format), {header, separator[0]});
    if (!no_preprocess && model.preprocessing) d = model.preprocessing->apply(d);
    return d;
  }
};

Ordering model_ordering(const ModelFile& m, std::size_t D) {
  return m.ordering.empty() ? Ordering::identity(D) : Ordering{m.ordering};
}

int cmd_eval(const fs::path& model_path, const fs::path& data_path, const DataOptions& data, const fs::path& out_csv,
             const fs::path& out_json, const fs::path& per_dim_csv, std::ostream& out) {
  const auto model = load_model(model_path);
  const auto test = data.load(data_path, model);
  const std::string id = to_string(model.kind());
  EvalReport r;
  if (const auto* p = std::get_if<RnadeParams>(&model.model)) {
    const auto ordering = model_ordering(model, p->D);
    r = evaluate(*p, test, ordering, id);
    if (!per_dim_csv.empty()) {
      const auto dims = per_dimension_mean(*p, test, ordering);
      std::string s = "column,name,mean_log_conditional\n";
      for (Eigen::Index j = 0; j < dims.size(); ++j) {
        const auto jj = static_cast<std::size_t>(j);
        s += std::to_string(j) + "," + (jj < test.columns.size() ? test.columns[jj] : "") + "," + num(dims[j]) + "\n";
      }
      write_file_atomic(per_dim_csv, s);
    }
  } else if (const auto* g = std::get_if<FullGaussian>(&model.model)) {
    r = evaluate(*g, test, id);
  } else {
    r = evaluate(std::get<MogModel>(model.model), test, id);
  }
  print_report(out, r);
  if (!out_csv.empty()) write_file_atomic(out_csv, report_csv({r}));
  if (!out_json.empty()) write_file_atomic(out_json, report_json(r).dump() + "\n");
  return 0;
}

Matrix sample_gaussian(const FullGaussian& g, std::size_t n, Rng& rng) {
  const Eigen::LLT<Eigen::MatrixXd> llt(g.covariance);
  const Eigen::MatrixXd L = llt.matrixL();
  std::normal_distribution<double> normal;
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g.dim()));
  Eigen::VectorXd z(static_cast<Eigen::Index>(g.dim()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = normal(rng);
    out.row(i) = (g.mean + L * z).transpose();
  }
  return out;
}

int cmd_sample(const fs::path& model_path, std::size_t n, std::uint64_t seed, const std::vector<double>& box,
               bool raw_space, std::size_t max_attempts, const fs::path& out_path, std::ostream& out) {
  const auto model = load_model(model_path);
  Rng rng(seed);
  Matrix values;
  if (const auto* p = std::get_if<RnadeParams>(&model.model)) {
    SampleOptions opt;
    if (!box.empty()) {
      if (box.size() != 2 || !(box[0] < box[1])) throw ConfigError("--box needs two values lo < hi");
      opt.box = std::make_pair(box[0], box[1]);
    }
    opt.max_attempts_per_row = max_attempts;
    values = sample(*p, n, model_ordering(model, p->D), rng, opt);
  } else {
    if (!box.empty()) throw ConfigError("--box is only supported for RNADE models");
    if (const auto* g = std::get_if<FullGaussian>(&model.model)) {
      values = sample_gaussian(*g, n, rng);
    } else {
      const auto& m = std::get<MogModel>(model.model);
      std::discrete_distribution<std::size_t> pick(m.weights.data(), m.weights.data() + m.weights.size());
      values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m.dim()));
      for (Eigen::Index i = 0; i < values.rows(); ++i) {
        values.row(i) = sample_gaussian(m.components[pick(rng)], 1, rng).row(0);
      }
    }
  }
  Dataset d = make_dataset(std::move(values), "samples");
  if (model.preprocessing) {
    d = raw_space ? model.preprocessing->invert(d) : d;
    if (model.preprocessing->names.size() == d.cols()) d.columns = model.preprocessing->names;
  }
  const auto text = to_csv(d, true);
  if (out_path.empty()) {
    out << text;
  } else {
    write_file_atomic(out_path, text);
    out << "wrote " << n << " samples to " << out_path.string() << "\n";
  }
  return 0;
}

int cmd_export_conditional(const fs::path& model_path, const fs::path& data_path, const DataOptions& data,
                           std::size_t row, std::size_t column, const ConditionalGrid& grid, const fs::path& out_path,
                           std::ostream& out) {
  const auto model = load_model(model_path);
  const auto* p = std::get_if<RnadeParams>(&model.model);
  if (p == nullptr) throw ConfigError("export-conditional needs an RNADE model");
  const auto d = data.load(data_path, model);
  if (row >= d.rows()) throw DataError("row " + std::to_string(row) + " out of range (" + std::to_string(d.rows()) + " rows)");
  if (column >= p->D) throw ConfigError("column " + std::to_string(column) + " out of range");
  const auto ordering = model_ordering(model, p->D);
  const auto pos = static_cast<std::size_t>(std::find(ordering.perm.begin(), ordering.perm.end(), column) - ordering.perm.begin());
  const auto rows = export_conditional(*p, d.row(row), pos, grid, ordering);
  const auto text = conditional_to_csv(rows);
  if (out_path.empty()) {
    out << text;
  } else {
    write_file_atomic(out_path, text);
    out << "wrote " << rows.size() << " grid points to " << out_path.string() << "\n";
  }
  return 0;
}

int cmd_compare(const std::vector<fs::path>& files, const fs::path& out_path, std::ostream& out) {
  // label -> fold -> mean
  std::map<std::string, std::map<std::size_t, double>> results;
  std::vector<std::string> labels;
  for (const auto& file : files) {
    const auto d_text = read_file(file);
    std::istringstream in(d_text);
    std::string line;
    std::getline(in, line);
    if (line.rfind("fold,model,mean_ll", 0) != 0) throw DataError(file.string() + ": not a fold_results.csv table");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
      if (cells.size() < 3) throw DataError(file.string() + ":" + std::to_string(line_no) + ": malformed row");
      std::string label = cells[1];
      if (files.size() > 1) label = file.parent_path().filename().string() + "/" + label;
      if (!results.contains(label)) labels.push_back(label);
      try {
        results[label][std::stoul(cells[0])] = std::stod(cells[2]);
      } catch (const std::exception&) {
        throw DataError(file.string() + ":" + std::to_string(line_no) + ": malformed number");
      }
    }
  }
  std::vector<TTestRow> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      std::vector<double> a, b;
      for (const auto& [fold, v] : results[labels[i]]) {
        const auto it = results[labels[j]].find(fold);
        if (it == results[labels[j]].end()) continue;
        a.push_back(v);
        b.push_back(it->second);
      }
      if (a.size() < 2) {
        out << labels[i] << " vs " << labels[j] << ": fewer than two shared folds, skipped\n";
        continue;
      }
      rows.push_back({labels[i], labels[j], paired_t_test(a, b)});
      print_ttest(out, rows.back());
    }
  }
  if (!out_path.empty()) write_file_atomic(out_path, ttest_csv(rows));
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"RNADE density estimation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::string config_path;
  std::vector<std::string> sets;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "configuration file")->required();
    sub->add_option("--set", sets, "override a key, e.g. --set train.lr=0.01")->take_all();
  };
  auto* train = app.add_subcommand("train", "train an RNADE model");
  add_config(train);
  auto* baseline = app.add_subcommand("baseline", "fit a Gaussian or MoG baseline");
  add_config(baseline);
  auto* folds = app.add_subcommand("folds", "cross-validated comparison against baselines");
  add_config(folds);

  std::string model_path, data_path, out_path, json_path, per_dim_path;
  DataOptions data_opts;
  auto* eval = app.add_subcommand("eval", "evaluate a model on a test set");
  eval->add_option("-m,--model", model_path, "model file")->required();
  eval->add_option("-d,--data", data_path, "test data")->required();
  eval->add_option("-o,--out", out_path, "CSV report");
  eval->add_option("--json", json_path, "JSON-lines report");
  eval->add_option("--per-dimension", per_dim_path, "CSV of mean log-conditionals per column (RNADE)");
  data_opts.add_to(eval);

  std::size_t n_samples = 0;
  std::uint64_t sample_seed = 1;
  std::vector<double> box;
  bool raw_space = false;
  std::size_t max_attempts = 10000;
  auto* samp = app.add_subcommand("sample", "draw samples from a model");
  samp->add_option("-m,--model", model_path, "model file")->required();
  samp->add_option("-n,--count", n_samples, "number of samples")->required();
  samp->add_option("--seed", sample_seed, "random seed");
  samp->add_option("--box", box, "reject rows outside [lo, hi] in model space")->expected(2);
  samp->add_flag("--raw", raw_space, "undo standardization in the output");
  samp->add_option("--max-attempts", max_attempts, "rejection attempts per row");
  samp->add_option("-o,--out", out_path, "output CSV (default stdout)");

  std::vector<std::string> compare_files;
  auto* compare = app.add_subcommand("compare", "paired t-tests between fold result tables");
  compare->add_option("files", compare_files, "fold_results.csv files")->required();
  compare->add_option("-o,--out", out_path, "CSV of test results");

  std::size_t row = 0, column = 0;
  ConditionalGrid grid;
  auto* exp = app.add_subcommand("export-conditional", "log-density of one conditional on a grid");
  exp->add_option("-m,--model", model_path, "model file")->required();
  exp->add_option("-d,--data", data_path, "data file holding the conditioning datapoint")->required();
  exp->add_option("--row", row, "0-based row of the datapoint")->required();
  exp->add_option("--column", column, "0-based model-space column whose conditional is exported")->required();
  exp->add_option("--lo", grid.lo, "grid start");
  exp->add_option("--hi", grid.hi, "grid end");
  exp->add_option("--steps", grid.steps, "grid points");
  exp->add_option("-o,--out", out_path, "output CSV (default stdout)");
  data_opts.add_to(exp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (train->parsed()) return cmd_train(load_run_config(config_path, sets), out, err);
    if (baseline->parsed()) return cmd_baseline(load_run_config(config_path, sets), out, err);
    if (folds->parsed()) return cmd_folds(load_run_config(config_path, sets), out, err);
    if (eval->parsed()) return cmd_eval(model_path, data_path, data_opts, out_path, json_path, per_dim_path, out);
    if (samp->parsed()) return cmd_sample(model_path, n_samples, sample_seed, box, raw_space, max_attempts, out_path, out);
    if (compare->parsed()) {
      std::vector<fs::path> files(compare_files.begin(), compare_files.end());
      return cmd_compare(files, out_path, out);
    }
    if (exp->parsed()) return cmd_export_conditional(model_path, data_path, data_opts, row, column, grid, out_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rnade
