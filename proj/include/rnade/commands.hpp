#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rnade/config.hpp"
#include "rnade/data.hpp"
#include "rnade/evaluation.hpp"
#include "rnade/model_file.hpp"
#include "rnade/training.hpp"

namespace rnade {

// Raw dataset named by the config: the training table, or freshly extracted
// (and optionally dequantized) image patches.
Dataset load_raw_dataset(const RunConfig& config, std::ostream& log);

// Columns that survive discrete removal and correlation filtering.
struct ColumnSelection {
  std::vector<std::size_t> kept;
  FilterReport report;
};
ColumnSelection select_columns(const RunConfig& config, const Dataset& raw);

// Preprocessing fitted on `train_rows` of `raw`.
Preprocessing fit_preprocessing(const RunConfig& config, const Dataset& raw, const ColumnSelection& columns,
                                std::span<const std::size_t> train_rows);

struct GridOutcome {
  TrainConfig config;
  TrainResult result;
};

// Trains every grid combination and returns them in grid order; `best` is the
// index with the highest validation log-likelihood (first on ties).
struct GridSearch {
  std::vector<GridOutcome> runs;
  std::size_t best = 0;
};
GridSearch grid_search(const RunConfig& config, const Dataset& train, const Dataset* valid, std::ostream& log);

struct MogSearch {
  std::vector<MogFit> runs;
  std::vector<EmConfig> configs;
  std::size_t best = 0;
};
MogSearch mog_search(const RunConfig& config, const Dataset& train, const Dataset* valid);

struct FoldSelection {
  std::size_t fold = 0;
  TrainConfig chosen;
  double best_valid_ll = 0.0;
  std::size_t best_epoch = 0;
  std::size_t final_epochs = 0;
  bool threshold_reached = false;
};

struct TTestRow {
  std::string a;
  std::string b;
  TTestResult result;
};

struct FoldsResult {
  std::vector<std::string> models;                    // "rnade" first, then baselines
  std::map<std::string, std::vector<EvalReport>> per_fold;
  std::map<std::string, double> aggregate;            // mean of fold means
  std::vector<FoldSelection> selection;
  std::vector<TTestRow> ttests;                       // rnade against each baseline
  FoldSpec folds;
  ColumnSelection columns;
};

// Full cross-validation protocol. Writes per-fold models and tables under
// config.output_dir when write_outputs is set.
FoldsResult run_folds(const RunConfig& config, const Dataset& raw, std::ostream& log, bool write_outputs);

// Command-line entry point. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rnade
