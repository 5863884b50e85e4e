#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "rnade/data.hpp"
#include "rnade/mixture.hpp"
#include "rnade/model.hpp"

namespace rnade {

struct TrainConfig {
  std::size_t H = 50;
  std::size_t K = 5;
  Family family = Family::MoG;
  Activation activation = Activation::RescaledReLU;
  double lr0 = 0.01;
  std::size_t epochs = 100;
  std::size_t minibatch_size = 25;
  std::size_t minibatches_per_epoch = 10;
  double weight_decay = 0.0;  // applied to W only
  double momentum = 0.9;
  std::size_t momentum_start_epoch = 2;  // 1-based
  bool mean_grad_scaling = true;
  std::uint64_t seed = 1;
  // Stop after this many epochs without a validation improvement; 0 disables.
  std::size_t patience = 0;
  // Autoregressive ordering over dataset columns; empty means identity.
  std::vector<std::size_t> ordering;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  Ordering resolved_ordering(std::size_t D) const;
};

struct TrainTrace {
  std::vector<double> train_ll;
  std::vector<double> valid_ll;  // empty without a validation set
  std::vector<double> lr;        // learning rate at the first update of each epoch
  std::vector<double> seconds;
  std::vector<std::size_t> scale_floor_hits;

  std::size_t epochs() const { return train_ll.size(); }
};

struct EarlyStopState {
  double best_validation_ll = -std::numeric_limits<double>::infinity();
  double train_ll_at_best_validation = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;  // 1-based; 0 = initial parameters
};

struct TrainResult {
  RnadeParams params;  // best-validation parameters, or final ones without validation
  TrainTrace trace;
  EarlyStopState early_stop;
};

// lr0 * (1 - t / total_updates).
double lr_schedule(double lr0, std::size_t total_updates, std::size_t t);

// One ascent step on a mean minibatch gradient. Applies weight decay to the W
// gradient, then v <- momentum * v + lr * g and params += v.
void sgd_update(RnadeParams& params, ParamGradients& grad, ParamGradients& velocity, double lr,
                double momentum, double weight_decay);

// Mean log-likelihood of every row of `data`.
double mean_log_likelihood(const RnadeParams& params, const Dataset& data, const Ordering& ordering);

TrainResult sgd_train(const Dataset& train, const Dataset* valid, const TrainConfig& config);
// Starts from the given parameters instead of a fresh initialization.
TrainResult sgd_train(const Dataset& train, const Dataset* valid, const TrainConfig& config,
                      const RnadeParams& initial);

struct FinalTrainResult {
  RnadeParams params;
  TrainTrace trace;
  std::size_t stopped_epoch = 0;
  bool threshold_reached = false;
};

// Retrains on all training data with the same learning-rate schedule and stops
// at the end of the first epoch whose training log-likelihood exceeds
// `validation_run.train_ll_at_best_validation`, or after config.epochs.
FinalTrainResult early_stopped_final_train(const Dataset& train_all,
                                           const EarlyStopState& validation_run,
                                           const TrainConfig& config);

}  // namespace rnade
