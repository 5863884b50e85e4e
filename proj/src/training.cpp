#include "rnade/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "rnade/errors.hpp"

namespace rnade {

namespace {

using StopRule = std::function<bool(std::size_t epoch, double train_ll)>;

struct RunOutput {
  TrainResult result;
  std::size_t stopped_epoch = 0;
};

RunOutput run_sgd(const Dataset& train, const Dataset* valid, const TrainConfig& config,
                  RnadeParams params, const StopRule& stop) {
  config.validate();
  if (train.rows() == 0) throw DataError("training set is empty");
  if (train.cols() != params.D) {
    throw ValidationError("training data has " + std::to_string(train.cols()) +
                          " columns but the model expects " + std::to_string(params.D));
  }
  if (valid != nullptr && valid->cols() != params.D) {
    throw ValidationError("validation data dimensionality does not match the model");
  }
  if (valid != nullptr && valid->rows() == 0) throw DataError("validation set is empty");
  if (config.minibatch_size > train.rows()) {
    throw ConfigError("minibatch size " + std::to_string(config.minibatch_size) +
                      " exceeds the number of training rows " + std::to_string(train.rows()));
  }
  params.validate();

  const Ordering ordering = config.resolved_ordering(params.D);
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto grad = ParamGradients::zeros_like(params);
  auto velocity = ParamGradients::zeros_like(params);
  const std::size_t total_updates = config.epochs * config.minibatches_per_epoch;
  const double inv_batch = 1.0 / static_cast<double>(config.minibatch_size);

  RunOutput out;
  auto& trace = out.result.trace;
  auto& es = out.result.early_stop;
  out.result.params = params;
  if (valid != nullptr) {
    es.best_validation_ll = mean_log_likelihood(params, *valid, ordering);
    es.train_ll_at_best_validation = mean_log_likelihood(params, train, ordering);
  }

  std::size_t update = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    const double momentum = epoch >= config.momentum_start_epoch ? config.momentum : 0.0;
    std::size_t floor_hits = 0;
    GradientOptions options;
    options.scale_mean_gradients = config.mean_grad_scaling;
    options.floor_hits = &floor_hits;
    trace.lr.push_back(lr_schedule(config.lr0, total_updates, update));

    std::size_t cursor = 0;
    for (std::size_t b = 0; b < config.minibatches_per_epoch; ++b, ++update) {
      grad.set_zero();
      double batch_ll = 0.0;
      for (std::size_t i = 0; i < config.minibatch_size; ++i) {
        if (cursor == order.size()) cursor = 0;
        const std::size_t row = order[cursor++];
        try {
          batch_ll += accumulate_gradients(params, train.row(row), ordering, grad, inv_batch, options);
        } catch (const NumericError& e) {
          throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", minibatch " +
                             std::to_string(b + 1) + ", row " + std::to_string(row + 1) + ")");
        }
      }
      if (!std::isfinite(batch_ll)) {
        throw NumericError("non-finite minibatch log-likelihood at epoch " + std::to_string(epoch) +
                           ", minibatch " + std::to_string(b + 1));
      }
      sgd_update(params, grad, velocity, lr_schedule(config.lr0, total_updates, update), momentum,
                 config.weight_decay);
    }

    const double train_ll = mean_log_likelihood(params, train, ordering);
    if (!std::isfinite(train_ll)) {
      throw NumericError("training log-likelihood became non-finite after epoch " + std::to_string(epoch));
    }
    trace.train_ll.push_back(train_ll);
    trace.scale_floor_hits.push_back(floor_hits);
    if (valid != nullptr) {
      const double v = mean_log_likelihood(params, *valid, ordering);
      trace.valid_ll.push_back(v);
      if (v > es.best_validation_ll) {
        es.best_validation_ll = v;
        es.train_ll_at_best_validation = train_ll;
        es.best_epoch = epoch;
        out.result.params = params;
      }
    }
    trace.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    out.stopped_epoch = epoch;

    if (stop && stop(epoch, train_ll)) break;
    if (valid != nullptr && config.patience > 0 && epoch - es.best_epoch >= config.patience) break;
  }

  if (valid == nullptr) {
    out.result.params = params;
    es.best_epoch = out.stopped_epoch;
    es.train_ll_at_best_validation = trace.train_ll.back();
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (H < 1) throw ConfigError("model.hidden must be at least 1");
  if (K < 1) throw ConfigError("model.components must be at least 1");
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("train.lr must be a finite non-negative number");
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (minibatch_size < 1) throw ConfigError("train.minibatch_size must be at least 1");
  if (minibatches_per_epoch < 1) throw ConfigError("train.minibatches_per_epoch must be at least 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (momentum_start_epoch < 1) throw ConfigError("train.momentum_start_epoch is 1-based");
}

Ordering TrainConfig::resolved_ordering(std::size_t D) const {
  if (ordering.empty()) return Ordering::identity(D);
  Ordering o{ordering};
  try {
    o.validate(D);
  } catch (const ValidationError& e) {
    throw ConfigError(std::string("model.ordering: ") + e.what());
  }
  return o;
}

double lr_schedule(double lr0, std::size_t total_updates, std::size_t t) {
  if (total_updates == 0 || t > total_updates) throw ValidationError("update index outside the schedule");
  return lr0 * (1.0 - static_cast<double>(t) / static_cast<double>(total_updates));
}

void sgd_update(RnadeParams& params, ParamGradients& grad, ParamGradients& velocity, double lr,
                double momentum, double weight_decay) {
  if (weight_decay != 0.0) grad.W -= weight_decay * params.W;
  TensorSet& p = params;
  velocity.visit([&](std::string_view, auto& v) { v *= momentum; });
  zip_tensors(velocity, grad, [&](std::string_view, auto& v, const auto& g) { v += lr * g; });
  zip_tensors(p, velocity, [&](std::string_view, auto& param, const auto& v) { param += v; });
}

double mean_log_likelihood(const RnadeParams& params, const Dataset& data, const Ordering& ordering) {
  if (data.rows() == 0) throw DataError("empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) total += log_density(params, data.row(i), ordering);
  return total / static_cast<double>(data.rows());
}

TrainResult sgd_train(const Dataset& train, const Dataset* valid, const TrainConfig& config) {
  config.validate();
  return sgd_train(train, valid, config,
                   init_params(train.cols(), config.H, config.K, config.family, config.activation, config.seed));
}

TrainResult sgd_train(const Dataset& train, const Dataset* valid, const TrainConfig& config,
                      const RnadeParams& initial) {
  return run_sgd(train, valid, config, initial, {}).result;
}

FinalTrainResult early_stopped_final_train(const Dataset& train_all, const EarlyStopState& validation_run,
                                           const TrainConfig& config) {
  config.validate();
  const double threshold = validation_run.train_ll_at_best_validation;
  bool reached = false;
  auto stop = [&](std::size_t, double train_ll) {
    reached = train_ll > threshold;
    return reached;
  };
  auto run = run_sgd(train_all, nullptr, config,
                     init_params(train_all.cols(), config.H, config.K, config.family, config.activation,
                                 config.seed),
                     stop);
  FinalTrainResult out;
  out.params = std::move(run.result.params);
  out.trace = std::move(run.result.trace);
  out.stopped_epoch = run.stopped_epoch;
  out.threshold_reached = reached;
  return out;
}

}  // namespace rnade
