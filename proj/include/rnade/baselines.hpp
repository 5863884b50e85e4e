#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rnade/data.hpp"
#include "rnade/mixture.hpp"

namespace rnade {

struct FullGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
  // Throws ValidationError unless the covariance is symmetric and positive definite.
  void validate() const;
};

struct MogModel {
  Eigen::VectorXd weights;
  std::vector<FullGaussian> components;

  std::size_t dim() const { return components.empty() ? 0 : components.front().dim(); }
  void validate() const;
};

// Cached Cholesky factor for repeated evaluation.
class GaussianScorer {
 public:
  explicit GaussianScorer(const FullGaussian& g);
  double log_pdf(std::span<const double> x) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd lower_;
  double log_norm_ = 0.0;
};

class MogScorer {
 public:
  explicit MogScorer(const MogModel& m);
  double log_pdf(std::span<const double> x) const;
  // log p(x) and posterior component probabilities.
  double log_pdf_and_responsibilities(std::span<const double> x, Eigen::VectorXd& resp) const;

 private:
  Eigen::VectorXd log_weights_;
  std::vector<GaussianScorer> scorers_;
};

// Adds 1e-6 * trace / D to the diagonal.
void add_covariance_ridge(Eigen::MatrixXd& cov, double ridge_factor = 1e-6);

double gaussian_log_pdf(const FullGaussian& g, std::span<const double> x);

// Sample mean and 1/N covariance plus the ridge. Needs N > D.
FullGaussian fit_gaussian_mle(const Dataset& data, double ridge_factor = 1e-6);

double mog_log_pdf(const MogModel& model, std::span<const double> x);

struct EmConfig {
  std::size_t n_components = 5;
  std::size_t iterations = 100;
  std::size_t batch_size = 20000;
  double eta0 = 0.1;
  double covariance_floor = 1e-6;  // ridge factor relative to trace / D
  double weight_floor = 1e-8;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EmDiagnostics {
  // Components left unchanged because no batch point was assigned to them.
  std::vector<std::size_t> empty_components;
};

// One stepped EM update: theta <- (1 - eta) theta + eta theta_EM.
MogModel em_step(const MogModel& model, const Dataset& batch, double eta,
                 const EmConfig& config = {}, EmDiagnostics* diagnostics = nullptr);

// Means at random training points, global covariance, uniform weights.
MogModel init_mog(const Dataset& data, std::size_t n_components, double ridge_factor, Rng& rng);

struct EmTrace {
  std::vector<double> train_ll;  // mean log-likelihood of each iteration's batch before the step
  std::vector<double> valid_ll;
  std::vector<double> eta;
  std::size_t best_iteration = 0;  // 0 = initial model
  double best_valid_ll = 0.0;
  std::vector<std::size_t> empty_component_events;
};

struct MogFit {
  MogModel model;
  EmTrace trace;
};

MogFit train_mog(const Dataset& data, const Dataset* validation, const EmConfig& config);

double mean_log_likelihood(const MogModel& model, const Dataset& data);
double mean_log_likelihood(const FullGaussian& model, const Dataset& data);

}  // namespace rnade
