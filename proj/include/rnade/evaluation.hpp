#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rnade/baselines.hpp"
#include "rnade/data.hpp"
#include "rnade/model.hpp"

namespace rnade {

struct EvalReport {
  std::string model_id;
  double mean = 0.0;            // nats per datapoint
  double standard_error = 0.0;  // sample std / sqrt(N); 0 when N == 1
  std::size_t n = 0;
};

// Summary of per-datapoint log-likelihoods. Throws DataError when empty.
EvalReport summarize(std::span<const double> log_likelihoods, std::string model_id);

std::vector<double> per_point_log_likelihood(const RnadeParams& model, const Dataset& test,
                                             const Ordering& ordering);
std::vector<double> per_point_log_likelihood(const FullGaussian& model, const Dataset& test);
std::vector<double> per_point_log_likelihood(const MogModel& model, const Dataset& test);

EvalReport evaluate(const RnadeParams& model, const Dataset& test, const Ordering& ordering,
                    std::string model_id = "rnade");
EvalReport evaluate(const FullGaussian& model, const Dataset& test, std::string model_id = "gaussian");
EvalReport evaluate(const MogModel& model, const Dataset& test, std::string model_id = "mog");

// Mean log-conditional of each dataset column over the test set. Sums to the
// mean log-likelihood.
Eigen::VectorXd per_dimension_mean(const RnadeParams& model, const Dataset& test,
                                   const Ordering& ordering);

struct TTestResult {
  double t = 0.0;
  std::size_t dof = 0;
  double p_two_sided = 1.0;
  // P(T >= t): small when the first argument is significantly larger.
  double p_one_sided = 0.5;
  std::vector<double> diffs;  // a - b
  bool degenerate = false;    // zero variance of the differences
};

// Student-t cumulative distribution via the regularized incomplete beta function.
double student_t_cdf(double t, double dof);

// Paired t-test on per-fold mean log-likelihoods, differences a - b.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

struct ConditionalGrid {
  double lo = -3.0;
  double hi = 3.0;
  std::size_t steps = 201;  // number of grid points including both ends
};

// Log-density of the conditional at model position d (0-based), given the
// datapoint's true values at earlier positions, evaluated on the grid. x is in
// dataset column order. Returns (value, log-density) pairs.
std::vector<std::pair<double, double>> export_conditional(const RnadeParams& model,
                                                          std::span<const double> x, std::size_t d,
                                                          const ConditionalGrid& grid,
                                                          const Ordering& ordering);

std::string conditional_to_csv(const std::vector<std::pair<double, double>>& rows);

}  // namespace rnade
