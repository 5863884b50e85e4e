#include "rnade/evaluation.hpp"

#include <charconv>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/beta.hpp>

#include "rnade/errors.hpp"
#include "rnade/mixture.hpp"

namespace rnade {

namespace {

void check_test_set(const Dataset& test, std::size_t dim) {
  if (test.rows() == 0) throw DataError("test set is empty");
  if (test.cols() != dim) {
    throw ValidationError("test set has " + std::to_string(test.cols()) + " columns but the model expects " +
                          std::to_string(dim));
  }
}

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

EvalReport summarize(std::span<const double> log_likelihoods, std::string model_id) {
  if (log_likelihoods.empty()) throw DataError("cannot summarize an empty test set");
  const auto n = static_cast<double>(log_likelihoods.size());
  double sum = 0.0;
  for (double v : log_likelihoods) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : log_likelihoods) ss += (v - mean) * (v - mean);
  EvalReport r;
  r.model_id = std::move(model_id);
  r.mean = mean;
  r.n = log_likelihoods.size();
  r.standard_error = r.n > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  return r;
}

std::vector<double> per_point_log_likelihood(const RnadeParams& model, const Dataset& test,
                                             const Ordering& ordering) {
  check_test_set(test, model.D);
  std::vector<double> out(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) out[i] = log_density(model, test.row(i), ordering);
  return out;
}

std::vector<double> per_point_log_likelihood(const FullGaussian& model, const Dataset& test) {
  check_test_set(test, model.dim());
  const GaussianScorer scorer(model);
  std::vector<double> out(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) out[i] = scorer.log_pdf(test.row(i));
  return out;
}

std::vector<double> per_point_log_likelihood(const MogModel& model, const Dataset& test) {
  check_test_set(test, model.dim());
  const MogScorer scorer(model);
  std::vector<double> out(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) out[i] = scorer.log_pdf(test.row(i));
  return out;
}

EvalReport evaluate(const RnadeParams& model, const Dataset& test, const Ordering& ordering,
                    std::string model_id) {
  return summarize(per_point_log_likelihood(model, test, ordering), std::move(model_id));
}

EvalReport evaluate(const FullGaussian& model, const Dataset& test, std::string model_id) {
  return summarize(per_point_log_likelihood(model, test), std::move(model_id));
}

EvalReport evaluate(const MogModel& model, const Dataset& test, std::string model_id) {
  return summarize(per_point_log_likelihood(model, test), std::move(model_id));
}

Eigen::VectorXd per_dimension_mean(const RnadeParams& model, const Dataset& test,
                                   const Ordering& ordering) {
  check_test_set(test, model.D);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.D));
  for (std::size_t i = 0; i < test.rows(); ++i) {
    const Eigen::VectorXd lc = log_conditionals(model, test.row(i), ordering);
    for (std::size_t d = 0; d < model.D; ++d) {
      sum[static_cast<Eigen::Index>(ordering.perm[d])] += lc[static_cast<Eigen::Index>(d)];
    }
  }
  return sum / static_cast<double>(test.rows());
}

double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw ValidationError("degrees of freedom must be positive");
  if (std::isnan(t)) throw ValidationError("t statistic is NaN");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  // P(|T| > |t|) = I_{dof / (dof + t^2)}(dof / 2, 1 / 2)
  const double tail = boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + t * t));
  return t >= 0.0 ? 1.0 - 0.5 * tail : 0.5 * tail;
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("paired t-test needs equal-length samples");
  if (a.size() < 2) throw ValidationError("paired t-test needs at least two pairs");
  TTestResult r;
  const auto n = static_cast<double>(a.size());
  r.dof = a.size() - 1;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw ValidationError("paired t-test input is not finite");
    r.diffs.push_back(a[i] - b[i]);
    sum += r.diffs.back();
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (double d : r.diffs) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / (n - 1.0));

  if (sd == 0.0) {
    r.degenerate = true;
    if (mean == 0.0) {
      r.t = 0.0;
      r.p_two_sided = 1.0;
      r.p_one_sided = 0.5;
    } else {
      r.t = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p_two_sided = 0.0;
      r.p_one_sided = mean > 0 ? 0.0 : 1.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  const auto dof = static_cast<double>(r.dof);
  r.p_two_sided = boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + r.t * r.t));
  r.p_one_sided = 1.0 - student_t_cdf(r.t, dof);
  return r;
}

std::vector<std::pair<double, double>> export_conditional(const RnadeParams& model,
                                                          std::span<const double> x, std::size_t d,
                                                          const ConditionalGrid& grid,
                                                          const Ordering& ordering) {
  if (!std::isfinite(grid.lo) || !std::isfinite(grid.hi)) throw ValidationError("grid bounds must be finite");
  if (!(grid.lo < grid.hi)) throw ValidationError("grid needs lo < hi");
  if (grid.steps < 2) throw ValidationError("grid needs at least two points");
  if (d >= model.D) throw ValidationError("conditional index " + std::to_string(d) + " out of range");
  ordering.validate(model.D);
  if (x.size() != model.D) throw ValidationError("datapoint dimensionality does not match the model");

  std::vector<double> prefix(d);
  for (std::size_t k = 0; k < d; ++k) {
    prefix[k] = x[ordering.perm[k]];
    if (!std::isfinite(prefix[k])) throw ValidationError("datapoint has non-finite values");
  }
  const auto cond = conditional_params(model, prefix, d);
  std::vector<std::pair<double, double>> rows;
  rows.reserve(grid.steps);
  const double step = (grid.hi - grid.lo) / static_cast<double>(grid.steps - 1);
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double v = i + 1 == grid.steps ? grid.hi : grid.lo + static_cast<double>(i) * step;
    rows.emplace_back(v, log_pdf(cond, v));
  }
  return rows;
}

std::string conditional_to_csv(const std::vector<std::pair<double, double>>& rows) {
  std::string out = "value,log_density\n";
  for (const auto& [v, lp] : rows) out += shortest(v) + "," + shortest(lp) + "\n";
  return out;
}

}  // namespace rnade
