#include "rnade/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rnade/errors.hpp"

namespace rnade {

namespace {

constexpr double kLogTwoPi = 1.83787706640934548356;

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> x) {
  return {x.data(), idx(x.size())};
}

// Column-major copy for GEMM-friendly reductions.
Eigen::MatrixXd to_col_major(const Dataset& data) { return data.values; }

}  // namespace

void FullGaussian::validate() const {
  const auto d = mean.size();
  if (d < 1) throw ValidationError("Gaussian needs at least one dimension");
  if (covariance.rows() != d || covariance.cols() != d) {
    throw ValidationError("covariance shape does not match mean");
  }
  if (!mean.allFinite() || !covariance.allFinite()) throw ValidationError("Gaussian has non-finite entries");
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ValidationError("covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) throw ValidationError("covariance is not positive definite");
}

void MogModel::validate() const {
  if (components.empty()) throw ValidationError("mixture has no components");
  if (weights.size() != idx(components.size())) {
    throw ValidationError("mixture weight count does not match component count");
  }
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-12) {
    throw ValidationError("mixture weights are not on the simplex");
  }
  for (const auto& c : components) {
    c.validate();
    if (c.dim() != dim()) throw ValidationError("mixture components differ in dimensionality");
  }
}

GaussianScorer::GaussianScorer(const FullGaussian& g) : mean_(g.mean) {
  Eigen::LLT<Eigen::MatrixXd> llt(g.covariance);
  if (llt.info() != Eigen::Success) throw ValidationError("covariance is not positive definite");
  lower_ = llt.matrixL();
  const double log_det = 2.0 * lower_.diagonal().array().log().sum();
  log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * kLogTwoPi + log_det);
}

double GaussianScorer::log_pdf(std::span<const double> x) const {
  if (x.size() != static_cast<std::size_t>(mean_.size())) {
    throw ValidationError("datapoint dimensionality does not match Gaussian");
  }
  Eigen::VectorXd r = as_vector(x) - mean_;
  lower_.triangularView<Eigen::Lower>().solveInPlace(r);
  return log_norm_ - 0.5 * r.squaredNorm();
}

MogScorer::MogScorer(const MogModel& m) : log_weights_(m.weights.array().log()) {
  scorers_.reserve(m.components.size());
  for (const auto& c : m.components) scorers_.emplace_back(c);
}

double MogScorer::log_pdf_and_responsibilities(std::span<const double> x, Eigen::VectorXd& resp) const {
  resp.resize(log_weights_.size());
  for (Eigen::Index k = 0; k < resp.size(); ++k) {
    resp[k] = log_weights_[k] + scorers_[static_cast<std::size_t>(k)].log_pdf(x);
  }
  const double top = resp.maxCoeff();
  resp = (resp.array() - top).exp();
  const double total = resp.sum();
  resp /= total;
  return top + std::log(total);
}

double MogScorer::log_pdf(std::span<const double> x) const {
  Eigen::VectorXd resp;
  return log_pdf_and_responsibilities(x, resp);
}

void add_covariance_ridge(Eigen::MatrixXd& cov, double ridge_factor) {
  const double ridge = ridge_factor * cov.trace() / static_cast<double>(cov.rows());
  cov.diagonal().array() += ridge;
}

double gaussian_log_pdf(const FullGaussian& g, std::span<const double> x) {
  return GaussianScorer(g).log_pdf(x);
}

FullGaussian fit_gaussian_mle(const Dataset& data, double ridge_factor) {
  const auto n = data.rows();
  const auto d = data.cols();
  if (d < 1) throw DataError("cannot fit a Gaussian to zero-dimensional data");
  if (n <= d) {
    throw DataError("Gaussian fit needs more datapoints (" + std::to_string(n) + ") than dimensions (" +
                    std::to_string(d) + ")");
  }
  const Eigen::MatrixXd x = to_col_major(data);
  FullGaussian g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(n);
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose()).eval();
  add_covariance_ridge(g.covariance, ridge_factor);
  Eigen::LLT<Eigen::MatrixXd> llt(g.covariance);
  if (llt.info() != Eigen::Success) throw NumericError("Gaussian covariance is singular after flooring");
  return g;
}

double mog_log_pdf(const MogModel& model, std::span<const double> x) {
  model.validate();
  return MogScorer(model).log_pdf(x);
}

void EmConfig::validate() const {
  if (n_components < 1) throw ValidationError("EM needs at least one component");
  if (!(eta0 > 0.0 && eta0 <= 1.0)) throw ValidationError("EM step size eta0 must lie in (0, 1]");
  if (!(covariance_floor > 0.0)) throw ValidationError("covariance floor must be positive");
  if (batch_size < 1) throw ValidationError("EM batch size must be positive");
}

MogModel em_step(const MogModel& model, const Dataset& batch, double eta, const EmConfig& config,
                 EmDiagnostics* diagnostics) {
  if (batch.rows() == 0) throw ValidationError("EM step needs a nonempty batch");
  if (!(eta >= 0.0 && eta <= 1.0)) throw ValidationError("EM step size must lie in [0, 1]");
  if (batch.cols() != model.dim()) throw ValidationError("batch dimensionality does not match model");
  if (eta == 0.0) return model;

  const auto n = batch.rows();
  const auto k_count = model.components.size();
  const MogScorer scorer(model);
  Eigen::MatrixXd resp(idx(n), idx(k_count));
  Eigen::VectorXd r;
  for (std::size_t i = 0; i < n; ++i) {
    scorer.log_pdf_and_responsibilities(batch.row(i), r);
    resp.row(idx(i)) = r.transpose();
  }

  const Eigen::MatrixXd x = to_col_major(batch);
  const Eigen::VectorXd mass = resp.colwise().sum().transpose();
  MogModel next = model;
  for (std::size_t k = 0; k < k_count; ++k) {
    const double nk = mass[idx(k)];
    if (!(nk > 0.0)) {
      if (diagnostics != nullptr) diagnostics->empty_components.push_back(k);
      continue;
    }
    const Eigen::VectorXd rk = resp.col(idx(k));
    const Eigen::VectorXd mean_em = (x.transpose() * rk) / nk;
    const Eigen::MatrixXd centered = x.rowwise() - mean_em.transpose();
    Eigen::MatrixXd cov_em = (centered.transpose() * rk.asDiagonal() * centered) / nk;
    cov_em = 0.5 * (cov_em + cov_em.transpose()).eval();
    add_covariance_ridge(cov_em, config.covariance_floor);

    auto& comp = next.components[k];
    next.weights[idx(k)] = (1.0 - eta) * model.weights[idx(k)] + eta * nk / static_cast<double>(n);
    comp.mean = (1.0 - eta) * comp.mean + eta * mean_em;
    comp.covariance = (1.0 - eta) * comp.covariance + eta * cov_em;
    comp.covariance = 0.5 * (comp.covariance + comp.covariance.transpose()).eval();
    Eigen::LLT<Eigen::MatrixXd> llt(comp.covariance);
    if (llt.info() != Eigen::Success) add_covariance_ridge(comp.covariance, 1e-3);
  }
  next.weights = next.weights.cwiseMax(config.weight_floor);
  next.weights /= next.weights.sum();
  return next;
}

MogModel init_mog(const Dataset& data, std::size_t n_components, double ridge_factor, Rng& rng) {
  if (data.rows() < n_components) throw DataError("fewer datapoints than mixture components");
  const auto global = fit_gaussian_mle(data, ridge_factor);
  MogModel m;
  m.weights = Eigen::VectorXd::Constant(idx(n_components), 1.0 / static_cast<double>(n_components));
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n_components entries are distinct picks.
  for (std::size_t i = 0; i < n_components; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  for (std::size_t k = 0; k < n_components; ++k) {
    FullGaussian g;
    g.mean = as_vector(data.row(order[k]));
    g.covariance = global.covariance;
    m.components.push_back(std::move(g));
  }
  return m;
}

double mean_log_likelihood(const MogModel& model, const Dataset& data) {
  if (data.rows() == 0) throw DataError("empty dataset");
  const MogScorer scorer(model);
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) total += scorer.log_pdf(data.row(i));
  return total / static_cast<double>(data.rows());
}

double mean_log_likelihood(const FullGaussian& model, const Dataset& data) {
  if (data.rows() == 0) throw DataError("empty dataset");
  const GaussianScorer scorer(model);
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) total += scorer.log_pdf(data.row(i));
  return total / static_cast<double>(data.rows());
}

MogFit train_mog(const Dataset& data, const Dataset* validation, const EmConfig& config) {
  config.validate();
  Rng rng(config.seed);
  MogFit fit;
  fit.model = init_mog(data, config.n_components, config.covariance_floor, rng);
  MogModel best = fit.model;
  double best_valid = -std::numeric_limits<double>::infinity();
  if (validation != nullptr) {
    best_valid = mean_log_likelihood(fit.model, *validation);
    fit.trace.valid_ll.push_back(best_valid);
  }

  const auto n = data.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const bool full_batch = config.batch_size >= n;
  const auto total = static_cast<double>(config.iterations);

  for (std::size_t t = 0; t < config.iterations; ++t) {
    const double eta = config.eta0 * (1.0 - static_cast<double>(t) / total);
    Dataset batch;
    if (full_batch) {
      batch = data;
    } else {
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(order[i], order[pick(rng)]);
      }
      batch = data.select_rows(std::span(order).first(config.batch_size));
    }
    fit.trace.train_ll.push_back(mean_log_likelihood(fit.model, batch));
    fit.trace.eta.push_back(eta);
    EmDiagnostics diag;
    fit.model = em_step(fit.model, batch, eta, config, &diag);
    for (auto k : diag.empty_components) fit.trace.empty_component_events.push_back(k);

    if (validation != nullptr) {
      const double v = mean_log_likelihood(fit.model, *validation);
      if (!std::isfinite(v)) throw NumericError("validation log-likelihood became non-finite at EM iteration " +
                                               std::to_string(t + 1));
      fit.trace.valid_ll.push_back(v);
      if (v > best_valid) {
        best_valid = v;
        best = fit.model;
        fit.trace.best_iteration = t + 1;
      }
    }
  }
  fit.trace.best_valid_ll = best_valid;
  if (validation != nullptr) fit.model = std::move(best);
  return fit;
}

}  // namespace rnade
