#include "rnade/mixture.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rnade/errors.hpp"

namespace rnade {

namespace {

constexpr double kHalfLogTwoPi = 0.91893853320467274178;  // 0.5 * log(2 pi)

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::string_view to_string(Family family) {
  return family == Family::MoG ? "mog" : "mol";
}

Family parse_family(std::string_view text) {
  if (text == "mog" || text == "MoG") return Family::MoG;
  if (text == "mol" || text == "MoL") return Family::MoL;
  throw ValidationError("unknown mixture family '" + std::string(text) + "' (expected mog or mol)");
}

void MixtureParams1D::validate() const {
  const auto k = weights.size();
  if (k < 1) throw ValidationError("mixture needs at least one component");
  if (means.size() != k || scales.size() != k) {
    throw ValidationError("mixture weights, means and scales differ in length");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw ValidationError("mixture weight " + std::to_string(i) + " is negative or not finite");
    }
    if (!std::isfinite(means[i])) throw ValidationError("mixture mean is not finite");
    if (!(scales[i] > 0.0) || !std::isfinite(scales[i])) {
      throw ValidationError("mixture scale " + std::to_string(i) + " must be positive and finite");
    }
    total += weights[i];
  }
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("mixture weights do not sum to 1");
}

MixtureParams1D mixture_from_outputs(Family family, const Eigen::VectorXd& z_alpha,
                                     const Eigen::VectorXd& z_mu,
                                     const Eigen::VectorXd& z_sigma,
                                     std::size_t* floor_hits) {
  MixtureParams1D m;
  m.family = family;
  const double top = z_alpha.maxCoeff();
  m.weights = (z_alpha.array() - top).exp();
  m.weights /= m.weights.sum();
  m.means = z_mu;
  m.scales.resize(z_sigma.size());
  for (Eigen::Index i = 0; i < z_sigma.size(); ++i) {
    const double s = std::exp(z_sigma[i]);
    if (s < kScaleFloor) {
      m.scales[i] = kScaleFloor;
      if (floor_hits != nullptr) ++*floor_hits;
    } else {
      m.scales[i] = s;
    }
  }
  return m;
}

double component_log_pdf(Family family, double mean, double scale, double x) {
  const double r = x - mean;
  if (family == Family::MoG) {
    const double u = r / scale;
    return -0.5 * u * u - std::log(scale) - kHalfLogTwoPi;
  }
  return -std::abs(r) / scale - std::log(2.0 * scale);
}

namespace detail {

double log_pdf_and_responsibilities(const MixtureParams1D& params, double x,
                                    Eigen::VectorXd& resp) {
  const auto k = params.size();
  resp.resize(k);
  double top = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < k; ++i) {
    resp[i] = std::log(params.weights[i]) +
              component_log_pdf(params.family, params.means[i], params.scales[i], x);
    if (resp[i] > top) top = resp[i];
  }
  if (!std::isfinite(top)) {
    // Every weighted component is -inf; fall back to the weights themselves.
    resp = params.weights;
    return top;
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    resp[i] = std::exp(resp[i] - top);
    total += resp[i];
  }
  resp /= total;
  return top + std::log(total);
}

void z_gradients(const MixtureParams1D& params, double x, const Eigen::VectorXd& resp,
                 ZGradients1D& out) {
  const auto k = params.size();
  out.d_z_alpha = resp - params.weights;
  out.d_z_mu.resize(k);
  out.d_z_sigma.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double r = x - params.means[i];
    const double s = params.scales[i];
    if (params.family == Family::MoG) {
      out.d_z_mu[i] = resp[i] * r / (s * s);
      out.d_z_sigma[i] = resp[i] * (r * r / (s * s) - 1.0);
    } else {
      out.d_z_mu[i] = resp[i] * sign_of(r) / s;
      out.d_z_sigma[i] = resp[i] * (std::abs(r) / s - 1.0);
    }
    if (s <= kScaleFloor) out.d_z_sigma[i] = 0.0;
  }
}

}  // namespace detail

namespace {

void check_x(double x) {
  if (!std::isfinite(x)) throw ValidationError("mixture evaluated at a non-finite point");
}

}  // namespace

double log_pdf(const MixtureParams1D& params, double x) {
  params.validate();
  check_x(x);
  Eigen::VectorXd resp;
  return detail::log_pdf_and_responsibilities(params, x, resp);
}

Responsibilities responsibilities(const MixtureParams1D& params, double x) {
  params.validate();
  check_x(x);
  Responsibilities r;
  detail::log_pdf_and_responsibilities(params, x, r.values);
  return r;
}

ZGradients1D grad_logpdf_wrt_z(const MixtureParams1D& params, double x) {
  params.validate();
  check_x(x);
  Eigen::VectorXd resp;
  detail::log_pdf_and_responsibilities(params, x, resp);
  ZGradients1D g;
  detail::z_gradients(params, x, resp, g);
  return g;
}

double sample(const MixtureParams1D& params, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  Eigen::Index pick = params.size() - 1;
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    cumulative += params.weights[i];
    if (u < cumulative) {
      pick = i;
      break;
    }
  }
  const double mean = params.means[pick];
  const double scale = params.scales[pick];
  if (params.family == Family::MoG) {
    std::normal_distribution<double> normal(0.0, 1.0);
    return mean + scale * normal(rng);
  }
  // Inverse CDF of the Laplace distribution.
  double v = unit(rng) - 0.5;
  while (v == -0.5) v = unit(rng) - 0.5;
  return mean - scale * sign_of(v) * std::log1p(-2.0 * std::abs(v));
}

}  // namespace rnade
