#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace rnade {

enum class Family : std::uint8_t { MoG = 0, MoL = 1 };

std::string_view to_string(Family family);
Family parse_family(std::string_view text);

// Smallest scale produced when exponentiating a pre-activation scale output.
inline constexpr double kScaleFloor = 1e-12;

using Rng = std::mt19937_64;

// One-dimensional mixture. `scales` holds standard deviations for MoG and
// Laplace diversities b for MoL.
struct MixtureParams1D {
  Family family = Family::MoG;
  Eigen::VectorXd weights;
  Eigen::VectorXd means;
  Eigen::VectorXd scales;

  Eigen::Index size() const { return weights.size(); }
  // Throws ValidationError when the invariants do not hold.
  void validate() const;
};

struct Responsibilities {
  Eigen::VectorXd values;
};

// Gradients of log p(x) with respect to the pre-activation outputs:
// weights = softmax(z_alpha), means = z_mu, scales = exp(z_sigma).
struct ZGradients1D {
  Eigen::VectorXd d_z_alpha;
  Eigen::VectorXd d_z_mu;
  Eigen::VectorXd d_z_sigma;
};

// Builds a mixture from pre-activation outputs. Scales are floored at
// kScaleFloor; the number of floored entries is added to *floor_hits.
MixtureParams1D mixture_from_outputs(Family family, const Eigen::VectorXd& z_alpha,
                                     const Eigen::VectorXd& z_mu,
                                     const Eigen::VectorXd& z_sigma,
                                     std::size_t* floor_hits = nullptr);

double component_log_pdf(Family family, double mean, double scale, double x);

double log_pdf(const MixtureParams1D& params, double x);
Responsibilities responsibilities(const MixtureParams1D& params, double x);
ZGradients1D grad_logpdf_wrt_z(const MixtureParams1D& params, double x);
double sample(const MixtureParams1D& params, Rng& rng);

namespace detail {

// Unchecked single pass used on hot paths: returns log p(x) and writes the
// responsibilities into `resp` (resized as needed).
double log_pdf_and_responsibilities(const MixtureParams1D& params, double x,
                                    Eigen::VectorXd& resp);

// Unchecked z-gradients given precomputed responsibilities. Components whose
// scale sits on the floor get a zero scale gradient.
void z_gradients(const MixtureParams1D& params, double x, const Eigen::VectorXd& resp,
                 ZGradients1D& out);

}  // namespace detail

}  // namespace rnade
