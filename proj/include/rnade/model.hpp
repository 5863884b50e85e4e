#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rnade/mixture.hpp"

namespace rnade {

// Row-major storage so that a datapoint is a contiguous span.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation : std::uint8_t { RescaledSigmoid = 0, RescaledReLU = 1 };

std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view text);

// Every trainable tensor of the model. Output heads for all D conditionals
// are packed side by side: V_* is H x (D*K) and the block for conditional d
// is columns [d*K, d*K + K). Output biases are D x K.
struct TensorSet {
  Eigen::VectorXd rho;  // D
  Eigen::MatrixXd W;    // H x (D-1)
  Eigen::VectorXd c;    // H
  Eigen::MatrixXd V_alpha, V_mu, V_sigma;
  Eigen::MatrixXd b_alpha, b_mu, b_sigma;

  // Visits tensors in serialization order.
  template <typename F>
  void visit(F&& f) {
    f("rho", rho);
    f("W", W);
    f("c", c);
    f("V_alpha", V_alpha);
    f("b_alpha", b_alpha);
    f("V_mu", V_mu);
    f("b_mu", b_mu);
    f("V_sigma", V_sigma);
    f("b_sigma", b_sigma);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<TensorSet*>(this)->visit([&](std::string_view name, const auto& t) { f(name, t); });
  }
};

// Applies f(name, a_tensor, b_tensor) pairwise over two tensor sets.
template <typename A, typename B, typename F>
void zip_tensors(A& a, B& b, F&& f) {
  f("rho", a.rho, b.rho);
  f("W", a.W, b.W);
  f("c", a.c, b.c);
  f("V_alpha", a.V_alpha, b.V_alpha);
  f("b_alpha", a.b_alpha, b.b_alpha);
  f("V_mu", a.V_mu, b.V_mu);
  f("b_mu", a.b_mu, b.b_mu);
  f("V_sigma", a.V_sigma, b.V_sigma);
  f("b_sigma", a.b_sigma, b.b_sigma);
}

struct RnadeParams : TensorSet {
  std::size_t D = 0;
  std::size_t H = 0;
  std::size_t K = 0;
  Family family = Family::MoG;
  Activation activation = Activation::RescaledReLU;

  // Throws ValidationError on inconsistent shapes or non-finite entries.
  void validate() const;

  auto head(const Eigen::MatrixXd& V, std::size_t d) const {
    return V.middleCols(static_cast<Eigen::Index>(d * K), static_cast<Eigen::Index>(K));
  }
};

// Gradient of log p(x); same shapes as the parameters it belongs to.
struct ParamGradients : TensorSet {
  static ParamGradients zeros_like(const RnadeParams& params);
  void set_zero();
};

// Maps model position d to a dataset column.
struct Ordering {
  std::vector<std::size_t> perm;

  static Ordering identity(std::size_t D);
  static Ordering random(std::size_t D, Rng& rng);
  void validate(std::size_t D) const;
};

struct HiddenState {
  Eigen::VectorXd a;
  Eigen::VectorXd psi;
  Eigen::VectorXd h;
  Eigen::VectorXd z_alpha, z_mu, z_sigma;
};

RnadeParams init_params(std::size_t D, std::size_t H, std::size_t K, Family family,
                        Activation activation, std::uint64_t seed);

// Conditional of model position d (0-based) given the first d values in model
// order (x_prefix.size() == d).
MixtureParams1D conditional_params(const RnadeParams& params, std::span<const double> x_prefix,
                                   std::size_t d);

// Hidden units and output pre-activations for position d given accumulated
// activation a_d.
void hidden_and_outputs(const RnadeParams& params, const Eigen::VectorXd& a, std::size_t d,
                        HiddenState& state);

// log p(x) where x is in dataset column order.
double log_density(const RnadeParams& params, std::span<const double> x,
                   const Ordering& ordering);

// Per-position log-conditionals; entry d is log p(x_perm[d] | preceding).
Eigen::VectorXd log_conditionals(const RnadeParams& params, std::span<const double> x,
                                 const Ordering& ordering);

enum class BackwardMode {
  // Recover a_d during the backward sweep by subtracting x_d W_{.,d}.
  kSubtract,
  // Keep every a_d from the forward sweep.
  kStore,
};

struct GradientOptions {
  BackwardMode mode = BackwardMode::kSubtract;
  // Multiply each z_mu gradient by the component's current scale before it
  // is propagated. Off for the exact gradient.
  bool scale_mean_gradients = false;
  // Incremented by the number of component scales that hit kScaleFloor.
  std::size_t* floor_hits = nullptr;
};

// Computes log p(x) and accumulates its gradient into `grads` (grads += weight * d log p).
double accumulate_gradients(const RnadeParams& params, std::span<const double> x,
                            const Ordering& ordering, ParamGradients& grads, double weight = 1.0,
                            const GradientOptions& options = {});

struct DensityAndGradients {
  double log_density = 0.0;
  ParamGradients grads;
};

DensityAndGradients gradients(const RnadeParams& params, std::span<const double> x,
                              const Ordering& ordering, const GradientOptions& options = {});

struct SampleOptions {
  // Rows with any value outside [box_lo, box_hi] are redrawn.
  std::optional<std::pair<double, double>> box;
  std::size_t max_attempts_per_row = 10000;
};

// n x D matrix of samples in dataset column order.
Matrix sample(const RnadeParams& params, std::size_t n, const Ordering& ordering, Rng& rng,
              const SampleOptions& options = {});

}  // namespace rnade
