#include "rnade/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rnade/errors.hpp"

namespace rnade {

std::string_view to_string(Activation activation) {
  return activation == Activation::RescaledReLU ? "relu" : "sigmoid";
}

Activation parse_activation(std::string_view text) {
  if (text == "relu" || text == "RescaledReLU") return Activation::RescaledReLU;
  if (text == "sigmoid" || text == "RescaledSigmoid") return Activation::RescaledSigmoid;
  throw ValidationError("unknown activation '" + std::string(text) + "' (expected relu or sigmoid)");
}

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

template <typename T>
bool all_finite(const T& t) {
  return t.size() == 0 || t.allFinite();
}

void check_shape(std::string_view name, Eigen::Index rows, Eigen::Index cols, std::size_t r,
                 std::size_t c) {
  if (rows != idx(r) || cols != idx(c)) {
    throw ValidationError("tensor " + std::string(name) + " has shape " + std::to_string(rows) +
                          "x" + std::to_string(cols) + ", expected " + std::to_string(r) + "x" +
                          std::to_string(c));
  }
}

void check_input(std::span<const double> x, std::size_t D, const Ordering& ordering) {
  if (ordering.perm.size() != D) throw ValidationError("ordering length does not match dimensionality");
  for (auto p : ordering.perm) {
    if (p >= D) throw ValidationError("ordering refers to a column outside the datapoint");
  }
  if (x.size() != D) {
    throw ValidationError("datapoint has " + std::to_string(x.size()) + " values, model expects " +
                          std::to_string(D));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw ValidationError("datapoint value " + std::to_string(i) + " is not finite");
    }
  }
}

}  // namespace

void RnadeParams::validate() const {
  if (D < 1 || H < 1 || K < 1) throw ValidationError("model sizes D, H, K must all be >= 1");
  check_shape("rho", rho.rows(), rho.cols(), D, 1);
  check_shape("W", W.rows(), W.cols(), H, D - 1);
  check_shape("c", c.rows(), c.cols(), H, 1);
  for (const auto* V : {&V_alpha, &V_mu, &V_sigma}) check_shape("V", V->rows(), V->cols(), H, D * K);
  for (const auto* b : {&b_alpha, &b_mu, &b_sigma}) check_shape("b", b->rows(), b->cols(), D, K);
  visit([](std::string_view name, const auto& t) {
    if (!all_finite(t)) throw ValidationError("tensor " + std::string(name) + " has non-finite entries");
  });
}

ParamGradients ParamGradients::zeros_like(const RnadeParams& params) {
  ParamGradients g;
  zip_tensors(g, params, [](std::string_view, auto& dst, const auto& src) {
    dst.setZero(src.rows(), src.cols());
  });
  return g;
}

void ParamGradients::set_zero() {
  visit([](std::string_view, auto& t) { t.setZero(); });
}

Ordering Ordering::identity(std::size_t D) {
  Ordering o;
  o.perm.resize(D);
  std::iota(o.perm.begin(), o.perm.end(), std::size_t{0});
  return o;
}

Ordering Ordering::random(std::size_t D, Rng& rng) {
  Ordering o = identity(D);
  std::shuffle(o.perm.begin(), o.perm.end(), rng);
  return o;
}

void Ordering::validate(std::size_t D) const {
  if (perm.size() != D) throw ValidationError("ordering length does not match dimensionality");
  std::vector<bool> seen(D, false);
  for (auto p : perm) {
    if (p >= D || seen[p]) throw ValidationError("ordering is not a permutation");
    seen[p] = true;
  }
}

RnadeParams init_params(std::size_t D, std::size_t H, std::size_t K, Family family,
                        Activation activation, std::uint64_t seed) {
  if (D < 1 || H < 1 || K < 1) throw ValidationError("model sizes D, H, K must all be >= 1");
  RnadeParams p;
  p.D = D;
  p.H = H;
  p.K = K;
  p.family = family;
  p.activation = activation;

  Rng rng(seed);
  const double bound = 0.01 / std::sqrt(static_cast<double>(H));
  std::uniform_real_distribution<double> init(-bound, bound);
  auto fill = [&](Eigen::MatrixXd& m, std::size_t rows, std::size_t cols) {
    m.resize(idx(rows), idx(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = init(rng);
    }
  };

  p.rho = Eigen::VectorXd::Ones(idx(D));
  fill(p.W, H, D - 1);
  p.c = Eigen::VectorXd::Zero(idx(H));
  fill(p.V_alpha, H, D * K);
  fill(p.V_mu, H, D * K);
  fill(p.V_sigma, H, D * K);
  p.b_alpha = Eigen::MatrixXd::Zero(idx(D), idx(K));
  p.b_mu = Eigen::MatrixXd::Zero(idx(D), idx(K));
  p.b_sigma = Eigen::MatrixXd::Zero(idx(D), idx(K));
  return p;
}

void hidden_and_outputs(const RnadeParams& params, const Eigen::VectorXd& a, std::size_t d,
                        HiddenState& state) {
  const double rho = params.rho[idx(d)];
  state.psi = rho * a;
  if (params.activation == Activation::RescaledReLU) {
    state.h = state.psi.cwiseMax(0.0);
  } else {
    state.h = 1.0 / (1.0 + (-state.psi.array()).exp());
  }
  state.z_alpha.noalias() = params.head(params.V_alpha, d).transpose() * state.h;
  state.z_alpha += params.b_alpha.row(idx(d)).transpose();
  state.z_mu.noalias() = params.head(params.V_mu, d).transpose() * state.h;
  state.z_mu += params.b_mu.row(idx(d)).transpose();
  state.z_sigma.noalias() = params.head(params.V_sigma, d).transpose() * state.h;
  state.z_sigma += params.b_sigma.row(idx(d)).transpose();
}

MixtureParams1D conditional_params(const RnadeParams& params, std::span<const double> x_prefix,
                                   std::size_t d) {
  if (d >= params.D) throw ValidationError("conditional index out of range");
  if (x_prefix.size() != d) {
    throw ValidationError("conditional " + std::to_string(d) + " needs a prefix of length " +
                          std::to_string(d));
  }
  Eigen::VectorXd a = params.c;
  for (std::size_t k = 0; k < d; ++k) {
    if (!std::isfinite(x_prefix[k])) throw ValidationError("prefix value is not finite");
    a.noalias() += x_prefix[k] * params.W.col(idx(k));
  }
  HiddenState state;
  hidden_and_outputs(params, a, d, state);
  return mixture_from_outputs(params.family, state.z_alpha, state.z_mu, state.z_sigma);
}

Eigen::VectorXd log_conditionals(const RnadeParams& params, std::span<const double> x,
                                 const Ordering& ordering) {
  check_input(x, params.D, ordering);
  Eigen::VectorXd out(idx(params.D));
  Eigen::VectorXd a = params.c;
  HiddenState state;
  Eigen::VectorXd resp;
  for (std::size_t d = 0; d < params.D; ++d) {
    const double xd = x[ordering.perm[d]];
    hidden_and_outputs(params, a, d, state);
    const auto mix = mixture_from_outputs(params.family, state.z_alpha, state.z_mu, state.z_sigma);
    out[idx(d)] = detail::log_pdf_and_responsibilities(mix, xd, resp);
    if (d + 1 < params.D) a.noalias() += xd * params.W.col(idx(d));
  }
  return out;
}

double log_density(const RnadeParams& params, std::span<const double> x,
                   const Ordering& ordering) {
  return log_conditionals(params, x, ordering).sum();
}

double accumulate_gradients(const RnadeParams& params, std::span<const double> x,
                            const Ordering& ordering, ParamGradients& grads, double weight,
                            const GradientOptions& options) {
  check_input(x, params.D, ordering);
  const std::size_t D = params.D;
  const bool store = options.mode == BackwardMode::kStore;
  auto value = [&](std::size_t d) { return x[ordering.perm[d]]; };

  // Forward sweep to the last activation a_D.
  Eigen::VectorXd a = params.c;
  std::vector<Eigen::VectorXd> stored;
  if (store) stored.reserve(D);
  for (std::size_t d = 0; d + 1 < D; ++d) {
    if (store) stored.push_back(a);
    a.noalias() += value(d) * params.W.col(idx(d));
  }
  if (store) stored.push_back(a);

  HiddenState state;
  Eigen::VectorXd resp;
  ZGradients1D zg;
  Eigen::VectorXd dh(idx(params.H));
  Eigen::VectorXd dpsi(idx(params.H));
  Eigen::VectorXd da = Eigen::VectorXd::Zero(idx(params.H));
  const auto K = idx(params.K);
  double total = 0.0;

  for (std::size_t step = D; step-- > 0;) {
    const std::size_t d = step;
    const Eigen::VectorXd& ad = store ? stored[d] : a;
    const double xd = value(d);

    hidden_and_outputs(params, ad, d, state);
    const auto mix = mixture_from_outputs(params.family, state.z_alpha, state.z_mu, state.z_sigma,
                                          options.floor_hits);
    const double lp = detail::log_pdf_and_responsibilities(mix, xd, resp);
    if (!std::isfinite(lp)) {
      throw NumericError("non-finite log-density at dimension " + std::to_string(d));
    }
    total += lp;
    detail::z_gradients(mix, xd, resp, zg);
    if (options.scale_mean_gradients) zg.d_z_mu.array() *= mix.scales.array();

    const auto col = idx(d * params.K);
    grads.V_alpha.middleCols(col, K).noalias() += (weight * state.h) * zg.d_z_alpha.transpose();
    grads.V_mu.middleCols(col, K).noalias() += (weight * state.h) * zg.d_z_mu.transpose();
    grads.V_sigma.middleCols(col, K).noalias() += (weight * state.h) * zg.d_z_sigma.transpose();
    grads.b_alpha.row(idx(d)) += weight * zg.d_z_alpha.transpose();
    grads.b_mu.row(idx(d)) += weight * zg.d_z_mu.transpose();
    grads.b_sigma.row(idx(d)) += weight * zg.d_z_sigma.transpose();

    dh.noalias() = params.head(params.V_alpha, d) * zg.d_z_alpha;
    dh.noalias() += params.head(params.V_mu, d) * zg.d_z_mu;
    dh.noalias() += params.head(params.V_sigma, d) * zg.d_z_sigma;
    if (!dh.allFinite()) {
      throw NumericError("non-finite hidden-unit gradient at dimension " + std::to_string(d));
    }

    if (params.activation == Activation::RescaledReLU) {
      dpsi = (state.psi.array() > 0.0).select(dh, 0.0);
    } else {
      dpsi = dh.array() * state.h.array() * (1.0 - state.h.array());
    }
    grads.rho[idx(d)] += weight * dpsi.dot(ad);

    // W_{.,d} feeds only a_{d+1}, ..., a_{D-1}: credit it with the activation
    // gradient accumulated from later steps before adding this step's share.
    if (d + 1 < D) grads.W.col(idx(d)).noalias() += (weight * xd) * da;
    da.noalias() += params.rho[idx(d)] * dpsi;

    if (d == 0) {
      grads.c.noalias() += weight * da;
    } else if (!store) {
      a.noalias() -= value(d - 1) * params.W.col(idx(d - 1));
    }
  }
  return total;
}

DensityAndGradients gradients(const RnadeParams& params, std::span<const double> x,
                              const Ordering& ordering, const GradientOptions& options) {
  DensityAndGradients out;
  out.grads = ParamGradients::zeros_like(params);
  out.log_density = accumulate_gradients(params, x, ordering, out.grads, 1.0, options);
  return out;
}

Matrix sample(const RnadeParams& params, std::size_t n, const Ordering& ordering, Rng& rng,
              const SampleOptions& options) {
  ordering.validate(params.D);
  Matrix out(idx(n), idx(params.D));
  HiddenState state;
  Eigen::VectorXd a;
  for (std::size_t row = 0; row < n; ++row) {
    std::size_t attempts = 0;
    bool accepted = false;
    while (!accepted) {
      if (++attempts > options.max_attempts_per_row) {
        throw NumericError("rejection sampling exceeded " +
                           std::to_string(options.max_attempts_per_row) + " attempts for row " +
                           std::to_string(row));
      }
      accepted = true;
      a = params.c;
      for (std::size_t d = 0; d < params.D; ++d) {
        hidden_and_outputs(params, a, d, state);
        const auto mix =
            mixture_from_outputs(params.family, state.z_alpha, state.z_mu, state.z_sigma);
        const double v = rnade::sample(mix, rng);
        if (options.box && (v < options.box->first || v > options.box->second)) {
          accepted = false;
          break;
        }
        out(idx(row), idx(ordering.perm[d])) = v;
        if (d + 1 < params.D) a.noalias() += v * params.W.col(idx(d));
      }
    }
  }
  return out;
}

}  // namespace rnade
