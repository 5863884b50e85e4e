#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "rnade/baselines.hpp"
#include "rnade/errors.hpp"

using namespace rnade;

namespace {

// Density from the explicit inverse and determinant, summed in long double.
double explicit_gaussian_log_pdf(const FullGaussian& g, const Eigen::VectorXd& x) {
  const Eigen::VectorXd r = x - g.mean;
  const double quad = r.dot(g.covariance.inverse() * r);
  const double d = static_cast<double>(g.mean.size());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + std::log(g.covariance.determinant()) + quad);
}

double linear_mog_log_pdf(const MogModel& m, const Eigen::VectorXd& x) {
  long double total = 0.0L;
  for (std::size_t k = 0; k < m.components.size(); ++k) {
    total += static_cast<long double>(m.weights[static_cast<Eigen::Index>(k)]) *
             std::exp(static_cast<long double>(explicit_gaussian_log_pdf(m.components[k], x)));
  }
  return static_cast<double>(std::log(total));
}

FullGaussian random_gaussian(std::size_t d, Rng& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  FullGaussian out;
  out.mean = Eigen::VectorXd::NullaryExpr(static_cast<Eigen::Index>(d), [&] { return g(rng); });
  out.covariance = a * a.transpose() + 0.5 * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  return out;
}

Dataset clustered_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> pick(0, 2);
  Matrix m(static_cast<Eigen::Index>(n), 3);
  const double centers[3][3] = {{0, 0, 0}, {4, 1, -2}, {-3, 3, 1}};
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const int c = pick(rng);
    for (int j = 0; j < 3; ++j) m(i, j) = centers[c][j] + (0.5 + 0.3 * j) * g(rng);
  }
  return make_dataset(std::move(m));
}

}  // namespace

TEST_CASE("gaussian MLE on a fixed fixture") {
  Matrix m(4, 2);
  m << 1, 0, -1, 0, 0, 1, 0, -1;
  const auto g = fit_gaussian_mle(make_dataset(m));
  CHECK(g.mean.norm() == 0.0);
  const double ridge = 1e-6 * 0.5;
  CHECK(g.covariance(0, 0) == doctest::Approx(0.5 + ridge).epsilon(1e-14));
  CHECK(g.covariance(1, 1) == doctest::Approx(0.5 + ridge).epsilon(1e-14));
  CHECK(g.covariance(0, 1) == 0.0);
  const std::vector<double> origin{0.0, 0.0};
  // -log(2 pi) - 0.5 log(0.25) = -log(pi), ridge shifts it by ~2e-6.
  CHECK(gaussian_log_pdf(g, origin) == doctest::Approx(-1.1447299).epsilon(1e-5));

  CHECK_THROWS_AS(fit_gaussian_mle(make_dataset(Matrix(2, 2))), DataError);
}

TEST_CASE("gaussian MLE maximizes likelihood against perturbations") {
  Rng rng(4);
  const auto data = clustered_data(300, 2);
  const auto g = fit_gaussian_mle(data, 1e-12);
  const double best = mean_log_likelihood(g, data);
  std::normal_distribution<double> n;
  for (int t = 0; t < 40; ++t) {
    FullGaussian p = g;
    for (Eigen::Index i = 0; i < 3; ++i) p.mean[i] += 0.01 * n(rng);
    Eigen::MatrixXd e = Eigen::MatrixXd::NullaryExpr(3, 3, [&] { return 0.01 * n(rng); });
    p.covariance += e + e.transpose();
    CHECK(mean_log_likelihood(p, data) < best);
  }
}

TEST_CASE("gaussian log density against explicit inverse") {
  Rng rng(8);
  std::normal_distribution<double> n;
  for (int t = 0; t < 20; ++t) {
    const auto g = random_gaussian(5, rng);
    Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(5, [&] { return 2.0 * n(rng); });
    CHECK(gaussian_log_pdf(g, std::span(x.data(), 5)) ==
          doctest::Approx(explicit_gaussian_log_pdf(g, x)).epsilon(1e-10));
  }
  FullGaussian bad;
  bad.mean = Eigen::VectorXd::Zero(2);
  bad.covariance = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("mixture log density identities") {
  Rng rng(12);
  std::normal_distribution<double> n;
  const auto g = random_gaussian(3, rng);
  MogModel single{Eigen::VectorXd::Ones(1), {g}};
  MogModel twin{Eigen::VectorXd::Constant(2, 0.5), {g, g}};
  MogModel mix{Eigen::Vector3d(0.2, 0.5, 0.3), {random_gaussian(3, rng), random_gaussian(3, rng), g}};
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(3, [&] { return 2.0 * n(rng); });
    const std::span<const double> xs(x.data(), 3);
    CHECK(mog_log_pdf(single, xs) == doctest::Approx(gaussian_log_pdf(g, xs)).epsilon(1e-13));
    CHECK(mog_log_pdf(twin, xs) == doctest::Approx(gaussian_log_pdf(g, xs)).epsilon(1e-13));
    CHECK(mog_log_pdf(mix, xs) == doctest::Approx(linear_mog_log_pdf(mix, x)).epsilon(1e-10));
  }
  // Far away points stay finite through log-sum-exp.
  Eigen::VectorXd far = Eigen::VectorXd::Constant(3, 1e3);
  CHECK(std::isfinite(mog_log_pdf(mix, std::span<const double>(far.data(), 3))));

  MogModel unnormalized = mix;
  unnormalized.weights[0] = 0.3;
  CHECK_THROWS_AS(unnormalized.validate(), ValidationError);
}

TEST_CASE("full-batch EM never decreases the likelihood") {
  const auto data = clustered_data(600, 21);
  EmConfig config;
  config.n_components = 4;
  Rng rng(3);
  auto model = init_mog(data, 4, config.covariance_floor, rng);
  double prev = mean_log_likelihood(model, data);
  for (int t = 0; t < 100; ++t) {
    model = em_step(model, data, 1.0, config);
    const double ll = mean_log_likelihood(model, data);
    REQUIRE(ll >= prev - 1e-8);
    prev = ll;
  }
  CHECK_NOTHROW(model.validate());
  CHECK(prev > mean_log_likelihood(fit_gaussian_mle(data), data) + 0.5);
}

TEST_CASE("EM step edge cases") {
  const auto data = clustered_data(200, 5);
  EmConfig config;
  Rng rng(1);

  auto one = init_mog(data, 1, config.covariance_floor, rng);
  one.components[0].mean.setConstant(7.0);
  const auto stepped = em_step(one, data, 1.0, config);
  const auto mle = fit_gaussian_mle(data);
  CHECK((stepped.components[0].mean - mle.mean).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((stepped.components[0].covariance - mle.covariance).cwiseAbs().maxCoeff() < 1e-12);

  auto model = init_mog(data, 3, config.covariance_floor, rng);
  const auto same = em_step(model, data, 0.0, config);
  CHECK(same.weights == model.weights);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(same.components[k].mean == model.components[k].mean);
    CHECK(same.components[k].covariance == model.components[k].covariance);
  }

  // A component parked far from every point receives no responsibility.
  model.components[2].mean.setConstant(1e4);
  model.components[2].covariance = 1e-4 * Eigen::MatrixXd::Identity(3, 3);
  EmDiagnostics diag;
  const auto next = em_step(model, data, 1.0, config, &diag);
  CHECK(diag.empty_components == std::vector<std::size_t>{2});
  CHECK(next.components[2].mean == model.components[2].mean);
  CHECK(next.weights.minCoeff() >= config.weight_floor * 0.5);
  CHECK(next.weights.sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(em_step(model, data, 1.5, config), ValidationError);
}

TEST_CASE("stepwise EM training tracks validation") {
  const auto train = clustered_data(2000, 31);
  const auto valid = clustered_data(500, 32);
  EmConfig config;
  config.n_components = 3;
  config.iterations = 60;
  config.batch_size = 500;
  config.eta0 = 0.5;
  config.seed = 9;
  const auto fit = train_mog(train, &valid, config);
  CHECK(fit.trace.valid_ll.size() == 61);
  CHECK(fit.trace.eta.front() == 0.5);
  CHECK(fit.trace.eta.back() < 0.5 * 2.0 / 60.0);
  CHECK(mean_log_likelihood(fit.model, valid) == doctest::Approx(fit.trace.best_valid_ll));
  CHECK(fit.trace.best_valid_ll > mean_log_likelihood(fit_gaussian_mle(train), valid) + 0.5);

  const auto again = train_mog(train, &valid, config);
  CHECK(again.model.weights == fit.model.weights);
}
