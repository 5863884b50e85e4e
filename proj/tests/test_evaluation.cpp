#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "rnade/errors.hpp"
#include "rnade/evaluation.hpp"
#include "test_util.hpp"

using namespace rnade;

namespace {

RnadeParams zero_model(std::size_t D, Family family = Family::MoG) {
  auto p = init_params(D, 4, 3, family, Activation::RescaledReLU, 1);
  TensorSet& t = p;
  t.visit([](std::string_view name, auto& x) {
    if (name != "rho") x.setZero();
  });
  return p;
}

// Two-sided tail of Student's t from Simpson integration of its density.
double t_tail_oracle(double t, double dof) {
  const long double nu = dof;
  const long double log_c = std::lgamma((nu + 1) / 2) - std::lgamma(nu / 2) -
                            0.5L * std::log(nu * std::numbers::pi_v<long double>);
  auto f = [&](long double x) { return std::exp(log_c - (nu + 1) / 2 * std::log1p(x * x / nu)); };
  const int n = 200000;
  const long double hi = std::abs(t);
  const long double h = hi / n;
  long double s = f(0) + f(hi);
  for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 == 1 ? 4 : 2);
  const long double central = s * h / 3;
  return static_cast<double>(1.0L - 2.0L * central);
}

}  // namespace

TEST_CASE("summary statistics") {
  const std::vector<double> constant(7, -1.5);
  auto r = summarize(constant, "m");
  CHECK(r.mean == -1.5);
  CHECK(r.standard_error == 0.0);
  CHECK(r.n == 7);
  CHECK(r.model_id == "m");

  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  r = summarize(v, "m");
  CHECK(r.mean == 2.5);
  CHECK(r.standard_error == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  CHECK_THROWS_AS(summarize(std::vector<double>{}, "m"), DataError);
}

TEST_CASE("zero-initialized model scores the origin") {
  const auto p = zero_model(3);
  Matrix m = Matrix::Zero(5, 3);
  const auto r = evaluate(p, make_dataset(m), Ordering::identity(3));
  CHECK(std::abs(r.mean - 3.0 * -0.5 * std::log(2.0 * std::numbers::pi)) < 1e-12);
  CHECK(std::abs(r.mean + 2.7568155) < 1e-6);
  CHECK(r.standard_error == 0.0);
  CHECK_THROWS_AS(evaluate(p, make_dataset(Matrix(0, 3)), Ordering::identity(3)), DataError);
  CHECK_THROWS_AS(evaluate(p, make_dataset(Matrix::Zero(2, 2)), Ordering::identity(3)), ValidationError);
}

TEST_CASE("evaluation is invariant to row order and decomposes per dimension") {
  Rng rng(3);
  const auto p = rnade::testing::random_model(4, 6, 3, Family::MoL, Activation::RescaledSigmoid, 3);
  std::normal_distribution<double> g;
  Matrix m(60, 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  const auto data = make_dataset(m);
  const auto o = Ordering{{2, 0, 3, 1}};
  const auto a = evaluate(p, data, o);

  std::vector<std::size_t> rev(60);
  for (std::size_t i = 0; i < 60; ++i) rev[i] = 59 - i;
  const auto b = evaluate(p, data.select_rows(rev), o);
  CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-14));
  CHECK(a.standard_error == doctest::Approx(b.standard_error).epsilon(1e-12));

  const auto per_dim = per_dimension_mean(p, data, o);
  CHECK(std::abs(per_dim.sum() - a.mean) < 1e-10);

  // Column 2 is first in the ordering, so its conditional is the marginal.
  double first = 0.0;
  for (std::size_t i = 0; i < 60; ++i) {
    first += log_pdf(conditional_params(p, {}, 0), data.values(static_cast<Eigen::Index>(i), 2));
  }
  CHECK(per_dim[2] == doctest::Approx(first / 60.0).epsilon(1e-12));
}

TEST_CASE("baseline evaluation") {
  FullGaussian g{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)};
  const auto r = evaluate(g, make_dataset(Matrix::Zero(3, 2)));
  CHECK(r.mean == doctest::Approx(-std::log(2.0 * std::numbers::pi)));
  MogModel mog{Eigen::VectorXd::Ones(1), {g}};
  CHECK(evaluate(mog, make_dataset(Matrix::Zero(3, 2))).mean == doctest::Approx(r.mean));
  CHECK(evaluate(mog, make_dataset(Matrix::Zero(3, 2))).model_id == "mog");
}

TEST_CASE("paired t-test edge cases") {
  const std::vector<double> a{1.0, -1.0};
  const std::vector<double> zero{0.0, 0.0};
  auto r = paired_t_test(a, zero);
  CHECK(r.t == 0.0);
  CHECK(r.p_two_sided == doctest::Approx(1.0));
  CHECK(r.dof == 1);
  CHECK_FALSE(r.degenerate);

  const std::vector<double> same{3.0, 4.0, 5.0};
  r = paired_t_test(same, same);
  CHECK(r.degenerate);
  CHECK(r.t == 0.0);
  CHECK(r.p_two_sided == 1.0);

  const std::vector<double> shifted{4.0, 5.0, 6.0};
  r = paired_t_test(shifted, same);
  CHECK(r.degenerate);
  CHECK(std::isinf(r.t));
  CHECK(r.t > 0);
  CHECK(r.p_two_sided == 0.0);

  CHECK_THROWS_AS(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}), ValidationError);
  CHECK_THROWS_AS(paired_t_test(same, a), ValidationError);
}

TEST_CASE("paired t-test against a quadrature oracle") {
  const std::vector<double> a{-13.1, -12.9, -13.4, -12.7, -13.0, -13.3, -12.8, -13.2, -12.6, -13.05};
  const std::vector<double> b{-13.3, -13.0, -13.2, -13.1, -13.35, -13.3, -13.0, -13.6, -12.9, -13.1};
  const auto r = paired_t_test(a, b);
  CHECK(r.dof == 9);
  CHECK(r.diffs.size() == 10);
  double mean = 0.0;
  for (std::size_t i = 0; i < 10; ++i) mean += (a[i] - b[i]) / 10.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < 10; ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  CHECK(r.t == doctest::Approx(mean / std::sqrt(ss / 9.0 / 10.0)).epsilon(1e-12));
  CHECK(std::abs(r.p_two_sided - t_tail_oracle(r.t, 9.0)) < 1e-6);
  CHECK(r.p_one_sided == doctest::Approx(r.p_two_sided / 2.0));

  const auto flipped = paired_t_test(b, a);
  CHECK(flipped.t == -r.t);
  CHECK(flipped.p_two_sided == r.p_two_sided);

  for (double t : {0.1, 0.7, 1.5, 2.262, 4.0}) {
    for (double dof : {1.0, 3.0, 9.0, 30.0}) {
      CHECK(std::abs(2.0 * (1.0 - student_t_cdf(t, dof)) - t_tail_oracle(t, dof)) < 1e-6);
      CHECK(student_t_cdf(-t, dof) == doctest::Approx(1.0 - student_t_cdf(t, dof)).epsilon(1e-12));
    }
  }
}

TEST_CASE("conditional export") {
  const auto z = zero_model(3);
  const std::vector<double> x{0.3, -1.0, 2.0};
  const auto rows = export_conditional(z, x, 1, {-4.0, 4.0, 81}, Ordering::identity(3));
  REQUIRE(rows.size() == 81);
  CHECK(rows.front().first == -4.0);
  CHECK(rows.back().first == 4.0);
  for (const auto& [v, lp] : rows) {
    CHECK(std::abs(lp - (-0.5 * v * v - 0.5 * std::log(2.0 * std::numbers::pi))) < 1e-12);
  }

  for (auto family : {Family::MoG, Family::MoL}) {
    const std::uint64_t seed = family == Family::MoG ? 9 : 10;
    const auto p = rnade::testing::random_model(3, 5, 3, family, Activation::RescaledReLU, seed);
    const auto o = Ordering::identity(3);
    const std::vector<double> other{5.0, 7.0, -3.0};
    CHECK(export_conditional(p, x, 0, {}, o) == export_conditional(p, other, 0, {}, o));

    const std::vector<double> prefix{x[0], x[1]};
    const auto cond = conditional_params(p, prefix, 2);
    double half = 0.0;
    for (Eigen::Index k = 0; k < cond.size(); ++k) {
      half = std::max(half, std::abs(cond.means[k]) + 12.0 * cond.scales[k]);
    }
    const auto grid = export_conditional(p, x, 2, {-half, half, 200001}, o);
    double integral = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) {
      integral += 0.5 * (std::exp(grid[i].second) + std::exp(grid[i - 1].second)) *
                  (grid[i].first - grid[i - 1].first);
    }
    CHECK(std::abs(integral - 1.0) < 1e-3);
  }

  CHECK_THROWS_AS(export_conditional(z, x, 1, {1.0, 1.0, 10}, Ordering::identity(3)), ValidationError);
  CHECK_THROWS_AS(export_conditional(z, x, 3, {}, Ordering::identity(3)), ValidationError);
  const auto csv = conditional_to_csv(rows);
  CHECK(csv.rfind("value,log_density\n-4,", 0) == 0);
}
