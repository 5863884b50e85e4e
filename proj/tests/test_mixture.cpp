#include <doctest.h>

#include <cmath>

#include "rnade/errors.hpp"
#include "rnade/mixture.hpp"
#include "test_util.hpp"

using namespace rnade;
using rnade::testing::rel_close;

namespace {

MixtureParams1D make(Family f, std::initializer_list<double> w, std::initializer_list<double> m,
                     std::initializer_list<double> s) {
  MixtureParams1D p;
  p.family = f;
  p.weights = Eigen::Map<const Eigen::VectorXd>(w.begin(), static_cast<Eigen::Index>(w.size()));
  p.means = Eigen::Map<const Eigen::VectorXd>(m.begin(), static_cast<Eigen::Index>(m.size()));
  p.scales = Eigen::Map<const Eigen::VectorXd>(s.begin(), static_cast<Eigen::Index>(s.size()));
  return p;
}

// log_pdf as a function of the pre-activation outputs.
double log_pdf_of_z(Family f, const Eigen::VectorXd& za, const Eigen::VectorXd& zm,
                    const Eigen::VectorXd& zs, double x) {
  return log_pdf(mixture_from_outputs(f, za, zm, zs), x);
}

}  // namespace

TEST_CASE("log_pdf hand values") {
  CHECK(log_pdf(make(Family::MoG, {1.0}, {0.0}, {1.0}), 0.0) == doctest::Approx(-0.9189385).epsilon(1e-7));
  CHECK(log_pdf(make(Family::MoL, {1.0}, {0.0}, {1.0}), 0.0) == doctest::Approx(-0.6931472).epsilon(1e-7));
  CHECK(log_pdf(make(Family::MoG, {0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0}), 0.0) ==
        doctest::Approx(-1.4189385).epsilon(1e-7));
}

TEST_CASE("log_pdf matches direct summation") {
  Rng rng(11);
  std::uniform_real_distribution<double> ux(-6.0, 6.0);
  for (auto family : {Family::MoG, Family::MoL}) {
    const auto m = rnade::testing::random_mixture(family, 5, rng);
    for (int i = 0; i < 100; ++i) {
      const double x = ux(rng);
      CHECK(std::abs(log_pdf(m, x) - rnade::testing::direct_sum_log_pdf(m, x)) < 1e-12);
    }
  }
}

TEST_CASE("log_pdf rejects bad input") {
  auto m = make(Family::MoG, {1.0}, {0.0}, {1.0});
  CHECK_THROWS_AS(log_pdf(m, std::nan("")), ValidationError);
  CHECK_THROWS_AS(log_pdf(m, INFINITY), ValidationError);
  CHECK_THROWS_AS(log_pdf(make(Family::MoG, {0.6, 0.6}, {0.0, 1.0}, {1.0, 1.0}), 0.0), ValidationError);
  CHECK_THROWS_AS(log_pdf(make(Family::MoG, {1.0}, {0.0}, {0.0}), 0.0), ValidationError);
  CHECK_THROWS_AS(log_pdf(make(Family::MoG, {0.5, 0.5}, {0.0}, {1.0, 1.0}), 0.0), ValidationError);
}

TEST_CASE("log_pdf stays finite far in the tails") {
  // Every component density underflows in the linear domain here.
  auto m = make(Family::MoG, {0.3, 0.7}, {0.0, 1.0}, {1e-3, 1e-3});
  const double lp = log_pdf(m, 50.0);
  CHECK(std::isfinite(lp));
  const auto r = responsibilities(m, 50.0);
  CHECK(r.values.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.values[1] == doctest::Approx(1.0));
}

TEST_CASE("responsibilities") {
  CHECK(responsibilities(make(Family::MoG, {1.0}, {3.0}, {2.0}), -1.0).values[0] == 1.0);
  const auto r = responsibilities(make(Family::MoG, {0.5, 0.5}, {-1.0, 1.0}, {1.0, 1.0}), 0.0);
  CHECK(r.values[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.values[1] == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(5);
  std::uniform_real_distribution<double> ux(-4.0, 4.0);
  for (auto family : {Family::MoG, Family::MoL}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto m = rnade::testing::random_mixture(family, 4, rng);
      const double x = ux(rng);
      const auto got = responsibilities(m, x).values;
      // Linear-domain oracle.
      Eigen::VectorXd lin(m.size());
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        lin[i] = m.weights[i] * std::exp(component_log_pdf(family, m.means[i], m.scales[i], x));
      }
      lin /= lin.sum();
      CHECK((got - lin).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(got.sum() - 1.0) < 1e-12);
      // The weight gradient is responsibilities minus weights.
      const auto g = grad_logpdf_wrt_z(m, x);
      CHECK((g.d_z_alpha - (got - m.weights)).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(g.d_z_alpha.sum()) < 1e-10);
    }
  }
}

TEST_CASE("z-gradient hand values") {
  auto g = grad_logpdf_wrt_z(make(Family::MoG, {1.0}, {0.0}, {1.0}), 1.0);
  CHECK(g.d_z_alpha[0] == 0.0);
  CHECK(g.d_z_mu[0] == doctest::Approx(1.0));
  CHECK(g.d_z_sigma[0] == doctest::Approx(0.0));
  g = grad_logpdf_wrt_z(make(Family::MoG, {1.0}, {2.5}, {0.7}), 2.5);
  CHECK(g.d_z_sigma[0] == doctest::Approx(-1.0));
  // Laplace subgradient at the mean is zero.
  g = grad_logpdf_wrt_z(make(Family::MoL, {1.0}, {2.5}, {0.7}), 2.5);
  CHECK(g.d_z_mu[0] == 0.0);
  CHECK(g.d_z_sigma[0] == doctest::Approx(-1.0));
}

TEST_CASE("z-gradients match central finite differences") {
  Rng rng(2024);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  const double step = 1e-5;
  for (auto family : {Family::MoG, Family::MoL}) {
    for (int trial = 0; trial < 25; ++trial) {
      Eigen::VectorXd za(4), zm(4), zs(4);
      for (int i = 0; i < 4; ++i) {
        za[i] = u(rng);
        zm[i] = 2.0 * u(rng);
        zs[i] = 0.5 * u(rng);
      }
      const double x = 2.0 * u(rng);
      const auto g = grad_logpdf_wrt_z(mixture_from_outputs(family, za, zm, zs), x);
      for (int i = 0; i < 4; ++i) {
        auto fd = [&](Eigen::VectorXd& z) {
          return rnade::testing::central_difference(
              [&](double v) {
                const double keep = z[i];
                z[i] = v;
                const double r = log_pdf_of_z(family, za, zm, zs, x);
                z[i] = keep;
                return r;
              },
              z[i], step);
        };
        CHECK(rel_close(g.d_z_alpha[i], fd(za), 1e-6, 1e-8));
        CHECK(rel_close(g.d_z_mu[i], fd(zm), 1e-6, 1e-8));
        CHECK(rel_close(g.d_z_sigma[i], fd(zs), 1e-6, 1e-8));
      }
    }
  }
}

TEST_CASE("log_pdf integrates to one") {
  Rng rng(99);
  for (auto family : {Family::MoG, Family::MoL}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto m = rnade::testing::random_mixture(family, 3, rng);
      // Laplace tails beyond 12 scales still hold exp(-12) ~ 6e-6 of the
      // mass, so the Laplace box is widened to 20 scales.
      const double reach = family == Family::MoG ? 12.0 : 20.0;
      const double lo = m.means.minCoeff() - reach * m.scales.maxCoeff();
      const double hi = m.means.maxCoeff() + reach * m.scales.maxCoeff();
      const double mass = rnade::testing::simpson([&](double x) { return std::exp(log_pdf(m, x)); },
                                                  lo, hi, 400000);
      CHECK(std::abs(mass - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("log_pdf is shift equivariant") {
  Rng rng(3);
  for (auto family : {Family::MoG, Family::MoL}) {
    auto m = rnade::testing::random_mixture(family, 4, rng);
    auto shifted = m;
    shifted.means.array() += 3.25;
    for (double x : {-2.0, 0.1, 1.7}) {
      CHECK(std::abs(log_pdf(shifted, x + 3.25) - log_pdf(m, x)) < 1e-12);
    }
  }
}

TEST_CASE("scale floor") {
  Eigen::VectorXd z = Eigen::VectorXd::Constant(2, -100.0);
  std::size_t hits = 0;
  const auto m = mixture_from_outputs(Family::MoG, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), z, &hits);
  CHECK(hits == 2);
  CHECK(m.scales[0] == kScaleFloor);
}

TEST_CASE("sampling") {
  auto tight = make(Family::MoG, {1.0}, {4.0}, {1e-12});
  Rng rng(1);
  CHECK(std::abs(sample(tight, rng) - 4.0) < 1e-10);

  auto m = make(Family::MoL, {0.4, 0.6}, {-1.0, 2.0}, {0.5, 1.5});
  Rng a(77), b(77);
  CHECK(sample(m, a) == sample(m, b));

  auto two = make(Family::MoG, {0.3, 0.7}, {0.0, 10.0}, {1.0, 1.0});
  Rng r(123);
  const int n = 100000;
  int above = 0;
  for (int i = 0; i < n; ++i) above += sample(two, r) > 5.0 ? 1 : 0;
  const double frac = static_cast<double>(above) / n;
  const double se = std::sqrt(0.7 * 0.3 / n);
  CHECK(std::abs(frac - 0.7) < 3.0 * se);

  // Laplace moments: mean mu, variance 2 b^2.
  auto lap = make(Family::MoL, {1.0}, {1.0}, {0.5});
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = sample(lap, r);
    s1 += v;
    s2 += v * v;
  }
  const double mean = s1 / n;
  CHECK(std::abs(mean - 1.0) < 4.0 * std::sqrt(0.5 / n));
  CHECK(std::abs((s2 / n - mean * mean) - 0.5) < 0.02);
}
