#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rnade/baselines.hpp"
#include "rnade/errors.hpp"
#include "rnade/training.hpp"

using namespace rnade;

namespace {

Dataset normal_1d(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  Matrix m(static_cast<Eigen::Index>(n), 1);
  for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, 0) = g(rng);
  return make_dataset(std::move(m));
}

Dataset parabola(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  Matrix m(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    m(i, 0) = g(rng);
    m(i, 1) = m(i, 0) * m(i, 0) + 0.1 * g(rng);
  }
  return make_dataset(std::move(m));
}

TrainConfig small_config() {
  TrainConfig c;
  c.H = 6;
  c.K = 2;
  c.lr0 = 0.02;
  c.epochs = 4;
  c.minibatch_size = 10;
  c.minibatches_per_epoch = 5;
  c.seed = 17;
  return c;
}

bool same_params(const RnadeParams& a, const RnadeParams& b) {
  bool same = true;
  zip_tensors(a, b, [&](std::string_view, const auto& x, const auto& y) { same = same && x == y; });
  return same;
}

double max_abs_diff(const TensorSet& a, const TensorSet& b) {
  double m = 0.0;
  zip_tensors(a, b, [&](std::string_view, const auto& x, const auto& y) {
    if (x.size() > 0) m = std::max(m, (x - y).cwiseAbs().maxCoeff());
  });
  return m;
}

}  // namespace

TEST_CASE("linear learning-rate schedule") {
  CHECK(lr_schedule(0.1, 100, 0) == 0.1);
  CHECK(lr_schedule(0.1, 100, 100) == 0.0);
  CHECK(lr_schedule(0.1, 100, 50) == doctest::Approx(0.05));
  CHECK_THROWS_AS(lr_schedule(0.1, 100, 101), ValidationError);
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.minibatch_size = 1000;
  CHECK_THROWS_AS(sgd_train(parabola(50, 1), nullptr, c), ConfigError);
  c = small_config();
  c.ordering = {0, 0};
  CHECK_THROWS_AS(sgd_train(parabola(50, 1), nullptr, c), ConfigError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto c = small_config();
  c.lr0 = 0.0;
  const auto data = parabola(100, 2);
  const auto init = init_params(2, c.H, c.K, c.family, c.activation, c.seed);
  const auto r = sgd_train(data, nullptr, c);
  CHECK(same_params(r.params, init));
  CHECK(r.trace.epochs() == c.epochs);
}

TEST_CASE("single update equals vanilla SGD") {
  auto c = small_config();
  c.mean_grad_scaling = false;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  c.epochs = 1;
  c.minibatches_per_epoch = 1;
  c.minibatch_size = 30;
  c.lr0 = 0.05;
  const auto data = parabola(30, 3);
  const auto init = init_params(2, c.H, c.K, c.family, c.activation, c.seed);
  auto expected = init;
  const auto o = Ordering::identity(2);
  auto mean_grad = ParamGradients::zeros_like(init);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto g = gradients(init, data.row(i), o);
    zip_tensors(mean_grad, g.grads, [](std::string_view, auto& acc, const auto& x) { acc += x / 30.0; });
  }
  TensorSet& e = expected;
  zip_tensors(e, mean_grad, [&](std::string_view, auto& p, const auto& g) { p += c.lr0 * g; });

  const auto r = sgd_train(data, nullptr, c);
  CHECK(max_abs_diff(r.params, expected) < 1e-12);
  CHECK_FALSE(same_params(r.params, init));
}

TEST_CASE("weight decay touches only W") {
  const auto init = init_params(4, 5, 2, Family::MoG, Activation::RescaledReLU, 3);
  auto params = init;
  auto grad = ParamGradients::zeros_like(params);
  auto velocity = ParamGradients::zeros_like(params);
  sgd_update(params, grad, velocity, 0.5, 0.0, 0.1);
  CHECK(((params.W - 0.95 * init.W).cwiseAbs().maxCoeff() < 1e-15));
  CHECK(params.W != init.W);
  auto without_w = [](RnadeParams p) {
    p.W.setZero();
    return p;
  };
  CHECK(same_params(without_w(params), without_w(init)));
}

TEST_CASE("heavy-ball momentum accumulates velocity") {
  auto params = init_params(3, 2, 1, Family::MoG, Activation::RescaledReLU, 1);
  const auto init = params;
  auto grad = ParamGradients::zeros_like(params);
  auto velocity = ParamGradients::zeros_like(params);
  grad.c.setOnes();
  sgd_update(params, grad, velocity, 0.1, 0.9, 0.0);
  sgd_update(params, grad, velocity, 0.1, 0.9, 0.0);
  // v1 = 0.1, v2 = 0.09 + 0.1
  CHECK((params.c - init.c).cwiseAbs().maxCoeff() == doctest::Approx(0.29));
}

TEST_CASE("momentum is inactive during the first epoch") {
  const auto data = parabola(200, 4);
  auto with = small_config();
  auto without = small_config();
  without.momentum = 0.0;
  const auto a = sgd_train(data, nullptr, with);
  const auto b = sgd_train(data, nullptr, without);
  CHECK(a.trace.train_ll[0] == b.trace.train_ll[0]);
  CHECK(a.trace.train_ll[1] != b.trace.train_ll[1]);
}

TEST_CASE("training is deterministic given the seed") {
  const auto data = parabola(200, 5);
  const auto valid = parabola(50, 6);
  const auto a = sgd_train(data, &valid, small_config());
  const auto b = sgd_train(data, &valid, small_config());
  CHECK(same_params(a.params, b.params));
  CHECK(a.trace.train_ll == b.trace.train_ll);
  auto other = small_config();
  other.seed = 18;
  CHECK_FALSE(same_params(sgd_train(data, &valid, other).params, a.params));
}

TEST_CASE("trace and early-stop bookkeeping") {
  const auto data = parabola(300, 7);
  const auto valid = parabola(100, 8);
  auto c = small_config();
  c.epochs = 6;
  const auto r = sgd_train(data, &valid, c);
  CHECK(r.trace.train_ll.size() == 6);
  CHECK(r.trace.valid_ll.size() == 6);
  CHECK(r.trace.lr.size() == 6);
  CHECK(r.trace.seconds.size() == 6);
  CHECK(r.trace.lr[0] == c.lr0);
  CHECK(r.trace.lr[3] == doctest::Approx(c.lr0 * 0.5));
  REQUIRE(r.early_stop.best_epoch >= 1);
  REQUIRE(r.early_stop.best_epoch <= 6);
  CHECK(r.early_stop.best_validation_ll == r.trace.valid_ll[r.early_stop.best_epoch - 1]);
  CHECK(r.early_stop.train_ll_at_best_validation == r.trace.train_ll[r.early_stop.best_epoch - 1]);
  CHECK(mean_log_likelihood(r.params, valid, Ordering::identity(2)) == r.early_stop.best_validation_ll);
}

TEST_CASE("early-stopped final training") {
  const auto data = parabola(300, 9);
  auto c = small_config();
  c.epochs = 5;
  EarlyStopState low;
  low.train_ll_at_best_validation = -std::numeric_limits<double>::infinity();
  const auto first = early_stopped_final_train(data, low, c);
  CHECK(first.stopped_epoch == 1);
  CHECK(first.threshold_reached);

  EarlyStopState high;
  high.train_ll_at_best_validation = std::numeric_limits<double>::infinity();
  const auto all = early_stopped_final_train(data, high, c);
  CHECK(all.stopped_epoch == 5);
  CHECK_FALSE(all.threshold_reached);
  CHECK(same_params(all.params, sgd_train(data, nullptr, c).params));

  const auto valid = parabola(100, 10);
  const auto run = sgd_train(data, &valid, c);
  Dataset merged = data;
  merged.values.conservativeResize(400, 2);
  merged.values.bottomRows(100) = valid.values;
  const auto replay = early_stopped_final_train(merged, run.early_stop, c);
  CHECK(replay.stopped_epoch <= run.trace.epochs());
}

TEST_CASE("non-finite data aborts with location") {
  auto data = parabola(20, 11);
  data.values(3, 1) = 1e300;
  auto c = small_config();
  c.minibatch_size = 20;
  c.minibatches_per_epoch = 1;
  try {
    sgd_train(data, nullptr, c);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}

TEST_CASE("one-dimensional standard normal is recovered") {
  const auto data = normal_1d(4000, 12);
  TrainConfig c;
  c.H = 10;
  c.K = 1;
  c.lr0 = 0.05;
  c.epochs = 50;
  c.minibatch_size = 25;
  c.minibatches_per_epoch = 40;
  c.seed = 3;
  const auto r = sgd_train(data, nullptr, c);
  const auto m = conditional_params(r.params, {}, 0);
  CHECK(std::abs(m.means[0]) < 0.05);
  CHECK(std::abs(m.scales[0] - 1.0) < 0.05);
}

TEST_CASE("nonlinear dependency beats a full Gaussian") {
  const auto raw_train = parabola(3000, 13);
  const auto raw_test = parabola(1000, 14);
  const auto stats = compute_stats(raw_train);
  const auto train = standardize(raw_train, stats);
  const auto test = standardize(raw_test, stats);
  TrainConfig c;
  c.H = 20;
  c.K = 5;
  c.lr0 = 0.02;
  c.epochs = 60;
  c.minibatch_size = 25;
  c.minibatches_per_epoch = 100;
  c.seed = 5;
  const auto r = sgd_train(train, nullptr, c);
  const double rnade_ll = mean_log_likelihood(r.params, test, Ordering::identity(2));
  const double gauss_ll = mean_log_likelihood(fit_gaussian_mle(train), test);
  MESSAGE("rnade " << rnade_ll << " gaussian " << gauss_ll);
  CHECK(rnade_ll >= gauss_ll + 0.3);
}
