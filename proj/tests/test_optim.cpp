#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "bilevel_rl/errors.hpp"
#include "bilevel_rl/optim.hpp"

using namespace bilevel_rl;

TEST_CASE("first adam step has magnitude ~lr for unit gradients") {
  const double lr = 0.37;
  Adam adam(4, lr);
  std::vector<double> params(4, 1.0);
  std::vector<double> grads(4, 1.0);
  adam.step(params, grads, StepDirection::Descend);
  for (double p : params) CHECK(p == doctest::Approx(1.0 - lr).epsilon(1e-6));
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  Adam adam(3, 1e-2);
  std::vector<double> params = {0.1, -0.2, 0.3};
  const std::vector<double> before = params;
  std::vector<double> grads(3, 0.0);
  adam.step(params, grads, StepDirection::Descend);
  CHECK(params == before);
}

TEST_CASE("adam matches an independently computed scalar recursion") {
  // Frozen from a hand recursion: lr=0.1, beta1=0.9, beta2=0.999, eps=1e-8,
  // theta0=0.5, gradients (1, -0.5, 0.25, 2, -1).
  const std::vector<double> grads = {1.0, -0.5, 0.25, 2.0, -1.0};
  const std::vector<double> expected = {0.400000001, 0.37336629737090316,
                                        0.3393233830648465, 0.27503419152588415,
                                        0.24691786291607576};
  Adam adam(1, 0.1);
  std::vector<double> theta = {0.5};
  for (std::size_t t = 0; t < grads.size(); ++t) {
    std::vector<double> g = {grads[t]};
    adam.step(theta, g, StepDirection::Descend);
    CHECK(theta[0] == doctest::Approx(expected[t]).epsilon(1e-12));
  }
}

TEST_CASE("ascend negates the step") {
  Adam down(1, 0.05), up(1, 0.05);
  std::vector<double> a = {0.0}, b = {0.0};
  std::vector<double> g = {2.0};
  down.step(a, g, StepDirection::Descend);
  up.step(b, g, StepDirection::Ascend);
  CHECK(a[0] == doctest::Approx(-b[0]).epsilon(1e-15));
}

TEST_CASE("non-finite gradients are rejected and params untouched") {
  Adam adam(2, 1e-3);
  std::vector<double> params = {1.0, 2.0};
  std::vector<double> grads = {1.0, std::nan("")};
  CHECK_THROWS_AS(adam.step(params, grads, StepDirection::Descend), ContractError);
  CHECK(params[0] == 1.0);
  CHECK(params[1] == 2.0);
}

TEST_CASE("constant-gradient step magnitude approaches lr") {
  Adam adam(1, 1e-2);
  std::vector<double> theta = {0.0};
  double prev = theta[0];
  double step = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> g = {3.7};
    adam.step(theta, g, StepDirection::Descend);
    step = std::abs(theta[0] - prev);
    prev = theta[0];
  }
  CHECK(step == doctest::Approx(1e-2).epsilon(1e-3));
}

TEST_CASE("lr schedule") {
  LrSchedule sched{1e-3, 0.99, 10};
  SUBCASE("constant before the decay start") {
    CHECK(sched.at(0) == 1e-3);
    CHECK(sched.at(5) == 1e-3);
    CHECK(sched.at(10) == 1e-3);
  }
  SUBCASE("one decay applied") { CHECK(sched.at(11) == doctest::Approx(9.9e-4)); }
  SUBCASE("decay of 1 is the identity") {
    LrSchedule flat{1e-3, 1.0, 0};
    CHECK(flat.at(1000) == 1e-3);
  }
  SUBCASE("monotone non-increasing") {
    double prev = sched.at(0);
    for (int m = 1; m < 100; ++m) {
      CHECK(sched.at(m) <= prev);
      prev = sched.at(m);
    }
  }
}

TEST_CASE("mse loss") {
  SUBCASE("zero at equality") {
    const std::vector<double> x = {0.5, -1.0};
    CHECK(mse_loss(x, x).loss == 0.0);
  }
  SUBCASE("arithmetic") {
    const std::vector<double> pred = {1.0, 1.0}, target = {0.0, 0.0};
    CHECK(mse_loss(pred, target).loss == doctest::Approx(1.0));
  }
  SUBCASE("empty input rejected") {
    const std::vector<double> empty;
    CHECK_THROWS_AS(mse_loss(empty, empty), ContractError);
  }
  SUBCASE("gradient matches finite differences") {
    std::vector<double> pred = {0.3, -0.7, 1.2};
    const std::vector<double> target = {0.1, 0.4, -0.9};
    const MseResult r = mse_loss(pred, target);
    const double h = 1e-7;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      std::vector<double> hi = pred, lo = pred;
      hi[i] += h;
      lo[i] -= h;
      const double fd = (mse_loss(hi, target).loss - mse_loss(lo, target).loss) / (2 * h);
      CHECK(r.grad[i] == doctest::Approx(fd).epsilon(1e-8));
    }
  }
}
