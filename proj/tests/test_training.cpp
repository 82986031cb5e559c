#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "bilevel_rl/config.hpp"
#include "bilevel_rl/errors.hpp"
#include "bilevel_rl/pipeline.hpp"
#include "bilevel_rl/rollout.hpp"
#include "bilevel_rl/tank.hpp"
#include "bilevel_rl/training.hpp"

using namespace bilevel_rl;

namespace {

// One-step environment whose reward is -(u - target)^2; the canonical
// policy-gradient sanity check.
struct BanditEnv final : Environment {
  double target = 0.5;
  TimeGrid g{1.0, 1, 1};

  int state_dim() const override { return 1; }
  int obs_dim() const override { return 1; }
  int n_controls() const override { return 1; }
  const TimeGrid& grid() const override { return g; }
  std::vector<double> action_low() const override { return {-4.0}; }
  std::vector<double> action_high() const override { return {4.0}; }
  std::vector<double> initial_state() const override { return {0.0}; }
  std::vector<double> step(std::span<const double>, std::span<const double> u,
                           int) const override {
    return {u[0]};
  }
  double reward(std::span<const double> next) const override {
    const double d = next[0] - target;
    return -d * d;
  }
  Observation observe(std::span<const double>, std::span<const double>, int, double,
                      RngStream*) const override {
    return {{0.0}, {0.0}};
  }
  std::vector<double> disturbances(int) const override { return {}; }
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<BanditEnv>(*this);
  }
};

// Bandit policy: no hidden layers, sigma pinned at its floor (0.5), mean
// steered by the mean-head bias alone. Layout: mean w, mean b, std w, std b.
PolicyNetwork bandit_net(double mean_bias) {
  PolicyNetwork net(1, {}, 1, {-4.0}, {4.0}, /*std_floor=*/0.0625);  // floor = 0.5
  std::vector<double> theta = net.params();
  theta[1] = mean_bias;
  net.set_params(theta);
  return net;
}

constexpr int kMeanBiasIndex = 1;
constexpr double kHeadChain = 8.0 / 6.0;  // action range / 6 (ReLU6 rescale)

RunConfig tiny_tank_config(int n_epochs, std::uint64_t seed) {
  nlohmann::json j = {{"case", "tank"},
                      {"train",
                       {{"n_epochs", n_epochs},
                        {"episodes_per_epoch", 20},
                        {"seed", seed}}},
                      {"pretrain", {{"n_iter", 200}, {"n_demos", 8}}}};
  return validate_config(j);
}

}  // namespace

TEST_CASE("pd controller arithmetic") {
  PdController pd(1.0, 0.0, 0, 1, 0.01, -10.0, 10.0);
  SUBCASE("zero error gives zero output") { CHECK(pd.act_on_error(0.0, 0.0, 0.01) == 0.0); }
  SUBCASE("proportional term") { CHECK(pd.act_on_error(0.5, 0.5, 0.01) == doctest::Approx(0.5)); }
  SUBCASE("derivative term") {
    PdController kd_only(0.0, 1.0, 0, 1, 0.01, -100.0, 100.0);
    CHECK(kd_only.act_on_error(0.1, 0.0, 0.01) == doctest::Approx(10.0));
  }
  SUBCASE("output clipped to the actuator range") {
    PdController tight(1.0, 0.0, 0, 1, 0.01, 0.0, 1.0);
    CHECK(tight.act_on_error(5.0, 5.0, 0.01) == 1.0);
    CHECK(tight.act_on_error(-5.0, -5.0, 0.01) == 0.0);
  }
  SUBCASE("dt must be positive") {
    CHECK_THROWS_AS(pd.act_on_error(0.1, 0.0, 0.0), ContractError);
  }
}

TEST_CASE("pretraining a policy on its own outputs is a fixed point") {
  PolicyNetwork net(2, {{4, Activation::Tanh}}, 1, {0.0}, {1.0}, 0.01);
  net.init_params(3);
  const ObsStats stats = ObsStats::identity(2);

  Demos demos;
  RngStream rng(17);
  for (int i = 0; i < 32; ++i) {
    std::vector<double> obs = {rng.normal(), rng.normal()};
    demos.actions.push_back(net.forward(stats.normalize(obs)).mean);
    demos.observations.push_back(std::move(obs));
  }
  const std::vector<double> before = net.params();
  const std::vector<double> losses = pretrain(net, stats, demos, 50, 1e-3);
  for (double l : losses) CHECK(l == doctest::Approx(0.0).epsilon(1e-20));
  CHECK(net.params() == before);
}

TEST_CASE("pretraining recovers the least-squares line through two points") {
  // Linear mean head (wide bounds keep the clamp inactive): fitting
  // (x, u) = (1, 1), (3, 2) must recover u = 0.5 x + 0.5.
  PolicyNetwork net(1, {}, 1, {-50.0}, {50.0}, 0.01);
  std::vector<double> theta = net.params();
  net.set_params(theta);
  // Swap the mean head to a plain linear activation through serialization.
  nlohmann::json j = net.to_json();
  j["layers"][0]["activation"] = "linear";
  net = PolicyNetwork::from_json(j);

  Demos demos;
  demos.observations = {{1.0}, {3.0}};
  demos.actions = {{1.0}, {2.0}};
  const ObsStats stats = ObsStats::identity(1);
  const std::vector<double> losses = pretrain(net, stats, demos, 8000, 5e-3);
  CHECK(losses.back() < 1e-8);
  const double w = net.params()[0], b = net.params()[1];
  CHECK(w == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(b == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("pretraining on pd tank demos reduces the loss") {
  const RunConfig cfg = tiny_tank_config(1, 5);
  const EpisodeFactory factory = make_training_factory(cfg);
  const auto demo = make_demo_controller(cfg);
  const Demos demos = generate_demos(factory, *demo, 10, 2.0, 5);
  const ObsStats stats = ObsStats::from_samples(demos.observations);

  PolicyNetwork net = make_policy_network(cfg);
  net.init_params(5);
  const std::vector<double> losses = pretrain(net, stats, demos, 500, 1e-3);
  CHECK(losses.back() < losses.front());
  CHECK(losses.back() < 0.05);  // mean action lands near the demonstrator
}

TEST_CASE("empty demos are rejected") {
  PolicyNetwork net(1, {}, 1, {0.0}, {1.0}, 0.01);
  CHECK_THROWS_AS(pretrain(net, ObsStats::identity(1), Demos{}, 10, 1e-3), ContractError);
}

TEST_CASE("identical returns produce a zero update and the mean baseline") {
  PolicyNetwork net = bandit_net(3.0);
  const ObsStats stats = ObsStats::identity(1);
  BanditEnv env;
  PolicyController controller(net, stats, RolloutMode::Stochastic);

  std::vector<Trajectory> batch;
  for (int k = 0; k < 4; ++k) {
    Trajectory t = rollout(env, controller, 0.0, RngStream(100, 0, k));
    t.rewards = {2.5};  // forced identical returns
    batch.push_back(std::move(t));
  }
  const ReinforceUpdate up = reinforce_estimate(net, stats, batch, 1.0);
  CHECK(up.baseline == doctest::Approx(2.5));
  for (double g : up.estimate) CHECK(g == 0.0);
}

TEST_CASE("baseline is the batch-mean return") {
  PolicyNetwork net = bandit_net(3.0);
  const ObsStats stats = ObsStats::identity(1);
  BanditEnv env;
  PolicyController controller(net, stats, RolloutMode::Stochastic);
  std::vector<Trajectory> batch;
  const std::vector<double> forced = {1.0, 2.0, 3.0};
  for (int k = 0; k < 3; ++k) {
    Trajectory t = rollout(env, controller, 0.0, RngStream(101, 0, k));
    t.rewards = {forced[k]};
    batch.push_back(std::move(t));
  }
  CHECK(reinforce_estimate(net, stats, batch, 1.0).baseline == doctest::Approx(2.0));
}

TEST_CASE("constant reward shift leaves the estimate unchanged") {
  PolicyNetwork net = bandit_net(2.5);
  const ObsStats stats = ObsStats::identity(1);
  BanditEnv env;
  PolicyController controller(net, stats, RolloutMode::Stochastic);

  std::vector<Trajectory> batch;
  for (int k = 0; k < 8; ++k)
    batch.push_back(rollout(env, controller, 0.0, RngStream(7, 0, k)));
  const ReinforceUpdate base = reinforce_estimate(net, stats, batch, 1.0);

  std::vector<Trajectory> shifted = batch;
  for (auto& t : shifted)
    for (auto& r : t.rewards) r += 2.0;
  const ReinforceUpdate moved = reinforce_estimate(net, stats, shifted, 1.0);

  for (std::size_t p = 0; p < base.estimate.size(); ++p) {
    const double tol = 1e-12 * std::max(1.0, std::abs(base.estimate[p]));
    CHECK(std::abs(base.estimate[p] - moved.estimate[p]) <= tol);
  }
}

TEST_CASE("bandit estimator matches the analytic policy gradient") {
  // With sigma pinned at 0.5 and the mean-head bias b in (0, 6):
  //   mean = -4 + 8/6 relu6(b),  E[J] = -((mean - c)^2 + sigma^2)
  //   dE/db = -2 (mean - c) * 8/6.
  // The batch-mean baseline scales the estimator expectation by (1 - 1/K).
  const double c = 0.5;
  const int K = 8;
  const int batches = 4000;

  // Means stay >= 4 sigma inside the action box so clipping cannot bias the
  // comparison, and away from mean = c where the true gradient vanishes.
  const std::vector<double> bias_points = {1.6, 1.9, 2.2, 2.5, 2.8,
                                           3.9, 4.05, 4.2, 4.3, 4.4};
  const ObsStats stats = ObsStats::identity(1);
  BanditEnv env;
  env.target = c;

  for (std::size_t i = 0; i < bias_points.size(); ++i) {
    const PolicyNetwork net = bandit_net(bias_points[i]);
    const double mean = net.forward(std::vector<double>{0.0}).mean[0];
    const double analytic = -2.0 * (mean - c) * kHeadChain;
    const double expected = (1.0 - 1.0 / K) * analytic;

    PolicyController controller(net, stats, RolloutMode::Stochastic);
    double sum = 0.0, sum_sq = 0.0;
    std::vector<Trajectory> batch(K);
    for (int bidx = 0; bidx < batches; ++bidx) {
      for (int k = 0; k < K; ++k)
        batch[k] = rollout(env, controller, 0.0, RngStream(900 + i, bidx, k));
      const double g = reinforce_estimate(net, stats, batch, 1.0).estimate[kMeanBiasIndex];
      sum += g;
      sum_sq += g * g;
    }
    const double mean_g = sum / batches;
    const double se =
        std::sqrt(std::max(0.0, sum_sq / batches - mean_g * mean_g) / batches);

    CHECK(mean_g * analytic > 0.0);  // sign agreement
    CHECK(std::abs(mean_g - expected) <= 3.0 * se);
  }
}

TEST_CASE("train for zero epochs returns the policy unchanged") {
  const RunConfig cfg = tiny_tank_config(0, 11);
  PolicyNetwork net = make_policy_network(cfg);
  net.init_params(11);
  const std::vector<double> before = net.params();
  const ObsStats stats = ObsStats::identity(net.input_dim());
  const TrainReport report =
      train(make_training_factory(cfg), net, stats, make_train_options(cfg));
  CHECK(report.epochs.empty());
  CHECK(net.params() == before);
}

TEST_CASE("lr zero training is a no-op on the parameters") {
  RunConfig cfg = tiny_tank_config(3, 13);
  PolicyNetwork net = make_policy_network(cfg);
  net.init_params(13);
  const std::vector<double> before = net.params();
  TrainOptions opts = make_train_options(cfg);
  opts.schedule.alpha0 = 1e-300;  // effectively zero, keeps Adam's lr > 0 contract
  const ObsStats stats = ObsStats::identity(net.input_dim());
  train(make_training_factory(cfg), net, stats, opts);
  for (std::size_t p = 0; p < before.size(); ++p)
    CHECK(net.params()[p] == doctest::Approx(before[p]).epsilon(1e-9));
}

TEST_CASE("training is bitwise deterministic across thread counts") {
  const auto run_once = [](const char* threads) {
    setenv("BILEVEL_RL_THREADS", threads, 1);
    const RunConfig cfg = tiny_tank_config(5, 21);
    PolicyNetwork net = make_policy_network(cfg);
    net.init_params(21);
    const ObsStats stats = ObsStats::identity(net.input_dim());
    const TrainReport report =
        train(make_training_factory(cfg), net, stats, make_train_options(cfg));
    unsetenv("BILEVEL_RL_THREADS");
    return std::make_pair(report.csv(), net.params());
  };
  const auto [csv1, params1] = run_once("1");
  const auto [csv4, params4] = run_once("4");
  CHECK(csv1 == csv4);
  CHECK(params1 == params4);
}

TEST_CASE("tank training improves the mean return") {
  const RunConfig cfg = tiny_tank_config(300, 37);
  const EpisodeFactory factory = make_training_factory(cfg);
  const auto demo = make_demo_controller(cfg);
  const Demos demos =
      generate_demos(factory, *demo, cfg.pretrain.n_demos, cfg.train.noise_pct, 37);
  const ObsStats stats = ObsStats::from_samples(demos.observations);
  PolicyNetwork net = make_policy_network(cfg);
  net.init_params(37);
  pretrain(net, stats, demos, cfg.pretrain.n_iter, cfg.pretrain.lr);

  const TrainReport report = train(factory, net, stats, make_train_options(cfg));
  REQUIRE(report.epochs.size() == 300);
  // Average the first and last few epochs to smooth the sampling noise out
  // of the comparison while keeping it a strict improvement check.
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += report.epochs[i].mean_return / 10.0;
    tail += report.epochs[300 - 10 + i].mean_return / 10.0;
  }
  CHECK(tail > head);
  CHECK(report.epochs.back().mean_return > report.epochs.front().mean_return);
}
