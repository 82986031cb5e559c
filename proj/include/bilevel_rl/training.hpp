#ifndef BILEVEL_RL_TRAINING_HPP
#define BILEVEL_RL_TRAINING_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bilevel_rl/environment.hpp"
#include "bilevel_rl/optim.hpp"
#include "bilevel_rl/policy.hpp"
#include "bilevel_rl/rollout.hpp"

namespace bilevel_rl {

/// Builds the environment for episode k of epoch m; rng is the stream for
/// per-episode design sampling.
using EpisodeFactory =
    std::function<std::unique_ptr<Environment>(int epoch, int episode, RngStream& rng)>;

/// Demonstration pairs for behavioral cloning.
struct Demos {
  std::vector<std::vector<double>> observations;
  std::vector<std::vector<double>> actions;
};

/// The demonstrator acts on clean measurements while the logged observations
/// carry the configured measurement noise, so the cloning regression learns
/// the conditional mean of the demonstration given what the policy will
/// actually see.
Demos generate_demos(const EpisodeFactory& factory, Controller& demonstrator,
                     int n_episodes, double noise_pct, std::uint64_t seed);

/// Supervised pre-training: fits the policy mean to the demo actions with a
/// full-batch MSE/Adam loop. Observations are normalized with the supplied
/// frozen stats. Returns the loss curve (one entry per iteration).
std::vector<double> pretrain(PolicyNetwork& net, const ObsStats& stats, const Demos& demos,
                             int n_iter, double lr);

struct ReinforceUpdate {
  double baseline = 0.0;
  double grad_norm = 0.0;
  bool applied = false;             // false when the estimate was non-finite
  std::vector<double> estimate;     // the batch policy-gradient estimate
};

/// Computes the batch estimate (1/K) sum_k (J_k - b) * sum_t grad log pi and,
/// through the optimizer, takes one ascent step. b is the batch-mean return.
ReinforceUpdate reinforce_update(PolicyNetwork& net, const ObsStats& stats,
                                 std::span<const Trajectory> batch, double gamma,
                                 Adam& adam);

/// Estimate only, no parameter update; shared by reinforce_update and the
/// estimator-sanity tests.
ReinforceUpdate reinforce_estimate(const PolicyNetwork& net, const ObsStats& stats,
                                   std::span<const Trajectory> batch, double gamma);

struct EpochRecord {
  int epoch = 0;
  double mean_return = 0.0;
  double baseline = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
  int skipped_updates = 0;

  std::string csv() const;  // epoch, mean_return, baseline, lr, grad_norm
};

struct TrainOptions {
  int n_epochs = 1000;
  int n_episodes = 20;  // K
  double gamma = 1.0;
  LrSchedule schedule{1e-3, 0.99, 500};
  double noise_pct = 0.0;  // measurement noise during training rollouts
  std::uint64_t seed = 0;
};

/// Reinforce with baseline and decayed learning rate. Episodes of one epoch
/// run on worker threads; per-episode RNG streams are keyed by
/// (seed, epoch, episode) and the batch reduction runs in episode order, so
/// the result does not depend on the worker count.
TrainReport train(const EpisodeFactory& factory, PolicyNetwork& net, const ObsStats& stats,
                  const TrainOptions& opts);

/// Runs fn(0..n-1) on up to worker_count() threads, static interleaved split.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace bilevel_rl

#endif
