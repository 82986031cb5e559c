#include "bilevel_rl/training.hpp"

#include <chrono>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "bilevel_rl/errors.hpp"
#include "bilevel_rl/io.hpp"

namespace bilevel_rl {

void parallel_for(int n, const std::function<void(int)>& fn) {
  const int workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

Demos generate_demos(const EpisodeFactory& factory, Controller& demonstrator,
                     int n_episodes, double noise_pct, std::uint64_t seed) {
  if (n_episodes < 1) throw ContractError("generate_demos: need at least one episode");
  Demos demos;
  for (int k = 0; k < n_episodes; ++k) {
    RngStream design_rng(seed, rng_domain::kSampleDesign, static_cast<std::uint64_t>(k));
    const auto env = factory(0, k, design_rng);
    RngStream rng(seed, rng_domain::kDemo, static_cast<std::uint64_t>(k));

    demonstrator.reset();
    std::vector<double> state = env->initial_state();
    std::vector<double> clean_meas, noisy_meas;
    for (int t = 0; t < env->grid().n_steps; ++t) {
      const Observation clean = env->observe(state, clean_meas, t, 0.0, nullptr);
      Observation noisy = env->observe(state, noisy_meas, t, noise_pct, &rng);
      clean_meas = clean.measured;
      noisy_meas = std::move(noisy.measured);

      std::vector<double> u = demonstrator.act(clean.obs, t, rng, nullptr, nullptr);
      const std::vector<double> lo = env->action_low(), hi = env->action_high();
      for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = std::min(std::max(u[i], lo[i]), hi[i]);

      demos.observations.push_back(std::move(noisy.obs));
      demos.actions.push_back(u);
      state = env->step(state, u, t);
    }
  }
  return demos;
}

std::vector<double> pretrain(PolicyNetwork& net, const ObsStats& stats, const Demos& demos,
                             int n_iter, double lr) {
  if (demos.observations.empty()) throw ContractError("pretrain: empty demonstrations");
  if (demos.observations.size() != demos.actions.size())
    throw ContractError("pretrain: observation/action count mismatch");

  std::vector<std::vector<double>> normed(demos.observations.size());
  for (std::size_t i = 0; i < demos.observations.size(); ++i)
    normed[i] = stats.normalize(demos.observations[i]);

  const std::size_t n_samples = normed.size();
  const int n_controls = net.n_controls();
  const double denom = static_cast<double>(n_samples * n_controls);

  Adam adam(net.n_params(), lr);
  std::vector<double> losses;
  losses.reserve(n_iter);
  std::vector<double> grad(net.n_params());
  for (int iter = 0; iter < n_iter; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    std::vector<double> d_mean(n_controls);
    for (std::size_t i = 0; i < n_samples; ++i) {
      const ControlDistribution dist = net.forward(normed[i]);
      for (int c = 0; c < n_controls; ++c) {
        const double d = dist.mean[c] - demos.actions[i][c];
        loss += d * d;
        d_mean[c] = 2.0 * d / denom;
      }
      const std::vector<double> g = net.backprop(normed[i], d_mean, {});
      for (std::size_t p = 0; p < grad.size(); ++p) grad[p] += g[p];
    }
    losses.push_back(loss / denom);
    adam.step(net.params(), grad, StepDirection::Descend);
  }
  return losses;
}

ReinforceUpdate reinforce_estimate(const PolicyNetwork& net, const ObsStats& stats,
                                   std::span<const Trajectory> batch, double gamma) {
  if (batch.empty()) throw ContractError("reinforce: need at least one trajectory");
  const std::size_t k_count = batch.size();

  std::vector<double> returns(k_count);
  for (std::size_t k = 0; k < k_count; ++k) returns[k] = batch[k].total_return(gamma);
  double baseline = 0.0;
  for (double j : returns) baseline += j;
  baseline /= static_cast<double>(k_count);

  // Per-episode score sums can run on workers; the weighted reduction below
  // stays in episode order.
  std::vector<std::vector<double>> scores(k_count);
  parallel_for(static_cast<int>(k_count), [&](int k) {
    std::vector<double> score(net.n_params(), 0.0);
    const Trajectory& traj = batch[k];
    for (std::size_t t = 0; t < traj.observations.size(); ++t) {
      const std::vector<double> normed = stats.normalize(traj.observations[t]);
      const std::vector<double> g = net.grad_log_prob(normed, traj.raw_actions[t]);
      for (std::size_t p = 0; p < score.size(); ++p) score[p] += g[p];
    }
    scores[k] = std::move(score);
  });

  ReinforceUpdate out;
  out.baseline = baseline;
  out.estimate.assign(net.n_params(), 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    const double w = (returns[k] - baseline) / static_cast<double>(k_count);
    for (std::size_t p = 0; p < out.estimate.size(); ++p)
      out.estimate[p] += w * scores[k][p];
  }
  out.grad_norm = l2_norm(out.estimate);
  return out;
}

ReinforceUpdate reinforce_update(PolicyNetwork& net, const ObsStats& stats,
                                 std::span<const Trajectory> batch, double gamma,
                                 Adam& adam) {
  ReinforceUpdate up = reinforce_estimate(net, stats, batch, gamma);
  if (!std::isfinite(up.grad_norm)) {
    up.applied = false;  // skip the update, keep training alive
    return up;
  }
  adam.step(net.params(), up.estimate, StepDirection::Ascend);
  up.applied = true;
  return up;
}

std::string TrainReport::csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,mean_return,baseline,lr,grad_norm\r\n";
  for (const auto& e : epochs)
    out << e.epoch << ',' << e.mean_return << ',' << e.baseline << ',' << e.lr << ','
        << e.grad_norm << "\r\n";
  return out.str();
}

TrainReport train(const EpisodeFactory& factory, PolicyNetwork& net, const ObsStats& stats,
                  const TrainOptions& opts) {
  if (opts.n_episodes < 1) throw ContractError("train: n_episodes must be >= 1");
  const auto t_start = std::chrono::steady_clock::now();

  TrainReport report;
  report.epochs.reserve(opts.n_epochs);
  Adam adam(net.n_params(), opts.schedule.alpha0);

  std::vector<Trajectory> batch(opts.n_episodes);
  for (int m = 0; m < opts.n_epochs; ++m) {
    const double lr = opts.schedule.at(m);
    adam.set_lr(lr);

    parallel_for(opts.n_episodes, [&](int k) {
      RngStream design_rng(opts.seed, rng_domain::kSampleDesign,
                           static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(k));
      const auto env = factory(m, k, design_rng);
      PolicyController controller(net, stats, RolloutMode::Stochastic);
      batch[k] = rollout(*env, controller, opts.noise_pct,
                         RngStream(opts.seed, rng_domain::kTrain,
                                   static_cast<std::uint64_t>(m),
                                   static_cast<std::uint64_t>(k)));
    });

    const ReinforceUpdate up = reinforce_update(net, stats, batch, opts.gamma, adam);
    if (!up.applied) ++report.skipped_updates;

    EpochRecord rec;
    rec.epoch = m;
    rec.baseline = up.baseline;
    rec.mean_return = up.baseline;  // the baseline is the batch-mean return
    rec.lr = lr;
    rec.grad_norm = up.grad_norm;
    report.epochs.push_back(rec);
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

}  // namespace bilevel_rl
