#include "bilevel_rl/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bilevel_rl/errors.hpp"

namespace bilevel_rl {

double Trajectory::total_return(double gamma) const {
  double g = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) g = rewards[t] + gamma * g;
  return g;
}

std::vector<double> compute_returns(std::span<const double> rewards, double gamma) {
  if (gamma < 0.0 || gamma > 1.0) throw ContractError("compute_returns: gamma must be in [0,1]");
  std::vector<double> g(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

std::vector<double> PolicyController::act(std::span<const double> obs, int /*t_index*/,
                                          RngStream& rng, std::vector<double>* raw_out,
                                          double* log_prob_out) {
  const std::vector<double> normed = stats_.normalize(obs);
  const ControlDistribution dist = net_.forward(normed);
  std::vector<double> raw, applied;
  if (mode_ == RolloutMode::Stochastic) {
    applied = net_.sample(dist, rng, &raw);
  } else {
    raw = dist.mean;
    applied = dist.mean;  // already inside the actuator box
  }
  if (raw_out) *raw_out = raw;
  if (log_prob_out) *log_prob_out = log_prob(dist, raw);
  return applied;
}

double PdController::act_on_error(double error, double prev_error, double dt) const {
  if (!(dt > 0.0)) throw ContractError("pd_act: dt must be positive");
  const double u = kp_ * error + kd_ * (error - prev_error) / dt;
  return std::min(std::max(u, u_min_), u_max_);
}

std::vector<double> PdController::act(std::span<const double> obs, int /*t_index*/,
                                      RngStream& /*rng*/, std::vector<double>* raw_out,
                                      double* log_prob_out) {
  const double setpoint = setpoint_index_ >= 0 ? obs[setpoint_index_] : setpoint_value_;
  const double error = obs[value_index_] - setpoint;
  const double prev = has_prev_ ? prev_error_ : error;
  const double u = act_on_error(error, prev, dt_);
  prev_error_ = error;
  has_prev_ = true;
  if (raw_out) *raw_out = {u};
  if (log_prob_out) *log_prob_out = 0.0;
  return {u};
}

Trajectory rollout(const Environment& env, Controller& controller, double noise_pct,
                   RngStream rng) {
  const int n = env.grid().n_steps;
  Trajectory traj;
  traj.states.reserve(n + 1);
  traj.observations.reserve(n);
  traj.raw_actions.reserve(n);
  traj.applied_actions.reserve(n);
  traj.rewards.reserve(n);
  traj.log_probs.reserve(n);

  controller.reset();
  std::vector<double> state = env.initial_state();
  traj.states.push_back(state);
  std::vector<double> measured;  // empty: first observation pads with itself
  for (int t = 0; t < n; ++t) {
    Observation o = env.observe(state, measured, t, noise_pct, &rng);
    measured = std::move(o.measured);

    std::vector<double> raw;
    double lp = 0.0;
    std::vector<double> u = controller.act(o.obs, t, rng, &raw, &lp);
    u = [&] {
      std::vector<double> lo = env.action_low(), hi = env.action_high();
      for (std::size_t i = 0; i < u.size(); ++i)
        u[i] = std::min(std::max(u[i], lo[i]), hi[i]);
      return u;
    }();

    std::vector<double> next;
    try {
      next = env.step(state, u, t);
    } catch (const IntegrationError& e) {
      throw IntegrationError(std::string(e.what()) + " (episode aborted)");
    }
    traj.observations.push_back(std::move(o.obs));
    traj.raw_actions.push_back(std::move(raw));
    traj.applied_actions.push_back(u);
    traj.rewards.push_back(env.reward(next));
    traj.log_probs.push_back(lp);
    traj.states.push_back(next);
    state = std::move(next);
  }
  return traj;
}

std::string trajectory_csv(const Environment& env, const Trajectory& traj) {
  std::ostringstream out;
  out.precision(17);
  out << "t";
  for (int i = 0; i < env.state_dim(); ++i) out << ",state_" << i;
  for (int i = 0; i < env.obs_dim(); ++i) out << ",obs_" << i;
  for (int i = 0; i < env.n_controls(); ++i) out << ",u_" << i;
  out << ",reward\r\n";
  const std::size_t n = traj.rewards.size();
  for (std::size_t t = 0; t <= n; ++t) {
    out << t;
    for (double v : traj.states[t]) out << ',' << v;
    if (t < n) {
      for (double v : traj.observations[t]) out << ',' << v;
      for (double v : traj.applied_actions[t]) out << ',' << v;
      out << ',' << traj.rewards[t];
    } else {
      const int blanks = env.obs_dim() + env.n_controls() + 1;
      for (int i = 0; i < blanks; ++i) out << ',';
    }
    out << "\r\n";
  }
  return out.str();
}

}  // namespace bilevel_rl
