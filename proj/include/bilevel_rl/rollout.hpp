#ifndef BILEVEL_RL_ROLLOUT_HPP
#define BILEVEL_RL_ROLLOUT_HPP

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bilevel_rl/environment.hpp"
#include "bilevel_rl/policy.hpp"

namespace bilevel_rl {

/// One episode: n_steps entries per list, states has the extra initial entry.
/// raw_actions are the pre-clip Gaussian samples log_probs refer to;
/// applied_actions are what the environment received.
struct Trajectory {
  std::vector<std::vector<double>> states;        // n_steps + 1
  std::vector<std::vector<double>> observations;  // n_steps
  std::vector<std::vector<double>> raw_actions;
  std::vector<std::vector<double>> applied_actions;
  std::vector<double> rewards;    // rewards[t] = R_{t+1}
  std::vector<double> log_probs;

  double total_return(double gamma = 1.0) const;
};

/// Per-step returns G_t = R_{t+1} + gamma * G_{t+1}, terminal seeded at 0.
std::vector<double> compute_returns(std::span<const double> rewards, double gamma);

enum class RolloutMode { Stochastic, MeanAction };

class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset() {}
  /// Returns the applied (clipped) control; fills raw/log-prob records.
  virtual std::vector<double> act(std::span<const double> obs, int t_index, RngStream& rng,
                                  std::vector<double>* raw_out, double* log_prob_out) = 0;
};

/// Stochastic or mean-action wrapper around a trained policy.
class PolicyController final : public Controller {
 public:
  PolicyController(const PolicyNetwork& net, const ObsStats& stats, RolloutMode mode)
      : net_(net), stats_(stats), mode_(mode) {}
  std::vector<double> act(std::span<const double> obs, int t_index, RngStream& rng,
                          std::vector<double>* raw_out, double* log_prob_out) override;

 private:
  const PolicyNetwork& net_;
  const ObsStats& stats_;
  RolloutMode mode_;
};

/// u = kp*e + kd*(e - e_prev)/dt, clipped to the actuator range. The error is
/// (tracked measurement - setpoint); the tracked value is read from the
/// observation, the setpoint either from another observation entry or from a
/// fixed reference.
class PdController final : public Controller {
 public:
  PdController(double kp, double kd, int value_index, int setpoint_index, double dt,
               double u_min, double u_max)
      : kp_(kp), kd_(kd), value_index_(value_index), setpoint_index_(setpoint_index),
        dt_(dt), u_min_(u_min), u_max_(u_max) {}
  PdController(double kp, double kd, int value_index, double setpoint_value, double dt,
               double u_min, double u_max)
      : kp_(kp), kd_(kd), value_index_(value_index), setpoint_value_(setpoint_value),
        dt_(dt), u_min_(u_min), u_max_(u_max) {}

  void reset() override { has_prev_ = false; }
  std::vector<double> act(std::span<const double> obs, int t_index, RngStream& rng,
                          std::vector<double>* raw_out, double* log_prob_out) override;

  double act_on_error(double error, double prev_error, double dt) const;

 private:
  double kp_, kd_;
  int value_index_ = 0;
  int setpoint_index_ = -1;       // -1: use the fixed reference below
  double setpoint_value_ = 0.0;
  double dt_;
  double u_min_, u_max_;
  double prev_error_ = 0.0;
  bool has_prev_ = false;
};

/// Full episode under the given controller. noise_pct applies to the
/// environment's measured signals; pass 0 for noiseless evaluation.
Trajectory rollout(const Environment& env, Controller& controller, double noise_pct,
                   RngStream rng);

/// Header: t, state..., obs..., u..., reward. The initial state row leaves the
/// obs/control/reward fields empty.
std::string trajectory_csv(const Environment& env, const Trajectory& traj);

}  // namespace bilevel_rl

#endif
