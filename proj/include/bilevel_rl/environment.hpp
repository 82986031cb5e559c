#ifndef BILEVEL_RL_ENVIRONMENT_HPP
#define BILEVEL_RL_ENVIRONMENT_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bilevel_rl/rng.hpp"

namespace bilevel_rl {

struct TimeGrid {
  double t_final = 1.0;
  int n_steps = 100;
  int substeps = 1;

  TimeGrid() = default;
  TimeGrid(double t_final_, int n_steps_, int substeps_);
  double dt() const { return t_final / n_steps; }
};

/// One classical RK4 step of dx/dt = f(x, t). Throws IntegrationError when a
/// non-finite state component appears.
std::vector<double> rk4_step(
    const std::function<std::vector<double>(std::span<const double>, double)>& f,
    std::span<const double> x, double t, double dt);

struct StepResult {
  std::vector<double> next_state;
  std::vector<double> observation;
  double reward = 0.0;
  std::vector<double> info;  // disturbance values at the interval start
};

struct Observation {
  std::vector<double> obs;
  std::vector<double> measured;  // becomes next step's "previous" measurement
};

/// Design-parameterized discrete-time environment over an RK4 grid. Cheap
/// value objects: a rollout owns its instance and RNG stream, so episodes
/// run in parallel without sharing.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int state_dim() const = 0;
  virtual int obs_dim() const = 0;
  virtual int n_controls() const = 0;
  virtual const TimeGrid& grid() const = 0;
  virtual std::vector<double> action_low() const = 0;
  virtual std::vector<double> action_high() const = 0;

  virtual std::vector<double> initial_state() const = 0;

  /// Integrates one control interval [t*dt, (t+1)*dt] under a piecewise
  /// constant control (already clipped to the actuator box).
  virtual std::vector<double> step(std::span<const double> state,
                                   std::span<const double> control, int t_index) const = 0;

  virtual double reward(std::span<const double> next_state) const = 0;

  /// Controller-visible observation at step t. noise_pct is the measurement
  /// noise in percent; rng may be null when noise_pct is zero.
  virtual Observation observe(std::span<const double> state,
                              std::span<const double> prev_measured, int t_index,
                              double noise_pct, RngStream* rng) const = 0;

  /// Disturbance values at the start of interval t, for logging.
  virtual std::vector<double> disturbances(int t_index) const = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;
};

// Process-wide tally of non-negativity floor events (volume/concentration
// clamped back to 0 on integrator undershoot); stages report it when nonzero.
void note_floor_event();
std::uint64_t floor_event_count();

}  // namespace bilevel_rl

#endif
