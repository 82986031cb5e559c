#include "bilevel_rl/tank.hpp"

#include <cmath>
#include <numbers>

#include "bilevel_rl/errors.hpp"

namespace bilevel_rl {

TankEnv::TankEnv(TankDesign design, TimeGrid grid) : design_(design), grid_(grid) {
  if (design_.v_tank < 0.0 || design_.f_nom < 0.0 || design_.f_dev < 0.0 || design_.v0 < 0.0)
    throw ContractError("TankDesign: fields must be non-negative");
}

double TankEnv::inflow(double tau) const {
  // freq = 1/(2*pi): one full period over the unit horizon.
  return design_.f_nom + design_.f_dev * std::sin(2.0 * std::numbers::pi * tau);
}

std::vector<double> TankEnv::step(std::span<const double> state,
                                  std::span<const double> control, int t_index) const {
  const double a = std::min(std::max(control[0], 0.0), 1.0);
  const double dt = grid_.dt() / grid_.substeps;
  std::vector<double> x(state.begin(), state.end());
  double tau = t_index * grid_.dt();
  const auto f = [&](std::span<const double> v, double t) {
    return std::vector<double>{inflow(t) - a * v[0]};
  };
  for (int s = 0; s < grid_.substeps; ++s) {
    try {
      x = rk4_step(f, x, tau, dt);
    } catch (const IntegrationError&) {
      throw IntegrationError("tank_step: non-finite volume at step " +
                             std::to_string(t_index));
    }
    tau += dt;
  }
  if (x[0] < 0.0) {  // physical floor on the rare undershoot
    x[0] = 0.0;
    note_floor_event();
  }
  return x;
}

double TankEnv::reward(std::span<const double> next_state) const {
  const double d = next_state[0] - design_.setpoint();
  return -10.0 * d * d;
}

Observation TankEnv::observe(std::span<const double> state,
                             std::span<const double> prev_measured, int t_index,
                             double noise_pct, RngStream* rng) const {
  double v_meas = state[0];
  if (noise_pct > 0.0 && rng) v_meas += noise_pct / 100.0 * state[0] * rng->normal();
  const double v_prev = prev_measured.empty() ? v_meas : prev_measured[0];
  Observation o;
  o.obs = {inflow(t_index * grid_.dt()), design_.setpoint(), v_meas, v_prev};
  o.measured = {v_meas};
  return o;
}

std::vector<double> TankEnv::disturbances(int t_index) const {
  return {inflow(t_index * grid_.dt())};
}

}  // namespace bilevel_rl
