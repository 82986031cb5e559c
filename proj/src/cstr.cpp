#include "bilevel_rl/cstr.hpp"

#include <cmath>
#include <numbers>

#include "bilevel_rl/errors.hpp"

namespace bilevel_rl {

double CstrParams::arrhenius(double temperature) const {
  return k0 * std::exp(-ea / (r_gas * temperature));
}

std::vector<std::uint8_t> CstrDesign::prefix_schedule(int k, int n_steps) {
  std::vector<std::uint8_t> y(n_steps, 0);
  for (int t = 0; t < k && t < n_steps; ++t) y[t] = 1;
  return y;
}

CstrEnv::CstrEnv(CstrDesign design, CstrParams params, TimeGrid grid)
    : design_(std::move(design)), params_(params), grid_(grid) {
  if (!(design_.v > 0.0)) throw ContractError("CstrDesign: volume must be positive");
  if (design_.m_dev > design_.m_nom)
    throw ContractError("CstrDesign: m_dev must not exceed m_nom");
  if (design_.ca0_dev > design_.ca0_nom)
    throw ContractError("CstrDesign: ca0_dev must not exceed ca0_nom");
  if (!design_.y_schedule.empty() &&
      design_.y_schedule.size() != static_cast<std::size_t>(grid_.n_steps))
    throw ContractError("CstrDesign: y_schedule length must equal n_steps");
  for (std::uint8_t y : design_.y_schedule)
    if (y != 0 && !design_.y_exists)
      throw ContractError("CstrDesign: Y_{S,t} <= Y_{S,f} violated");
}

double CstrEnv::feed_concentration(double tau) const {
  // freq = 100/(2*pi): one full period over 100 time units.
  return design_.ca0_nom +
         design_.ca0_dev * std::sin(2.0 * std::numbers::pi * tau / 100.0);
}

double CstrEnv::mass_flow(double tau, int t_index) const {
  const double gate = design_.settling_active(t_index) ? 0.0 : 1.0;
  return design_.m_nom +
         design_.m_dev * gate * std::sin(2.0 * std::numbers::pi * tau / 100.0);
}

std::vector<double> CstrEnv::step(std::span<const double> state,
                                  std::span<const double> control, int t_index) const {
  const double th = std::min(std::max(control[0], params_.th_min), params_.th_max);
  const double dt = grid_.dt() / grid_.substeps;
  std::vector<double> x(state.begin(), state.end());
  double tau = t_index * grid_.dt();
  const auto f = [&](std::span<const double> s, double t) {
    const double ca = s[0], temp = s[1];
    const double m = mass_flow(t, t_index);
    const double ca0 = feed_concentration(t);
    const double rate = params_.arrhenius(temp) * ca;
    const double dca = m / (params_.rho * design_.v) * (ca0 - ca) - rate;
    const double dtemp = (m * params_.cp * (params_.t0 - temp) +
                          params_.ua * (th - temp) +
                          design_.v * params_.dh_rxn * rate) /
                         (design_.v * params_.rho * params_.cp);
    return std::vector<double>{dca, dtemp};
  };
  for (int s = 0; s < grid_.substeps; ++s) {
    try {
      x = rk4_step(f, x, tau, dt);
    } catch (const IntegrationError&) {
      throw IntegrationError("cstr_step: non-finite state at step " +
                             std::to_string(t_index));
    }
    tau += dt;
  }
  if (x[0] < 0.0) {  // concentration floor
    x[0] = 0.0;
    note_floor_event();
  }
  return x;
}

double CstrEnv::reward(std::span<const double> next_state) const {
  const double ca = next_state[0], temp = next_state[1];
  return -(ca - kCaSetpoint) - 100.0 * std::max(0.0, temp - params_.t_max);
}

Observation CstrEnv::observe(std::span<const double> state,
                             std::span<const double> prev_measured, int t_index,
                             double noise_pct, RngStream* rng) const {
  double ca_meas = state[0];
  double t_meas = state[1];
  if (noise_pct > 0.0 && rng) {
    ca_meas += noise_pct / 100.0 * state[0] * rng->normal();
    t_meas += noise_pct / 100.0 * state[1] * rng->normal();
  }
  const double ca_prev = prev_measured.empty() ? ca_meas : prev_measured[0];
  Observation o;
  o.obs = {ca_meas,   ca_prev, t_meas, design_.v, feed_concentration(t_index * grid_.dt()),
           kCaSetpoint};
  o.measured = {ca_meas, t_meas};
  return o;
}

std::vector<double> CstrEnv::disturbances(int t_index) const {
  const double tau = t_index * grid_.dt();
  return {mass_flow(tau, t_index), feed_concentration(tau)};
}

}  // namespace bilevel_rl
