#ifndef BILEVEL_RL_TANK_HPP
#define BILEVEL_RL_TANK_HPP

#include "bilevel_rl/environment.hpp"

namespace bilevel_rl {

/// Buffer-tank design: sinusoidal inlet, valve-proportional outlet, setpoint
/// V_SP = f_nom + f_dev. The capacity constraint V_SP <= v_tank belongs to
/// the design problem, not the constructor.
struct TankDesign {
  double v_tank = 9.0;  // m^3
  double f_nom = 4.0;   // m^3/s
  double f_dev = 2.0;   // m^3/s
  double v0 = 6.0;      // m^3

  double setpoint() const { return f_nom + f_dev; }
};

/// State [V]; control [valve in 0..1]; obs [F_in_t, V_SP, V_meas_t, V_meas_{t-1}].
/// Only the volume signal is noisy. The inlet completes one full period over
/// t_final = 1.
class TankEnv final : public Environment {
 public:
  TankEnv(TankDesign design, TimeGrid grid);

  int state_dim() const override { return 1; }
  int obs_dim() const override { return 4; }
  int n_controls() const override { return 1; }
  const TimeGrid& grid() const override { return grid_; }
  std::vector<double> action_low() const override { return {0.0}; }
  std::vector<double> action_high() const override { return {1.0}; }

  std::vector<double> initial_state() const override { return {design_.v0}; }
  std::vector<double> step(std::span<const double> state, std::span<const double> control,
                           int t_index) const override;
  double reward(std::span<const double> next_state) const override;
  Observation observe(std::span<const double> state, std::span<const double> prev_measured,
                      int t_index, double noise_pct, RngStream* rng) const override;
  std::vector<double> disturbances(int t_index) const override;

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<TankEnv>(*this);
  }

  double inflow(double tau) const;
  const TankDesign& design() const { return design_; }

 private:
  TankDesign design_;
  TimeGrid grid_;
};

}  // namespace bilevel_rl

#endif
