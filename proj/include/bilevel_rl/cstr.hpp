#ifndef BILEVEL_RL_CSTR_HPP
#define BILEVEL_RL_CSTR_HPP

#include "bilevel_rl/environment.hpp"

namespace bilevel_rl {

/// Physical constants for the jacketed CSTR with a first-order endothermic
/// reaction. Values are shipped defaults validated by the well-posedness
/// checks in the test suite: the open loop is stable, the jacket can push T
/// past t_max at low conversion, and the reactant burns down within the
/// horizon at moderate temperatures.
struct CstrParams {
  double rho = 1.0;       // liquid density (mass per volume)
  double k0 = 8e5;        // pre-exponential factor, 1/time
  double ea = 49884.0;    // activation energy; ea / r_gas = 6000 K
  double r_gas = 8.314;
  double dh_rxn = -90.0;  // heat of reaction; negative = endothermic cooling term
  double cp = 3.0;        // heat capacity
  double ua = 500.0;      // heat-transfer coefficient x area
  double t0 = 350.0;      // feed temperature, K
  double t_max = 450.0;   // reactor ceiling, K
  double th_min = 200.0;  // jacket bounds, K
  double th_max = 500.0;

  double arrhenius(double temperature) const;
};

/// CSTR design point. y_schedule holds the per-step settling-tank binaries
/// Y_{S,t} (length n_steps); y_exists is Y_{S,f}. The coupling
/// Y_{S,t} <= Y_{S,f} is rejected at construction.
struct CstrDesign {
  double v = 750.0;       // reactor volume, design variable
  double m_nom = 10.0;    // nominal feed mass flow
  double m_dev = 8.0;     // flow oscillation amplitude
  double ca0_nom = 2.0;   // feed concentration, nominal
  double ca0_dev = 1.0;   // feed concentration oscillation amplitude
  double ca_init = 3.0;   // reactor concentration at tau = 0
  double t_init = 350.0;  // reactor temperature at tau = 0
  std::vector<std::uint8_t> y_schedule;  // empty = all zeros
  bool y_exists = false;

  bool settling_active(int t_index) const {
    return t_index >= 0 && t_index < static_cast<int>(y_schedule.size()) &&
           y_schedule[t_index] != 0;
  }
  // Y_{S,t} = 1 for t < k, else 0; Y_{S,f} = (k > 0).
  static std::vector<std::uint8_t> prefix_schedule(int k, int n_steps);
};

/// State [C_A, T]; control [T_H]; obs [C_A_t, C_A_{t-1}, T_t, V, C_A0_t, C_A_sp].
/// The feed mass flow is hidden from the controller. Measurement noise, when
/// enabled, applies to the C_A and T signals.
class CstrEnv final : public Environment {
 public:
  CstrEnv(CstrDesign design, CstrParams params, TimeGrid grid);

  int state_dim() const override { return 2; }
  int obs_dim() const override { return 6; }
  int n_controls() const override { return 1; }
  const TimeGrid& grid() const override { return grid_; }
  std::vector<double> action_low() const override { return {params_.th_min}; }
  std::vector<double> action_high() const override { return {params_.th_max}; }

  std::vector<double> initial_state() const override {
    return {design_.ca_init, design_.t_init};
  }
  std::vector<double> step(std::span<const double> state, std::span<const double> control,
                           int t_index) const override;
  double reward(std::span<const double> next_state) const override;
  Observation observe(std::span<const double> state, std::span<const double> prev_measured,
                      int t_index, double noise_pct, RngStream* rng) const override;
  std::vector<double> disturbances(int t_index) const override;

  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<CstrEnv>(*this);
  }

  double feed_concentration(double tau) const;
  double mass_flow(double tau, int t_index) const;
  const CstrDesign& design() const { return design_; }
  const CstrParams& params() const { return params_; }

  static constexpr double kCaSetpoint = 0.0;

 private:
  CstrDesign design_;
  CstrParams params_;
  TimeGrid grid_;
};

}  // namespace bilevel_rl

#endif
