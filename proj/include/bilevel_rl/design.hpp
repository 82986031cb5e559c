#ifndef BILEVEL_RL_DESIGN_HPP
#define BILEVEL_RL_DESIGN_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bilevel_rl/cstr.hpp"
#include "bilevel_rl/rollout.hpp"
#include "bilevel_rl/search.hpp"
#include "bilevel_rl/tank.hpp"

namespace bilevel_rl {

using ControllerFactory = std::function<std::unique_ptr<Controller>()>;

// ---------------------------------------------------------------------------
// Tank: maximize the trackable inlet deviation.

/// Signed constraint residuals for one tank design under one deterministic
/// rollout; feasible means every residual <= tol.
struct TankResiduals {
  double err_integral = 0.0;  // integral relative setpoint error
  double err = 0.0;           // err_integral - eps/100
  double cyclic_low = 0.0;    // (1 - eps/100) V0 - V(T_F)
  double cyclic_high = 0.0;   // V(T_F) - (1 + eps/100) V0
  double capacity = 0.0;      // V_SP - V_tank
  double worst() const;
  bool feasible(double tol = 1e-6) const { return worst() <= tol; }
};

/// Rectangle-rule error integral sum_t |V_t - V_SP| / V_SP * dt over the
/// post-step states t = 1..n_T.
double tank_error_integral(const TankDesign& design, const TimeGrid& grid,
                           const Trajectory& traj);

TankResiduals tank_feasible(Controller& controller, const TankDesign& design,
                            const TimeGrid& grid, double epsilon_pct, double noise_pct,
                            std::uint64_t seed);

struct TankDesignProblem {
  TimeGrid grid{1.0, 100, 1};
  double epsilon_pct = 1.0;
  std::pair<double, double> f_nom_bounds{2.0, 6.0};
  std::pair<double, double> f_dev_bounds{0.0, 5.0};
  std::pair<double, double> v_tank_bounds{6.0, 12.0};
  std::pair<double, double> v0_frac_bounds{0.8, 1.2};  // V(0) as a fraction of V_SP
  double f_dev_tolerance = 0.01;  // bisection bracket width
  double noise_pct = 0.0;         // design-time evaluation noise
  int inner_starts = 4;
  NelderMeadOptions inner_options{120, 0.25, 1e-5, 1e-12, 0.0};
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// CSTR: minimize total cost with a prefix settling-tank schedule.

struct CostBreakdown {
  double equipment = 0.0;
  double operational = 0.0;
  double total = 0.0;
};

/// Equipment cost by formula; operational cost by rectangle-rule integration
/// of -m (C_A0 - C_A) + 4 Y_S over the control grid (left endpoints).
CostBreakdown cstr_cost(const CstrEnv& env, const Trajectory& traj,
                        double settling_capital = 400.0);

struct CstrResiduals {
  double temperature = 0.0;  // max_t T_t - t_max
  double err = 0.0;          // integral C_A error - err_max
  double m_coupling = 0.0;   // m_dev - m_nom
  double ca0_coupling = 0.0; // ca0_dev - ca0_nom
  double worst() const;
  bool feasible(double tol = 1e-6) const { return worst() <= tol; }
};

struct CstrDesignProblem {
  TimeGrid grid{100.0, 100, 10};
  CstrParams params;
  std::pair<double, double> v_bounds{600.0, 1200.0};
  std::pair<double, double> m_nom_bounds{5.0, 15.0};
  std::pair<double, double> m_dev_bounds{0.0, 10.0};
  std::pair<double, double> ca0_nom_bounds{1.0, 3.0};
  std::pair<double, double> ca0_dev_bounds{0.0, 2.0};
  double ca_init_factor = 1.5;  // C_A(0) = factor * ca0_nom
  double t_init = 350.0;
  double err_max = 100.0;
  double settling_capital = 400.0;
  int k_max = 20;
  double noise_pct = 0.0;
  PatternSearchOptions inner_options{400, 0.25, 0.5, 1e-3};
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------

/// Monte-Carlo confirmation statistics at a fixed design.
struct McStats {
  int runs = 0;
  std::vector<std::vector<double>> state_mean, state_std;      // [n_T+1][state_dim]
  std::vector<std::vector<double>> control_mean, control_std;  // [n_T][n_controls]
  std::vector<double> reward_mean, reward_std;                 // [n_T]
  double mean_err = 0.0;
  double violation_rate = 0.0;
  double total_reward_mean = 0.0;
  double total_reward_std = 0.0;
};

/// n_runs rollouts with per-run RNG streams keyed by (seed, run index);
/// reduction in run order, so the result is independent of the worker count.
McStats mc_confirm(const Environment& env, const ControllerFactory& make_controller,
                   int n_runs, double noise_pct, std::uint64_t seed,
                   const std::function<double(const Environment&, const Trajectory&)>& err_fn,
                   const std::function<bool(const Environment&, const Trajectory&)>& violated_fn);

/// Tank/CSTR specific error and violation measures used in reports.
double tank_eval_error(const Environment& env, const Trajectory& traj);
bool tank_eval_violated(const Environment& env, const Trajectory& traj, double epsilon_pct);
double cstr_eval_error(const Environment& env, const Trajectory& traj);
bool cstr_eval_violated(const Environment& env, const Trajectory& traj);

struct DesignSolution {
  std::string objective;  // "maximize_f_dev" or "minimize_cstr_cost"
  double objective_value = 0.0;
  nlohmann::json design;
  bool feasible = false;
  nlohmann::json residuals;
  int k = 0;  // settling-tank prefix length (0 for the tank case)
  std::optional<CostBreakdown> cost_components;
  std::optional<McStats> mc;

  nlohmann::json to_json() const;
};

/// Outer bisection on f_dev; inner multi-start Nelder-Mead over
/// (f_nom, v_tank, v0) for feasibility. Throws SolverError when even
/// f_dev = 0 admits no feasible design.
DesignSolution solve_tank_design(const ControllerFactory& make_controller,
                                 const TankDesignProblem& problem);

/// Enumerates prefix schedules k = 0..k_max; pattern search over the
/// continuous design per k with penalties; returns the cheapest feasible
/// candidate. Throws SolverError when every k is infeasible.
DesignSolution solve_cstr_design(const ControllerFactory& make_controller,
                                 const CstrDesignProblem& problem);

/// The design point a solved tank solution denotes.
TankDesign tank_design_from_solution(const DesignSolution& sol);
CstrDesign cstr_design_from_solution(const DesignSolution& sol, const TimeGrid& grid);

}  // namespace bilevel_rl

#endif
