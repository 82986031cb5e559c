#include "bilevel_rl/design.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bilevel_rl/errors.hpp"
#include "bilevel_rl/training.hpp"

namespace bilevel_rl {

double TankResiduals::worst() const {
  return std::max({err, cyclic_low, cyclic_high, capacity});
}

double tank_error_integral(const TankDesign& design, const TimeGrid& grid,
                           const Trajectory& traj) {
  const double v_sp = design.setpoint();
  if (!(v_sp > 0.0)) throw ContractError("tank error integral: setpoint must be positive");
  double err = 0.0;
  for (std::size_t t = 1; t < traj.states.size(); ++t)
    err += std::abs(traj.states[t][0] - v_sp) / v_sp * grid.dt();
  return err;
}

TankResiduals tank_feasible(Controller& controller, const TankDesign& design,
                            const TimeGrid& grid, double epsilon_pct, double noise_pct,
                            std::uint64_t seed) {
  const TankEnv env(design, grid);
  TankResiduals r;
  Trajectory traj;
  try {
    traj = rollout(env, controller, noise_pct, RngStream(seed, rng_domain::kDesign));
  } catch (const IntegrationError&) {
    r.err = r.cyclic_low = r.cyclic_high = r.capacity = 1e9;  // infeasible, diagnostic value
    return r;
  }
  const double eps = epsilon_pct / 100.0;
  r.err_integral = tank_error_integral(design, grid, traj);
  r.err = r.err_integral - eps;
  const double v_final = traj.states.back()[0];
  r.cyclic_low = (1.0 - eps) * design.v0 - v_final;
  r.cyclic_high = v_final - (1.0 + eps) * design.v0;
  r.capacity = design.setpoint() - design.v_tank;
  return r;
}

namespace {

struct TankInnerResult {
  bool feasible = false;
  TankDesign design;
  TankResiduals residuals;
  double merit = 1e300;
};

// Feasibility search over (f_nom, v_tank, v0_frac) at a fixed f_dev. The
// merit is the worst scaled residual, so merit <= 0 means feasible.
TankInnerResult tank_inner_search(const ControllerFactory& make_controller,
                                  const TankDesignProblem& p, double f_dev) {
  const double eps = p.epsilon_pct / 100.0;
  const Box box{{p.f_nom_bounds.first, p.v_tank_bounds.first, p.v0_frac_bounds.first},
                {p.f_nom_bounds.second, p.v_tank_bounds.second, p.v0_frac_bounds.second}};

  const auto make_design = [&](const std::vector<double>& x) {
    TankDesign d;
    d.f_nom = x[0];
    d.v_tank = x[1];
    d.f_dev = f_dev;
    d.v0 = std::min(x[2] * d.setpoint(), d.v_tank);
    return d;
  };

  TankInnerResult best;
  const auto merit_fn = [&](const std::vector<double>& x) {
    const TankDesign d = make_design(x);
    const auto controller = make_controller();
    const TankResiduals r =
        tank_feasible(*controller, d, p.grid, p.epsilon_pct, p.noise_pct, p.seed);
    const double scale = eps * std::max(d.v0, 1e-9);
    const double merit = std::max({r.err / eps, r.cyclic_low / scale, r.cyclic_high / scale,
                                   r.capacity});
    if (merit < best.merit) {
      best.merit = merit;
      best.design = d;
      best.residuals = r;
    }
    return merit;
  };

  NelderMeadOptions opts = p.inner_options;
  opts.good_enough = -1e-9;

  std::vector<std::vector<double>> starts;
  starts.push_back({0.5 * (box.lo[0] + box.hi[0]), 0.5 * (box.lo[1] + box.hi[1]), 1.0});
  RngStream rng(p.seed, rng_domain::kDesign, 1);
  for (int s = 1; s < p.inner_starts; ++s) {
    std::vector<double> x(3);
    for (std::size_t i = 0; i < 3; ++i) x[i] = rng.uniform(box.lo[i], box.hi[i]);
    starts.push_back(std::move(x));
  }

  for (const auto& start : starts) {
    nelder_mead(merit_fn, box, start, opts);
    if (best.merit <= 0.0) break;
  }
  best.feasible = best.residuals.feasible() && best.merit <= 0.0;
  return best;
}

nlohmann::json tank_residuals_json(const TankResiduals& r) {
  return {{"err_integral", r.err_integral},
          {"err", r.err},
          {"cyclic_low", r.cyclic_low},
          {"cyclic_high", r.cyclic_high},
          {"capacity", r.capacity}};
}

}  // namespace

DesignSolution solve_tank_design(const ControllerFactory& make_controller,
                                 const TankDesignProblem& problem) {
  const double lo_bound = problem.f_dev_bounds.first;
  const double hi_bound = problem.f_dev_bounds.second;

  TankInnerResult at_lo = tank_inner_search(make_controller, problem, lo_bound);
  if (!at_lo.feasible)
    throw SolverError("solve_tank_design: policy cannot stabilize nominal design "
                      "(infeasible at f_dev = " + std::to_string(lo_bound) + ")");

  TankInnerResult best = at_lo;
  double lo = lo_bound;
  double hi = hi_bound;
  TankInnerResult at_hi = tank_inner_search(make_controller, problem, hi_bound);
  if (at_hi.feasible) {
    best = at_hi;
    lo = hi_bound;
  } else {
    while (hi - lo > problem.f_dev_tolerance) {
      const double mid = 0.5 * (lo + hi);
      TankInnerResult at_mid = tank_inner_search(make_controller, problem, mid);
      if (at_mid.feasible) {
        best = at_mid;
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }

  DesignSolution sol;
  sol.objective = "maximize_f_dev";
  sol.objective_value = best.design.f_dev;
  sol.feasible = true;
  sol.design = {{"f_dev", best.design.f_dev},
                {"f_nom", best.design.f_nom},
                {"v_tank", best.design.v_tank},
                {"v0", best.design.v0},
                {"v_sp", best.design.setpoint()}};
  sol.residuals = tank_residuals_json(best.residuals);
  sol.k = 0;
  return sol;
}

TankDesign tank_design_from_solution(const DesignSolution& sol) {
  TankDesign d;
  d.f_dev = sol.design.at("f_dev").get<double>();
  d.f_nom = sol.design.at("f_nom").get<double>();
  d.v_tank = sol.design.at("v_tank").get<double>();
  d.v0 = sol.design.at("v0").get<double>();
  return d;
}

// ---------------------------------------------------------------------------

double CstrResiduals::worst() const {
  return std::max({temperature, err, m_coupling, ca0_coupling});
}

CostBreakdown cstr_cost(const CstrEnv& env, const Trajectory& traj,
                        double settling_capital) {
  const CstrDesign& d = env.design();
  CostBreakdown c;
  c.equipment = 10.0 * (d.v - 750.0) / std::numbers::pi + 1000.0 +
                settling_capital * (d.y_exists ? 1.0 : 0.0);
  const double dt = env.grid().dt();
  for (int t = 0; t < env.grid().n_steps; ++t) {
    const double tau = t * dt;
    const double m = env.mass_flow(tau, t);
    const double ca0 = env.feed_concentration(tau);
    const double ca = traj.states[t][0];
    const double y = d.settling_active(t) ? 1.0 : 0.0;
    c.operational += (-m * (ca0 - ca) + 4.0 * y) * dt;
  }
  c.total = c.equipment + c.operational;
  return c;
}

namespace {

struct CstrCandidate {
  bool feasible = false;
  CstrDesign design;
  CstrResiduals residuals;
  CostBreakdown cost;
  double penalized = 1e300;
  int k = 0;
};

CstrResiduals cstr_residuals(const CstrEnv& env, const Trajectory& traj, double err_max) {
  CstrResiduals r;
  double worst_temp = -1e300;
  for (const auto& s : traj.states) worst_temp = std::max(worst_temp, s[1]);
  r.temperature = worst_temp - env.params().t_max;
  double err = 0.0;
  for (std::size_t t = 1; t < traj.states.size(); ++t)
    err += (traj.states[t][0] - CstrEnv::kCaSetpoint) * env.grid().dt();
  r.err = err - err_max;
  r.m_coupling = env.design().m_dev - env.design().m_nom;
  r.ca0_coupling = env.design().ca0_dev - env.design().ca0_nom;
  return r;
}

nlohmann::json cstr_residuals_json(const CstrResiduals& r) {
  return {{"temperature", r.temperature},
          {"err", r.err},
          {"m_coupling", r.m_coupling},
          {"ca0_coupling", r.ca0_coupling}};
}

}  // namespace

DesignSolution solve_cstr_design(const ControllerFactory& make_controller,
                                 const CstrDesignProblem& problem) {
  const Box box{{problem.v_bounds.first, problem.m_nom_bounds.first,
                 problem.m_dev_bounds.first, problem.ca0_nom_bounds.first,
                 problem.ca0_dev_bounds.first},
                {problem.v_bounds.second, problem.m_nom_bounds.second,
                 problem.m_dev_bounds.second, problem.ca0_nom_bounds.second,
                 problem.ca0_dev_bounds.second}};

  const auto make_design = [&](const std::vector<double>& x, int k) {
    CstrDesign d;
    d.v = x[0];
    d.m_nom = x[1];
    d.m_dev = std::min(x[2], d.m_nom);  // endpoint coupling enforced in the box walk
    d.ca0_nom = x[3];
    d.ca0_dev = std::min(x[4], d.ca0_nom);
    d.ca_init = problem.ca_init_factor * d.ca0_nom;
    d.t_init = problem.t_init;
    d.y_schedule = CstrDesign::prefix_schedule(k, problem.grid.n_steps);
    d.y_exists = k > 0;
    return d;
  };

  // Cost scale ~1e3; a violation of one scaled unit must dominate any cost
  // difference inside the box.
  constexpr double kPenalty = 1e7;

  CstrCandidate overall_best;        // min cost among feasible candidates
  CstrCandidate least_infeasible;    // diagnostics when everything fails
  bool any_feasible = false;

  for (int k = 0; k <= problem.k_max; ++k) {
    CstrCandidate best_k;
    const auto objective = [&](const std::vector<double>& x) {
      const CstrDesign d = make_design(x, k);
      const CstrEnv env(d, problem.params, problem.grid);
      const auto controller = make_controller();
      Trajectory traj;
      try {
        traj = rollout(env, *controller, problem.noise_pct,
                       RngStream(problem.seed, rng_domain::kDesign, 2,
                                 static_cast<std::uint64_t>(k)));
      } catch (const IntegrationError&) {
        return 1e12;
      }
      const CstrResiduals r = cstr_residuals(env, traj, problem.err_max);
      const CostBreakdown cost = cstr_cost(env, traj, problem.settling_capital);
      const double violation = std::max(0.0, r.temperature / 1.0) +
                               std::max(0.0, r.err / problem.err_max) +
                               std::max(0.0, r.m_coupling) +
                               std::max(0.0, r.ca0_coupling);
      const double penalized = cost.total + kPenalty * violation;
      if (penalized < best_k.penalized) {
        best_k.penalized = penalized;
        best_k.design = d;
        best_k.residuals = r;
        best_k.cost = cost;
        best_k.k = k;
      }
      return penalized;
    };

    std::vector<double> start(5);
    for (std::size_t i = 0; i < 5; ++i) start[i] = 0.5 * (box.lo[i] + box.hi[i]);
    pattern_search(objective, box, start, problem.inner_options);

    best_k.feasible = best_k.residuals.feasible();
    if (best_k.feasible) {
      if (!any_feasible || best_k.cost.total < overall_best.cost.total) overall_best = best_k;
      any_feasible = true;
    } else if (best_k.residuals.worst() < least_infeasible.residuals.worst() ||
               least_infeasible.penalized == 1e300) {
      least_infeasible = best_k;
    }
  }

  if (!any_feasible)
    throw SolverError("solve_cstr_design: no feasible schedule; best residuals " +
                      cstr_residuals_json(least_infeasible.residuals).dump());

  DesignSolution sol;
  sol.objective = "minimize_cstr_cost";
  sol.objective_value = overall_best.cost.total;
  sol.feasible = true;
  sol.design = {{"v", overall_best.design.v},
                {"m_nom", overall_best.design.m_nom},
                {"m_dev", overall_best.design.m_dev},
                {"ca0_nom", overall_best.design.ca0_nom},
                {"ca0_dev", overall_best.design.ca0_dev},
                {"ca_init", overall_best.design.ca_init},
                {"t_init", overall_best.design.t_init},
                {"y_exists", overall_best.design.y_exists}};
  sol.residuals = cstr_residuals_json(overall_best.residuals);
  sol.k = overall_best.k;
  sol.cost_components = overall_best.cost;
  return sol;
}

CstrDesign cstr_design_from_solution(const DesignSolution& sol, const TimeGrid& grid) {
  CstrDesign d;
  d.v = sol.design.at("v").get<double>();
  d.m_nom = sol.design.at("m_nom").get<double>();
  d.m_dev = sol.design.at("m_dev").get<double>();
  d.ca0_nom = sol.design.at("ca0_nom").get<double>();
  d.ca0_dev = sol.design.at("ca0_dev").get<double>();
  d.ca_init = sol.design.at("ca_init").get<double>();
  d.t_init = sol.design.at("t_init").get<double>();
  d.y_schedule = CstrDesign::prefix_schedule(sol.k, grid.n_steps);
  d.y_exists = sol.design.at("y_exists").get<bool>();
  return d;
}

// ---------------------------------------------------------------------------

McStats mc_confirm(const Environment& env, const ControllerFactory& make_controller,
                   int n_runs, double noise_pct, std::uint64_t seed,
                   const std::function<double(const Environment&, const Trajectory&)>& err_fn,
                   const std::function<bool(const Environment&, const Trajectory&)>& violated_fn) {
  if (n_runs < 1) throw ContractError("mc_confirm: n_runs must be >= 1");

  std::vector<Trajectory> runs(n_runs);
  parallel_for(n_runs, [&](int i) {
    const auto controller = make_controller();
    const auto local_env = env.clone();
    runs[i] = rollout(*local_env, *controller, noise_pct,
                      RngStream(seed, rng_domain::kEval, static_cast<std::uint64_t>(i)));
  });

  McStats stats;
  stats.runs = n_runs;
  const int n_states = env.grid().n_steps + 1;
  const int n_controls_steps = env.grid().n_steps;
  stats.state_mean.assign(n_states, std::vector<double>(env.state_dim(), 0.0));
  stats.state_std.assign(n_states, std::vector<double>(env.state_dim(), 0.0));
  stats.control_mean.assign(n_controls_steps, std::vector<double>(env.n_controls(), 0.0));
  stats.control_std.assign(n_controls_steps, std::vector<double>(env.n_controls(), 0.0));
  stats.reward_mean.assign(n_controls_steps, 0.0);
  stats.reward_std.assign(n_controls_steps, 0.0);

  double err_sum = 0.0;
  int violated = 0;
  double rew_sum = 0.0;
  for (const Trajectory& traj : runs) {
    for (int t = 0; t < n_states; ++t)
      for (int i = 0; i < env.state_dim(); ++i) stats.state_mean[t][i] += traj.states[t][i];
    for (int t = 0; t < n_controls_steps; ++t) {
      for (int i = 0; i < env.n_controls(); ++i)
        stats.control_mean[t][i] += traj.applied_actions[t][i];
      stats.reward_mean[t] += traj.rewards[t];
    }
    err_sum += err_fn(env, traj);
    if (violated_fn(env, traj)) ++violated;
    rew_sum += traj.total_return(1.0);
  }
  const double n = static_cast<double>(n_runs);
  for (auto& row : stats.state_mean)
    for (auto& v : row) v /= n;
  for (auto& row : stats.control_mean)
    for (auto& v : row) v /= n;
  for (auto& v : stats.reward_mean) v /= n;
  stats.total_reward_mean = rew_sum / n;

  // Variances anchored on the first run: identical runs report exactly zero
  // spread instead of accumulation round-off.
  const auto anchored_std = [n](double sum_d, double sum_d2) {
    const double m = sum_d / n;
    return std::sqrt(std::max(0.0, sum_d2 / n - m * m));
  };
  std::vector<std::vector<double>> state_d(n_states, std::vector<double>(env.state_dim(), 0.0));
  std::vector<std::vector<double>> control_d(n_controls_steps,
                                             std::vector<double>(env.n_controls(), 0.0));
  std::vector<double> reward_d(n_controls_steps, 0.0);
  double rew_d = 0.0, rew_d2 = 0.0;
  const Trajectory& anchor = runs.front();
  const double anchor_rew = anchor.total_return(1.0);
  for (const Trajectory& traj : runs) {
    for (int t = 0; t < n_states; ++t)
      for (int i = 0; i < env.state_dim(); ++i) {
        const double d = traj.states[t][i] - anchor.states[t][i];
        state_d[t][i] += d;
        stats.state_std[t][i] += d * d;
      }
    for (int t = 0; t < n_controls_steps; ++t) {
      for (int i = 0; i < env.n_controls(); ++i) {
        const double d = traj.applied_actions[t][i] - anchor.applied_actions[t][i];
        control_d[t][i] += d;
        stats.control_std[t][i] += d * d;
      }
      const double d = traj.rewards[t] - anchor.rewards[t];
      reward_d[t] += d;
      stats.reward_std[t] += d * d;
    }
    const double dr = traj.total_return(1.0) - anchor_rew;
    rew_d += dr;
    rew_d2 += dr * dr;
  }
  for (int t = 0; t < n_states; ++t)
    for (int i = 0; i < env.state_dim(); ++i)
      stats.state_std[t][i] = anchored_std(state_d[t][i], stats.state_std[t][i]);
  for (int t = 0; t < n_controls_steps; ++t) {
    for (int i = 0; i < env.n_controls(); ++i)
      stats.control_std[t][i] = anchored_std(control_d[t][i], stats.control_std[t][i]);
    stats.reward_std[t] = anchored_std(reward_d[t], stats.reward_std[t]);
  }

  stats.mean_err = err_sum / n;
  stats.violation_rate = static_cast<double>(violated) / n;
  stats.total_reward_std = anchored_std(rew_d, rew_d2);
  return stats;
}

double tank_eval_error(const Environment& env, const Trajectory& traj) {
  const auto& tank = dynamic_cast<const TankEnv&>(env);
  return tank_error_integral(tank.design(), tank.grid(), traj);
}

bool tank_eval_violated(const Environment& env, const Trajectory& traj, double epsilon_pct) {
  const auto& tank = dynamic_cast<const TankEnv&>(env);
  const double eps = epsilon_pct / 100.0;
  if (tank_error_integral(tank.design(), tank.grid(), traj) > eps) return true;
  const double v0 = tank.design().v0;
  const double v_final = traj.states.back()[0];
  return v_final < (1.0 - eps) * v0 || v_final > (1.0 + eps) * v0;
}

double cstr_eval_error(const Environment& env, const Trajectory& traj) {
  double err = 0.0;
  for (std::size_t t = 1; t < traj.states.size(); ++t)
    err += (traj.states[t][0] - CstrEnv::kCaSetpoint) * env.grid().dt();
  return err;
}

bool cstr_eval_violated(const Environment& env, const Trajectory& traj) {
  const auto& cstr = dynamic_cast<const CstrEnv&>(env);
  for (const auto& s : traj.states)
    if (s[1] > cstr.params().t_max) return true;
  return false;
}

// ---------------------------------------------------------------------------

nlohmann::json DesignSolution::to_json() const {
  nlohmann::json j;
  j["objective"] = objective;
  j["objective_value"] = objective_value;
  j["design"] = design;
  j["feasible"] = feasible;
  j["residuals"] = residuals;
  j["k"] = k;
  if (cost_components) {
    j["cost_components"] = {{"equipment", cost_components->equipment},
                            {"operational", cost_components->operational},
                            {"total", cost_components->total}};
  } else {
    j["cost_components"] = nullptr;
  }
  if (mc) {
    j["mc"] = {{"mean_err", mc->mean_err}, {"violation_rate", mc->violation_rate}};
  } else {
    j["mc"] = nullptr;
  }
  return j;
}

}  // namespace bilevel_rl
