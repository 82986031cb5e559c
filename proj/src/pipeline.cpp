#include "bilevel_rl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bilevel_rl/errors.hpp"
#include "bilevel_rl/io.hpp"

namespace bilevel_rl {

namespace {

namespace fs = std::filesystem;

std::string out_path(const StageOptions& opts, const std::string& name) {
  return (fs::path(opts.out_dir) / name).string();
}

void log(const StageOptions& opts, const std::string& msg) {
  if (!opts.quiet) std::cerr << msg << "\n";
}

void report_floor_events(const StageOptions& opts, std::uint64_t before,
                         const std::string& stage) {
  const std::uint64_t n = floor_event_count() - before;
  if (n > 0)
    log(opts, "[" + stage + "] state floored at 0 on " + std::to_string(n) +
                  " integrator step(s)");
}

}  // namespace

RunConfig effective_config(RunConfig cfg, const StageOptions& opts) {
  if (opts.seed) cfg.train.seed = *opts.seed;
  if (opts.runs) cfg.design.n_runs = *opts.runs;
  return cfg;
}

std::unique_ptr<Environment> make_nominal_env(const RunConfig& cfg) {
  if (cfg.case_study == CaseStudy::Tank)
    return std::make_unique<TankEnv>(cfg.env.tank, cfg.env.grid);
  return std::make_unique<CstrEnv>(cfg.env.cstr, cfg.env.cstr_params, cfg.env.grid);
}

EpisodeFactory make_training_factory(const RunConfig& cfg) {
  if (cfg.case_study == CaseStudy::Tank) {
    const auto grid = cfg.env.grid;
    const auto r = cfg.train;
    return [grid, r](int, int, RngStream& rng) -> std::unique_ptr<Environment> {
      TankDesign d;
      d.v_tank = rng.uniform(r.v_tank.lo, r.v_tank.hi);
      d.f_nom = rng.uniform(r.f_nom.lo, r.f_nom.hi);
      // Capacity coupling: the setpoint must fit inside the tank; this keeps
      // the sampled designs inside the box the design solver later searches.
      const double f_dev_hi = std::min(r.f_dev.hi, d.v_tank - d.f_nom);
      d.f_dev = rng.uniform(r.f_dev.lo, std::max(r.f_dev.lo, f_dev_hi));
      const double frac = rng.uniform(r.v0_frac.lo, r.v0_frac.hi);
      d.v0 = std::min(frac * d.setpoint(), d.v_tank);
      return std::make_unique<TankEnv>(d, grid);
    };
  }
  const auto grid = cfg.env.grid;
  const auto r = cfg.train;
  const auto params = cfg.env.cstr_params;
  const double ca_factor = cfg.env.ca_init_factor;
  const double t_init = cfg.env.cstr.t_init;
  return [grid, r, params, ca_factor, t_init](int, int,
                                              RngStream& rng) -> std::unique_ptr<Environment> {
    CstrDesign d;
    d.v = rng.uniform(r.v.lo, r.v.hi);
    d.m_nom = rng.uniform(r.m_nom.lo, r.m_nom.hi);
    d.m_dev = rng.uniform(r.m_dev.lo, std::min(r.m_dev.hi, d.m_nom));
    d.ca0_nom = rng.uniform(r.ca0_nom.lo, r.ca0_nom.hi);
    d.ca0_dev = rng.uniform(r.ca0_dev.lo, std::min(r.ca0_dev.hi, d.ca0_nom));
    d.ca_init = ca_factor * d.ca0_nom;
    d.t_init = t_init;
    // Training assumes no settling tank; the controller must cope with the
    // raw flow oscillation.
    return std::make_unique<CstrEnv>(d, params, grid);
  };
}

std::unique_ptr<Controller> make_demo_controller(const RunConfig& cfg) {
  if (cfg.case_study == CaseStudy::Tank) {
    // Tank obs: [F_in, V_SP, V_meas, V_prev]; error = V_meas - V_SP.
    return std::make_unique<PdController>(cfg.pretrain.kp, cfg.pretrain.kd, 2, 1,
                                          cfg.env.grid.dt(), 0.0, 1.0);
  }
  // CSTR demonstrator: reverse-acting thermostat on the reactor temperature,
  // error = T - t_max with a negative gain. It heats hard far below the
  // ceiling and backs off approaching it.
  return std::make_unique<PdController>(cfg.pretrain.kp, cfg.pretrain.kd, 2,
                                        cfg.env.cstr_params.t_max, cfg.env.grid.dt(),
                                        cfg.env.cstr_params.th_min,
                                        cfg.env.cstr_params.th_max);
}

PolicyNetwork make_policy_network(const RunConfig& cfg) {
  const auto env = make_nominal_env(cfg);
  std::vector<LayerSpec> hidden;
  for (int w : cfg.policy.hidden) hidden.push_back({w, Activation::Tanh});
  PolicyNetwork net(env->obs_dim(), hidden, env->n_controls(), env->action_low(),
                    env->action_high(), cfg.policy.std_floor);
  return net;
}

namespace {

void write_effective_config(const RunConfig& cfg, const StageOptions& opts) {
  write_file_atomic(out_path(opts, "config_effective.json"), cfg.to_json().dump(2) + "\n");
}

Policy load_stage_policy(const StageOptions& opts) {
  return Policy::load(out_path(opts, "policy.json"));
}

}  // namespace

void run_pretrain(const RunConfig& raw_cfg, const StageOptions& opts) {
  const RunConfig cfg = effective_config(raw_cfg, opts);
  write_effective_config(cfg, opts);
  const std::uint64_t floors = floor_event_count();

  const EpisodeFactory factory = make_training_factory(cfg);
  const auto demo = make_demo_controller(cfg);
  const Demos demos = generate_demos(factory, *demo, cfg.pretrain.n_demos,
                                     cfg.train.noise_pct, cfg.train.seed);
  const ObsStats stats = ObsStats::from_samples(demos.observations);

  PolicyNetwork net = make_policy_network(cfg);
  net.init_params(cfg.train.seed);

  std::vector<double> losses;
  if (cfg.pretrain.enabled && cfg.pretrain.n_iter > 0)
    losses = pretrain(net, stats, demos, cfg.pretrain.n_iter, cfg.pretrain.lr);

  Policy policy{std::move(net), stats};
  policy.save(out_path(opts, "policy_pretrained.json"));

  std::ostringstream csv;
  csv.precision(17);
  csv << "iter,loss\r\n";
  for (std::size_t i = 0; i < losses.size(); ++i) csv << i << ',' << losses[i] << "\r\n";
  write_file_atomic(out_path(opts, "pretrain.csv"), csv.str());

  if (!losses.empty())
    log(opts, "[pretrain] " + std::to_string(losses.size()) + " iters, loss " +
                  std::to_string(losses.front()) + " -> " + std::to_string(losses.back()));
  report_floor_events(opts, floors, "pretrain");
}

void run_train(const RunConfig& raw_cfg, const StageOptions& opts) {
  const RunConfig cfg = effective_config(raw_cfg, opts);
  write_effective_config(cfg, opts);
  const std::uint64_t floors = floor_event_count();

  Policy policy = [&] {
    const std::string pretrained = out_path(opts, "policy_pretrained.json");
    if (fs::exists(pretrained)) return Policy::load(pretrained);
    // Cold start: identity normalization would feed raw engineering units
    // into tanh, so derive stats from demonstrator rollouts even here.
    log(opts, "[train] no pretrained policy, cold start");
    const EpisodeFactory factory = make_training_factory(cfg);
    const auto demo = make_demo_controller(cfg);
    const Demos demos = generate_demos(factory, *demo, cfg.pretrain.n_demos,
                                       cfg.train.noise_pct, cfg.train.seed);
    PolicyNetwork net = make_policy_network(cfg);
    net.init_params(cfg.train.seed);
    return Policy{std::move(net), ObsStats::from_samples(demos.observations)};
  }();

  const TrainOptions train_opts = make_train_options(cfg);
  const EpisodeFactory factory = make_training_factory(cfg);
  const TrainReport report = train(factory, policy.net, policy.stats, train_opts);

  policy.save(out_path(opts, "policy.json"));
  write_file_atomic(out_path(opts, "train.csv"), report.csv());
  nlohmann::json train_summary = {
      {"epochs", report.epochs.size()},
      {"wall_seconds", report.wall_seconds},
      {"skipped_updates", report.skipped_updates},
      {"final_mean_return",
       report.epochs.empty() ? 0.0 : report.epochs.back().mean_return},
      {"final_lr", report.epochs.empty() ? 0.0 : report.epochs.back().lr}};
  write_file_atomic(out_path(opts, "train_summary.json"), train_summary.dump(2) + "\n");

  if (!report.epochs.empty())
    log(opts, "[train] " + std::to_string(report.epochs.size()) + " epochs, mean return " +
                  std::to_string(report.epochs.front().mean_return) + " -> " +
                  std::to_string(report.epochs.back().mean_return) + " in " +
                  std::to_string(report.wall_seconds) + " s");
  if (report.skipped_updates > 0)
    log(opts, "[train] skipped " + std::to_string(report.skipped_updates) +
                  " non-finite update(s)");
  report_floor_events(opts, floors, "train");
}

void run_design(const RunConfig& raw_cfg, const StageOptions& opts) {
  const RunConfig cfg = effective_config(raw_cfg, opts);
  write_effective_config(cfg, opts);
  const std::uint64_t floors = floor_event_count();

  const Policy policy = load_stage_policy(opts);
  const ControllerFactory make_controller = [&policy]() -> std::unique_ptr<Controller> {
    return std::make_unique<PolicyController>(policy.net, policy.stats,
                                              RolloutMode::MeanAction);
  };

  DesignSolution sol;
  if (cfg.case_study == CaseStudy::Tank) {
    sol = solve_tank_design(make_controller, make_tank_problem(cfg));
    const TankDesign d = tank_design_from_solution(sol);
    const TankEnv env(d, cfg.env.grid);
    sol.mc = mc_confirm(
        env, make_controller, cfg.design.n_runs, cfg.design.noise_pct, cfg.train.seed,
        tank_eval_error, [&](const Environment& e, const Trajectory& t) {
          return tank_eval_violated(e, t, cfg.design.epsilon_pct);
        });
  } else {
    sol = solve_cstr_design(make_controller, make_cstr_problem(cfg));
    const CstrDesign d = cstr_design_from_solution(sol, cfg.env.grid);
    const CstrEnv env(d, cfg.env.cstr_params, cfg.env.grid);
    sol.mc = mc_confirm(env, make_controller, cfg.design.n_runs, cfg.design.noise_pct,
                        cfg.train.seed, cstr_eval_error,
                        [](const Environment& e, const Trajectory& t) {
                          return cstr_eval_violated(e, t);
                        });
  }

  write_file_atomic(out_path(opts, "design.json"), sol.to_json().dump(2) + "\n");
  log(opts, "[design] " + sol.objective + " = " + std::to_string(sol.objective_value) +
                (sol.feasible ? " (feasible)" : " (infeasible)"));
  report_floor_events(opts, floors, "design");
}

namespace {

std::string eval_csv(const Environment& env, const McStats& pg, const McStats* pd) {
  std::ostringstream out;
  out.precision(17);
  out << "t";
  const auto series_header = [&](const std::string& prefix) {
    for (int i = 0; i < env.state_dim(); ++i) out << ',' << prefix << "mean_state_" << i;
    for (int i = 0; i < env.state_dim(); ++i) out << ',' << prefix << "std_state_" << i;
    for (int i = 0; i < env.n_controls(); ++i) out << ',' << prefix << "mean_u_" << i;
    for (int i = 0; i < env.n_controls(); ++i) out << ',' << prefix << "std_u_" << i;
  };
  series_header("");
  if (pd) series_header("pd_");
  out << "\r\n";
  const int n = env.grid().n_steps;
  for (int t = 0; t <= n; ++t) {
    out << t;
    const auto series_row = [&](const McStats& s) {
      for (int i = 0; i < env.state_dim(); ++i) out << ',' << s.state_mean[t][i];
      for (int i = 0; i < env.state_dim(); ++i) out << ',' << s.state_std[t][i];
      for (int i = 0; i < env.n_controls(); ++i) {
        if (t < n)
          out << ',' << s.control_mean[t][i];
        else
          out << ',';
      }
      for (int i = 0; i < env.n_controls(); ++i) {
        if (t < n)
          out << ',' << s.control_std[t][i];
        else
          out << ',';
      }
    };
    series_row(pg);
    if (pd) series_row(*pd);
    out << "\r\n";
  }
  return out.str();
}

nlohmann::json mc_summary_json(const McStats& s) {
  return {{"mean_err", s.mean_err},
          {"violation_rate", s.violation_rate},
          {"total_reward_mean", s.total_reward_mean},
          {"total_reward_std", s.total_reward_std}};
}

}  // namespace

void run_evaluate(const RunConfig& raw_cfg, const StageOptions& opts) {
  const RunConfig cfg = effective_config(raw_cfg, opts);
  write_effective_config(cfg, opts);
  const std::uint64_t floors = floor_event_count();

  const Policy policy = load_stage_policy(opts);
  const ControllerFactory pg_controller = [&policy]() -> std::unique_ptr<Controller> {
    return std::make_unique<PolicyController>(policy.net, policy.stats,
                                              RolloutMode::MeanAction);
  };

  // Evaluate at the solved design when one is present, else at the env
  // section's nominal design.
  std::unique_ptr<Environment> env;
  const std::string design_path = out_path(opts, "design.json");
  if (fs::exists(design_path)) {
    nlohmann::json j;
    std::ifstream in(design_path);
    in >> j;
    DesignSolution sol;
    sol.design = j.at("design");
    sol.k = j.at("k").get<int>();
    if (cfg.case_study == CaseStudy::Tank) {
      env = std::make_unique<TankEnv>(tank_design_from_solution(sol), cfg.env.grid);
    } else {
      env = std::make_unique<CstrEnv>(cstr_design_from_solution(sol, cfg.env.grid),
                                      cfg.env.cstr_params, cfg.env.grid);
    }
  } else {
    env = make_nominal_env(cfg);
  }

  const double noise = cfg.design.noise_pct;
  const int runs = cfg.design.n_runs;
  const double eps = cfg.design.epsilon_pct;

  McStats pg;
  std::optional<McStats> pd;
  if (cfg.case_study == CaseStudy::Tank) {
    const auto violated = [eps](const Environment& e, const Trajectory& t) {
      return tank_eval_violated(e, t, eps);
    };
    pg = mc_confirm(*env, pg_controller, runs, noise, cfg.train.seed, tank_eval_error,
                    violated);
    const ControllerFactory pd_controller = [&cfg]() { return make_demo_controller(cfg); };
    pd = mc_confirm(*env, pd_controller, runs, noise, cfg.train.seed, tank_eval_error,
                    violated);
  } else {
    pg = mc_confirm(*env, pg_controller, runs, noise, cfg.train.seed, cstr_eval_error,
                    [](const Environment& e, const Trajectory& t) {
                      return cstr_eval_violated(e, t);
                    });
  }

  write_file_atomic(out_path(opts, "eval.csv"), eval_csv(*env, pg, pd ? &*pd : nullptr));

  nlohmann::json summary;
  summary["case"] = cfg.case_study == CaseStudy::Tank ? "tank" : "cstr";
  summary["runs"] = runs;
  summary["noise_pct"] = noise;
  summary["pg"] = mc_summary_json(pg);
  if (pd) summary["pd"] = mc_summary_json(*pd);
  write_file_atomic(out_path(opts, "summary.json"), summary.dump(2) + "\n");

  // Plot-ready single deterministic trajectory at the same design.
  {
    const auto controller = pg_controller();
    const Trajectory traj =
        rollout(*env, *controller, 0.0, RngStream(cfg.train.seed, rng_domain::kEval));
    write_file_atomic(out_path(opts, "traj.csv"), trajectory_csv(*env, traj));
  }

  log(opts, "[evaluate] pg mean_err " + std::to_string(pg.mean_err) +
                (pd ? " | pd mean_err " + std::to_string(pd->mean_err) : ""));
  report_floor_events(opts, floors, "evaluate");
}

void run_pipeline(const RunConfig& cfg, const StageOptions& opts) {
  run_pretrain(cfg, opts);
  run_train(cfg, opts);
  run_design(cfg, opts);
  run_evaluate(cfg, opts);
}

}  // namespace bilevel_rl
