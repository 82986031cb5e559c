#ifndef BILEVEL_RL_CONFIG_HPP
#define BILEVEL_RL_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bilevel_rl/cstr.hpp"
#include "bilevel_rl/design.hpp"
#include "bilevel_rl/tank.hpp"
#include "bilevel_rl/training.hpp"

namespace bilevel_rl {

enum class CaseStudy { Tank, Cstr };

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Fully resolved run configuration. validate_config fills every default, so
/// an instance round-trips bit-identically through to_json.
struct RunConfig {
  CaseStudy case_study = CaseStudy::Tank;

  struct Env {
    TimeGrid grid;
    double noise_pct = 0.0;
    TankDesign tank;       // nominal/benchmark design for demos and evaluate
    CstrDesign cstr;
    CstrParams cstr_params;
    double ca_init_factor = 1.5;
  } env;

  struct PolicyCfg {
    std::vector<int> hidden{20, 20};
    double std_floor = 0.01;
  } policy;

  struct Pretrain {
    bool enabled = true;
    double kp = 1.0;
    double kd = 0.05;
    int n_iter = 500;
    double lr = 1e-3;
    int n_demos = 20;
  } pretrain;

  struct Train {
    int n_epochs = 1000;
    int episodes_per_epoch = 20;
    double gamma = 1.0;
    double alpha0 = 1e-3;
    double decay = 0.99;
    int start_epoch = 500;  // defaults to n_epochs / 2
    double noise_pct = 0.0;  // defaults to env.noise_pct
    std::uint64_t seed = 42;
    // Per-episode design sampling ranges.
    Range f_nom{2.0, 6.0}, f_dev{0.0, 5.0}, v_tank{6.0, 12.0}, v0_frac{0.8, 1.2};
    Range v{600.0, 1200.0}, m_nom{5.0, 15.0}, m_dev{0.0, 10.0};
    Range ca0_nom{1.0, 3.0}, ca0_dev{0.0, 2.0};
  } train;

  struct Design {
    double epsilon_pct = 1.0;
    double f_dev_tolerance = 0.01;
    int inner_starts = 4;
    int k_max = 20;
    double err_max = 100.0;
    double settling_capital = 400.0;
    double eval_noise_pct = 0.0;  // design-time feasibility rollouts
    int n_runs = 1000;            // MC confirmation / evaluate
    double noise_pct = 2.0;       // defaults to env.noise_pct
    Range f_nom{2.0, 6.0}, f_dev{0.0, 5.0}, v_tank{6.0, 12.0}, v0_frac{0.8, 1.2};
    Range v{600.0, 1200.0}, m_nom{5.0, 15.0}, m_dev{0.0, 10.0};
    Range ca0_nom{1.0, 3.0}, ca0_dev{0.0, 2.0};
  } design;

  nlohmann::json to_json() const;
};

/// Parses and validates a raw config object: unknown keys, type mismatches
/// and out-of-range values raise ConfigError naming the offending key.
RunConfig validate_config(const nlohmann::json& raw);
RunConfig load_config(const std::string& path);

// Problem builders derived from a validated config.
TankDesignProblem make_tank_problem(const RunConfig& cfg);
CstrDesignProblem make_cstr_problem(const RunConfig& cfg);
TrainOptions make_train_options(const RunConfig& cfg);

}  // namespace bilevel_rl

#endif
