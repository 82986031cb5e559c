#include "bilevel_rl/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

#include "bilevel_rl/errors.hpp"

namespace bilevel_rl {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: \"" + path + "\" must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError("config: unknown key \"" + join(path, key) + "\"");
}

const json* find(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

double get_num(const json& j, const std::string& path, const char* key, double def,
               double lo = -1e300, double hi = 1e300) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_number())
    throw ConfigError("config: \"" + join(path, key) + "\" must be a number");
  const double x = v->get<double>();
  if (x < lo || x > hi)
    throw ConfigError("config: \"" + join(path, key) + "\" out of range [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return x;
}

int get_int(const json& j, const std::string& path, const char* key, int def, int lo,
            int hi = 1 << 30) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_number_integer())
    throw ConfigError("config: \"" + join(path, key) + "\" must be an integer");
  const int x = v->get<int>();
  if (x < lo || x > hi)
    throw ConfigError("config: \"" + join(path, key) + "\" out of range");
  return x;
}

bool get_bool(const json& j, const std::string& path, const char* key, bool def) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_boolean())
    throw ConfigError("config: \"" + join(path, key) + "\" must be a boolean");
  return v->get<bool>();
}

Range get_range(const json& j, const std::string& path, const char* key, Range def) {
  const json* v = find(j, key);
  if (!v) return def;
  if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
    throw ConfigError("config: \"" + join(path, key) + "\" must be [min, max]");
  Range r{(*v)[0].get<double>(), (*v)[1].get<double>()};
  if (r.lo > r.hi)
    throw ConfigError("config: \"" + join(path, key) + "\" has min > max");
  return r;
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

void read_case_ranges(const json& j, const std::string& path, CaseStudy cs, auto& out) {
  if (cs == CaseStudy::Tank) {
    check_keys(j, path, {"f_nom", "f_dev", "v_tank", "v0_frac"});
    out.f_nom = get_range(j, path, "f_nom", out.f_nom);
    out.f_dev = get_range(j, path, "f_dev", out.f_dev);
    out.v_tank = get_range(j, path, "v_tank", out.v_tank);
    out.v0_frac = get_range(j, path, "v0_frac", out.v0_frac);
  } else {
    check_keys(j, path, {"v", "m_nom", "m_dev", "ca0_nom", "ca0_dev"});
    out.v = get_range(j, path, "v", out.v);
    out.m_nom = get_range(j, path, "m_nom", out.m_nom);
    out.m_dev = get_range(j, path, "m_dev", out.m_dev);
    out.ca0_nom = get_range(j, path, "ca0_nom", out.ca0_nom);
    out.ca0_dev = get_range(j, path, "ca0_dev", out.ca0_dev);
  }
}

json case_ranges_json(CaseStudy cs, const auto& r) {
  if (cs == CaseStudy::Tank)
    return {{"f_nom", range_json(r.f_nom)},
            {"f_dev", range_json(r.f_dev)},
            {"v_tank", range_json(r.v_tank)},
            {"v0_frac", range_json(r.v0_frac)}};
  return {{"v", range_json(r.v)},
          {"m_nom", range_json(r.m_nom)},
          {"m_dev", range_json(r.m_dev)},
          {"ca0_nom", range_json(r.ca0_nom)},
          {"ca0_dev", range_json(r.ca0_dev)}};
}

}  // namespace

RunConfig validate_config(const nlohmann::json& raw) {
  if (!raw.is_object()) throw ConfigError("config: top level must be a JSON object");
  check_keys(raw, "", {"case", "env", "policy", "pretrain", "train", "design"});

  RunConfig cfg;
  if (const json* v = find(raw, "case")) {
    if (!v->is_string()) throw ConfigError("config: \"case\" must be a string");
    const std::string s = v->get<std::string>();
    if (s == "tank")
      cfg.case_study = CaseStudy::Tank;
    else if (s == "cstr")
      cfg.case_study = CaseStudy::Cstr;
    else
      throw ConfigError("config: \"case\" must be \"tank\" or \"cstr\"");
  }
  const bool tank = cfg.case_study == CaseStudy::Tank;

  // Case-dependent defaults, applied before reading overrides.
  if (tank) {
    cfg.env.grid = TimeGrid(1.0, 100, 1);
    cfg.env.noise_pct = 2.0;
    cfg.pretrain.kp = 1.0;
    cfg.pretrain.kd = 0.05;
  } else {
    cfg.env.grid = TimeGrid(100.0, 100, 10);
    cfg.env.noise_pct = 0.0;
    cfg.pretrain.kp = -26.0;  // reverse-acting: heat below t_max, cool near it
    cfg.pretrain.kd = -5.0;
  }

  if (const json* env = find(raw, "env")) {
    const std::string p = "env";
    check_keys(*env, p, {"grid", "noise_pct", "tank", "cstr", "params"});
    if (const json* grid = find(*env, "grid")) {
      check_keys(*grid, join(p, "grid"), {"t_final", "n_steps", "substeps"});
      const double tf = get_num(*grid, join(p, "grid"), "t_final", cfg.env.grid.t_final, 1e-12);
      const int ns = get_int(*grid, join(p, "grid"), "n_steps", cfg.env.grid.n_steps, 1);
      const int sub = get_int(*grid, join(p, "grid"), "substeps", cfg.env.grid.substeps, 1);
      cfg.env.grid = TimeGrid(tf, ns, sub);
    }
    cfg.env.noise_pct = get_num(*env, p, "noise_pct", cfg.env.noise_pct, 0.0, 100.0);
    if (const json* t = find(*env, "tank")) {
      check_keys(*t, join(p, "tank"), {"v_tank", "f_nom", "f_dev", "v0"});
      cfg.env.tank.v_tank = get_num(*t, join(p, "tank"), "v_tank", cfg.env.tank.v_tank, 0.0);
      cfg.env.tank.f_nom = get_num(*t, join(p, "tank"), "f_nom", cfg.env.tank.f_nom, 0.0);
      cfg.env.tank.f_dev = get_num(*t, join(p, "tank"), "f_dev", cfg.env.tank.f_dev, 0.0);
      cfg.env.tank.v0 = get_num(*t, join(p, "tank"), "v0", -1.0, -1.0);
    } else {
      cfg.env.tank.v0 = -1.0;
    }
    if (const json* c = find(*env, "cstr")) {
      check_keys(*c, join(p, "cstr"),
                 {"v", "m_nom", "m_dev", "ca0_nom", "ca0_dev", "ca_init_factor", "t_init"});
      cfg.env.cstr.v = get_num(*c, join(p, "cstr"), "v", cfg.env.cstr.v, 1e-9);
      cfg.env.cstr.m_nom = get_num(*c, join(p, "cstr"), "m_nom", cfg.env.cstr.m_nom, 0.0);
      cfg.env.cstr.m_dev = get_num(*c, join(p, "cstr"), "m_dev", cfg.env.cstr.m_dev, 0.0);
      cfg.env.cstr.ca0_nom = get_num(*c, join(p, "cstr"), "ca0_nom", cfg.env.cstr.ca0_nom, 0.0);
      cfg.env.cstr.ca0_dev = get_num(*c, join(p, "cstr"), "ca0_dev", cfg.env.cstr.ca0_dev, 0.0);
      cfg.env.ca_init_factor =
          get_num(*c, join(p, "cstr"), "ca_init_factor", cfg.env.ca_init_factor, 0.0);
      cfg.env.cstr.t_init = get_num(*c, join(p, "cstr"), "t_init", cfg.env.cstr.t_init, 1.0);
    }
    if (const json* pr = find(*env, "params")) {
      const std::string pp = join(p, "params");
      check_keys(*pr, pp,
                 {"rho", "k0", "ea", "r_gas", "dh_rxn", "cp", "ua", "t0", "t_max", "th_min",
                  "th_max"});
      CstrParams& cp = cfg.env.cstr_params;
      cp.rho = get_num(*pr, pp, "rho", cp.rho, 1e-12);
      cp.k0 = get_num(*pr, pp, "k0", cp.k0, 0.0);
      cp.ea = get_num(*pr, pp, "ea", cp.ea, 0.0);
      cp.r_gas = get_num(*pr, pp, "r_gas", cp.r_gas, 1e-12);
      cp.dh_rxn = get_num(*pr, pp, "dh_rxn", cp.dh_rxn);
      cp.cp = get_num(*pr, pp, "cp", cp.cp, 1e-12);
      cp.ua = get_num(*pr, pp, "ua", cp.ua, 0.0);
      cp.t0 = get_num(*pr, pp, "t0", cp.t0, 1.0);
      cp.t_max = get_num(*pr, pp, "t_max", cp.t_max, 1.0);
      cp.th_min = get_num(*pr, pp, "th_min", cp.th_min, 1.0);
      cp.th_max = get_num(*pr, pp, "th_max", cp.th_max, 1.0);
      if (cp.th_min >= cp.th_max)
        throw ConfigError("config: \"env.params.th_min\" must be below th_max");
    }
  } else {
    cfg.env.tank.v0 = -1.0;
  }
  if (cfg.env.tank.v0 < 0.0) cfg.env.tank.v0 = cfg.env.tank.setpoint();
  cfg.env.cstr.ca_init = cfg.env.ca_init_factor * cfg.env.cstr.ca0_nom;

  if (const json* pol = find(raw, "policy")) {
    check_keys(*pol, "policy", {"hidden", "std_floor"});
    if (const json* h = find(*pol, "hidden")) {
      if (!h->is_array()) throw ConfigError("config: \"policy.hidden\" must be an array");
      cfg.policy.hidden.clear();
      for (const auto& w : *h) {
        if (!w.is_number_integer() || w.get<int>() < 1)
          throw ConfigError("config: \"policy.hidden\" entries must be positive integers");
        cfg.policy.hidden.push_back(w.get<int>());
      }
    }
    cfg.policy.std_floor = get_num(*pol, "policy", "std_floor", cfg.policy.std_floor,
                                   1e-6, 0.5);
  }

  if (const json* pt = find(raw, "pretrain")) {
    check_keys(*pt, "pretrain", {"enabled", "kp", "kd", "n_iter", "lr", "n_demos"});
    cfg.pretrain.enabled = get_bool(*pt, "pretrain", "enabled", cfg.pretrain.enabled);
    cfg.pretrain.kp = get_num(*pt, "pretrain", "kp", cfg.pretrain.kp);
    cfg.pretrain.kd = get_num(*pt, "pretrain", "kd", cfg.pretrain.kd);
    cfg.pretrain.n_iter = get_int(*pt, "pretrain", "n_iter", cfg.pretrain.n_iter, 0);
    cfg.pretrain.lr = get_num(*pt, "pretrain", "lr", cfg.pretrain.lr, 1e-12, 1.0);
    cfg.pretrain.n_demos = get_int(*pt, "pretrain", "n_demos", cfg.pretrain.n_demos, 1);
  }

  cfg.train.noise_pct = cfg.env.noise_pct;
  if (const json* tr = find(raw, "train")) {
    const std::string p = "train";
    check_keys(*tr, p,
               {"n_epochs", "episodes_per_epoch", "gamma", "lr", "seed", "noise_pct",
                "design_ranges"});
    cfg.train.n_epochs = get_int(*tr, p, "n_epochs", cfg.train.n_epochs, 0);
    cfg.train.episodes_per_epoch =
        get_int(*tr, p, "episodes_per_epoch", cfg.train.episodes_per_epoch, 1);
    cfg.train.gamma = get_num(*tr, p, "gamma", cfg.train.gamma, 0.0, 1.0);
    cfg.train.noise_pct = get_num(*tr, p, "noise_pct", cfg.train.noise_pct, 0.0, 100.0);
    if (const json* s = find(*tr, "seed")) {
      if (!s->is_number_unsigned() && !s->is_number_integer())
        throw ConfigError("config: \"train.seed\" must be an unsigned integer");
      cfg.train.seed = s->get<std::uint64_t>();
    }
    cfg.train.start_epoch = -1;
    if (const json* lr = find(*tr, "lr")) {
      const std::string lp = join(p, "lr");
      check_keys(*lr, lp, {"alpha0", "decay", "start_epoch"});
      cfg.train.alpha0 = get_num(*lr, lp, "alpha0", cfg.train.alpha0, 1e-12, 1.0);
      cfg.train.decay = get_num(*lr, lp, "decay", cfg.train.decay, 1e-6, 1.0);
      cfg.train.start_epoch = get_int(*lr, lp, "start_epoch", -1, -1);
    }
    if (const json* dr = find(*tr, "design_ranges"))
      read_case_ranges(*dr, join(p, "design_ranges"), cfg.case_study, cfg.train);
  }
  if (cfg.train.start_epoch < 0) cfg.train.start_epoch = cfg.train.n_epochs / 2;

  cfg.design.noise_pct = cfg.env.noise_pct;
  // Design search boxes default to the training ranges.
  cfg.design.f_nom = cfg.train.f_nom;
  cfg.design.f_dev = cfg.train.f_dev;
  cfg.design.v_tank = cfg.train.v_tank;
  cfg.design.v0_frac = cfg.train.v0_frac;
  cfg.design.v = cfg.train.v;
  cfg.design.m_nom = cfg.train.m_nom;
  cfg.design.m_dev = cfg.train.m_dev;
  cfg.design.ca0_nom = cfg.train.ca0_nom;
  cfg.design.ca0_dev = cfg.train.ca0_dev;
  if (const json* de = find(raw, "design")) {
    const std::string p = "design";
    check_keys(*de, p,
               {"bounds", "epsilon_pct", "f_dev_tolerance", "inner_starts", "k_max",
                "err_max", "settling_capital", "eval_noise_pct", "n_runs", "noise_pct"});
    cfg.design.epsilon_pct = get_num(*de, p, "epsilon_pct", cfg.design.epsilon_pct, 1e-9);
    cfg.design.f_dev_tolerance =
        get_num(*de, p, "f_dev_tolerance", cfg.design.f_dev_tolerance, 1e-9);
    cfg.design.inner_starts = get_int(*de, p, "inner_starts", cfg.design.inner_starts, 1);
    cfg.design.k_max = get_int(*de, p, "k_max", cfg.design.k_max, 0);
    cfg.design.err_max = get_num(*de, p, "err_max", cfg.design.err_max, 0.0);
    cfg.design.settling_capital =
        get_num(*de, p, "settling_capital", cfg.design.settling_capital, 0.0);
    cfg.design.eval_noise_pct =
        get_num(*de, p, "eval_noise_pct", cfg.design.eval_noise_pct, 0.0, 100.0);
    cfg.design.n_runs = get_int(*de, p, "n_runs", cfg.design.n_runs, 1);
    cfg.design.noise_pct = get_num(*de, p, "noise_pct", cfg.design.noise_pct, 0.0, 100.0);
    if (const json* b = find(*de, "bounds"))
      read_case_ranges(*b, join(p, "bounds"), cfg.case_study, cfg.design);
  }

  return cfg;
}

nlohmann::json RunConfig::to_json() const {
  const bool tank = case_study == CaseStudy::Tank;
  json j;
  j["case"] = tank ? "tank" : "cstr";
  j["env"] = {{"grid",
               {{"t_final", env.grid.t_final},
                {"n_steps", env.grid.n_steps},
                {"substeps", env.grid.substeps}}},
              {"noise_pct", env.noise_pct}};
  if (tank) {
    j["env"]["tank"] = {{"v_tank", env.tank.v_tank},
                        {"f_nom", env.tank.f_nom},
                        {"f_dev", env.tank.f_dev},
                        {"v0", env.tank.v0}};
  } else {
    j["env"]["cstr"] = {{"v", env.cstr.v},
                        {"m_nom", env.cstr.m_nom},
                        {"m_dev", env.cstr.m_dev},
                        {"ca0_nom", env.cstr.ca0_nom},
                        {"ca0_dev", env.cstr.ca0_dev},
                        {"ca_init_factor", env.ca_init_factor},
                        {"t_init", env.cstr.t_init}};
    j["env"]["params"] = {{"rho", env.cstr_params.rho},
                          {"k0", env.cstr_params.k0},
                          {"ea", env.cstr_params.ea},
                          {"r_gas", env.cstr_params.r_gas},
                          {"dh_rxn", env.cstr_params.dh_rxn},
                          {"cp", env.cstr_params.cp},
                          {"ua", env.cstr_params.ua},
                          {"t0", env.cstr_params.t0},
                          {"t_max", env.cstr_params.t_max},
                          {"th_min", env.cstr_params.th_min},
                          {"th_max", env.cstr_params.th_max}};
  }
  j["policy"] = {{"hidden", policy.hidden}, {"std_floor", policy.std_floor}};
  j["pretrain"] = {{"enabled", pretrain.enabled}, {"kp", pretrain.kp},
                   {"kd", pretrain.kd},           {"n_iter", pretrain.n_iter},
                   {"lr", pretrain.lr},           {"n_demos", pretrain.n_demos}};
  j["train"] = {{"n_epochs", train.n_epochs},
                {"episodes_per_epoch", train.episodes_per_epoch},
                {"gamma", train.gamma},
                {"lr",
                 {{"alpha0", train.alpha0},
                  {"decay", train.decay},
                  {"start_epoch", train.start_epoch}}},
                {"seed", train.seed},
                {"noise_pct", train.noise_pct},
                {"design_ranges", case_ranges_json(case_study, train)}};
  j["design"] = {{"bounds", case_ranges_json(case_study, design)},
                 {"epsilon_pct", design.epsilon_pct},
                 {"f_dev_tolerance", design.f_dev_tolerance},
                 {"inner_starts", design.inner_starts},
                 {"k_max", design.k_max},
                 {"err_max", design.err_max},
                 {"settling_capital", design.settling_capital},
                 {"eval_noise_pct", design.eval_noise_pct},
                 {"n_runs", design.n_runs},
                 {"noise_pct", design.noise_pct}};
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  json raw;
  try {
    in >> raw;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  return validate_config(raw);
}

TankDesignProblem make_tank_problem(const RunConfig& cfg) {
  TankDesignProblem p;
  p.grid = cfg.env.grid;
  p.epsilon_pct = cfg.design.epsilon_pct;
  p.f_nom_bounds = {cfg.design.f_nom.lo, cfg.design.f_nom.hi};
  p.f_dev_bounds = {cfg.design.f_dev.lo, cfg.design.f_dev.hi};
  p.v_tank_bounds = {cfg.design.v_tank.lo, cfg.design.v_tank.hi};
  p.v0_frac_bounds = {cfg.design.v0_frac.lo, cfg.design.v0_frac.hi};
  p.f_dev_tolerance = cfg.design.f_dev_tolerance;
  p.noise_pct = cfg.design.eval_noise_pct;
  p.inner_starts = cfg.design.inner_starts;
  p.seed = cfg.train.seed;
  return p;
}

CstrDesignProblem make_cstr_problem(const RunConfig& cfg) {
  CstrDesignProblem p;
  p.grid = cfg.env.grid;
  p.params = cfg.env.cstr_params;
  p.v_bounds = {cfg.design.v.lo, cfg.design.v.hi};
  p.m_nom_bounds = {cfg.design.m_nom.lo, cfg.design.m_nom.hi};
  p.m_dev_bounds = {cfg.design.m_dev.lo, cfg.design.m_dev.hi};
  p.ca0_nom_bounds = {cfg.design.ca0_nom.lo, cfg.design.ca0_nom.hi};
  p.ca0_dev_bounds = {cfg.design.ca0_dev.lo, cfg.design.ca0_dev.hi};
  p.ca_init_factor = cfg.env.ca_init_factor;
  p.t_init = cfg.env.cstr.t_init;
  p.err_max = cfg.design.err_max;
  p.settling_capital = cfg.design.settling_capital;
  p.k_max = cfg.design.k_max;
  p.noise_pct = cfg.design.eval_noise_pct;
  p.seed = cfg.train.seed;
  return p;
}

TrainOptions make_train_options(const RunConfig& cfg) {
  TrainOptions o;
  o.n_epochs = cfg.train.n_epochs;
  o.n_episodes = cfg.train.episodes_per_epoch;
  o.gamma = cfg.train.gamma;
  o.schedule = LrSchedule{cfg.train.alpha0, cfg.train.decay, cfg.train.start_epoch};
  o.noise_pct = cfg.train.noise_pct;
  o.seed = cfg.train.seed;
  return o;
}

}  // namespace bilevel_rl
