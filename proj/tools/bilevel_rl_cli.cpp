#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "bilevel_rl/config.hpp"
#include "bilevel_rl/errors.hpp"
#include "bilevel_rl/pipeline.hpp"

namespace {

// 0 success, 1 infeasible design, 2 configuration/usage error.
constexpr int kOk = 0;
constexpr int kInfeasible = 1;
constexpr int kConfigError = 2;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int runs = 0;
  bool runs_set = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
  cmd->add_option("--out", args.out_dir, "artifact directory")->required();
  cmd->add_option("--seed", args.seed, "seed override")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--runs", args.runs, "Monte-Carlo run count override")
      ->each([&](const std::string&) { args.runs_set = true; });
  cmd->add_flag("--quiet", args.quiet, "suppress progress logging");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bi-level process design with an embedded policy-gradient controller"};
  app.require_subcommand(1);
  app.usage("bilevel-rl [pretrain|train|design|evaluate|pipeline] --config FILE --out DIR");

  CommonArgs args;
  CLI::App* cmd_pretrain = app.add_subcommand("pretrain", "behavioral cloning from PD demos");
  CLI::App* cmd_train = app.add_subcommand("train", "Reinforce with baseline");
  CLI::App* cmd_design = app.add_subcommand("design", "solve the outer design problem");
  CLI::App* cmd_evaluate = app.add_subcommand("evaluate", "Monte-Carlo evaluation report");
  CLI::App* cmd_pipeline = app.add_subcommand("pipeline", "all stages in order");
  for (CLI::App* cmd : {cmd_pretrain, cmd_train, cmd_design, cmd_evaluate, cmd_pipeline})
    add_common(cmd, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return kOk;
    }
    std::cerr << e.what() << "\n\n" << app.help();
    return kConfigError;
  }

  try {
    const bilevel_rl::RunConfig cfg = bilevel_rl::load_config(args.config_path);
    bilevel_rl::StageOptions opts;
    opts.out_dir = args.out_dir;
    opts.quiet = args.quiet;
    if (args.seed_set) opts.seed = args.seed;
    if (args.runs_set) opts.runs = args.runs;

    if (cmd_pretrain->parsed()) bilevel_rl::run_pretrain(cfg, opts);
    if (cmd_train->parsed()) bilevel_rl::run_train(cfg, opts);
    if (cmd_design->parsed()) bilevel_rl::run_design(cfg, opts);
    if (cmd_evaluate->parsed()) bilevel_rl::run_evaluate(cfg, opts);
    if (cmd_pipeline->parsed()) bilevel_rl::run_pipeline(cfg, opts);
    return kOk;
  } catch (const bilevel_rl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const bilevel_rl::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const bilevel_rl::SolverError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}
