#ifndef BILEVEL_RL_PIPELINE_HPP
#define BILEVEL_RL_PIPELINE_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "bilevel_rl/config.hpp"
#include "bilevel_rl/design.hpp"
#include "bilevel_rl/policy.hpp"
#include "bilevel_rl/training.hpp"

namespace bilevel_rl {

struct StageOptions {
  std::string out_dir;
  bool quiet = false;
  std::optional<std::uint64_t> seed;  // overrides train.seed
  std::optional<int> runs;            // overrides design.n_runs
};

RunConfig effective_config(RunConfig cfg, const StageOptions& opts);

// The nominal environment described by the config's env section.
std::unique_ptr<Environment> make_nominal_env(const RunConfig& cfg);
// Per-episode design-sampling factory for training and demo generation.
EpisodeFactory make_training_factory(const RunConfig& cfg);
// The demonstration PD controller for the configured case.
std::unique_ptr<Controller> make_demo_controller(const RunConfig& cfg);

PolicyNetwork make_policy_network(const RunConfig& cfg);

/// Stage entry points. Each reads its inputs from and writes its artifacts to
/// opts.out_dir: pretrain -> policy_pretrained.json, pretrain.csv;
/// train -> policy.json, train.csv; design -> design.json;
/// evaluate -> eval.csv, summary.json, traj.csv. Every stage writes
/// config_effective.json first.
void run_pretrain(const RunConfig& cfg, const StageOptions& opts);
void run_train(const RunConfig& cfg, const StageOptions& opts);
void run_design(const RunConfig& cfg, const StageOptions& opts);
void run_evaluate(const RunConfig& cfg, const StageOptions& opts);
void run_pipeline(const RunConfig& cfg, const StageOptions& opts);

}  // namespace bilevel_rl

#endif
