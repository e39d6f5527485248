#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crowdshape/agent.hpp"

namespace crowdshape {

struct TrainerSpec {
  double likelihood = 0.2;
  double consistency = 0.8;
};

/// One arm of an experiment: a trainer pool plus how the agent treats it.
struct ExperimentSpec {
  std::string name = "experiment";
  std::vector<TrainerSpec> trainer_configs;
  bool estimate_consistency = true;
  std::optional<double> fixed_c;
  std::uint64_t n_trials = 30;
  std::uint64_t n_episodes = 2000;
  std::size_t smoothing_window = 21;
  std::uint64_t master_seed = 1;
  int max_steps_per_episode = 200;

  /// Throws ConfigError.
  void validate() const;
  [[nodiscard]] AgentConfig agent_config() const;
  [[nodiscard]] std::vector<OracleTrainerConfig> oracle_trainers() const;
};

struct CurveSet {
  std::string name;
  std::uint64_t n_trials = 0;
  std::size_t smoothing_window = 1;
  /// Episode index of reward_smoothed[0]; (window - 1) / 2.
  std::size_t smoothing_offset = 0;
  std::vector<double> reward_mean;      // per episode, across trials
  std::vector<double> reward_stderr;    // per episode, across trials
  std::vector<double> reward_smoothed;  // moving_average(reward_mean, window)
  std::vector<std::vector<double>> c_hat_mean;  // [trainer][episode], unsmoothed
  /// Sum of raw episode rewards, one entry per trial in trial order.
  std::vector<double> trial_auc;

  [[nodiscard]] std::size_t n_episodes() const { return reward_mean.size(); }
  friend bool operator==(const CurveSet&, const CurveSet&) = default;
};

/// Centered moving average without edge padding; output has
/// series.size() - window + 1 entries. Throws ContractViolation for an even
/// window or one longer than the series.
std::vector<double> moving_average(std::span<const double> series, std::size_t window);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean; 0 for a single sample
};

MeanSe mean_se(std::span<const double> samples);

struct RunOptions {
  std::size_t parallelism = 1;
  /// When set, every trial's episode rows are written to
  /// `<trial_dir>/<name>.trial_<k>.csv`.
  std::string trial_dir;
  /// Called from worker threads after each finished trial.
  std::function<void(std::uint64_t trial)> on_trial_done;
  /// Execution order of trials; empty means 0..n_trials-1. Results do not
  /// depend on it.
  std::vector<std::uint64_t> trial_order;
};

/// Runs spec.n_trials independent train() calls on a worker pool and reduces
/// them in trial order. Trial k uses TrialSeeds{spec.master_seed, k}.
CurveSet run_experiment(const GridWorld& world, const OraclePolicy* oracle, const ExperimentSpec& spec,
                        const RunOptions& options = {});

/// Curve CSV: `#` metadata lines, then
/// episode,reward_mean,reward_stderr,reward_smoothed,c_hat_1..c_hat_N
/// with reward_smoothed empty outside the smoothed range.
void export_curves(const CurveSet& curves, const std::string& path);
CurveSet parse_curves(std::string_view text);
CurveSet load_curves(const std::string& path);

/// SVG line plots: reward curves of several arms on one chart, and one
/// c_hat series per trainer for a single arm.
void plot_reward(std::span<const CurveSet> arms, const std::string& path, const std::string& title);
void plot_c_hat(const CurveSet& curves, const std::string& path, const std::string& title);

/// Writes `<dir>/reward.svg` and `<dir>/<arm>.c_hat.svg` for every arm with trainers.
std::vector<std::string> plot_curves(std::span<const CurveSet> arms, const std::string& dir, const std::string& title);

// ---------------------------------------------------------------------------
// Scenario files

struct OracleSource {
  std::uint64_t episodes = 10000;
  std::uint64_t seed = 7;
  std::string path;  // prebuilt oracle; empty means build on demand
};

struct Scenario {
  std::string name;
  std::string layout_path;  // empty means the shipped default layout
  GridWorldOptions world_options{};
  OracleSource oracle{};
  std::vector<ExperimentSpec> arms;
};

/// Parses a JSON scenario. Relative paths resolve against base_dir.
/// Throws ConfigError.
Scenario parse_scenario(std::string_view text, const std::string& base_dir = "");
Scenario load_scenario(const std::string& path);

/// "paper" = 200 trials x 2000 episodes, "desk" = 30 x 2000.
void apply_preset(Scenario& scenario, std::string_view preset);

Layout scenario_layout(const Scenario& scenario);

/// Loads scenario.oracle.path when set, otherwise builds one.
OraclePolicy scenario_oracle(const GridWorld& world, const Scenario& scenario, OracleVerification* verification = nullptr);

}  // namespace crowdshape
