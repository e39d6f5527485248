#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdshape/feedback.hpp"
#include "crowdshape/gridworld.hpp"
#include "crowdshape/oracle.hpp"
#include "crowdshape/reliability.hpp"
#include "crowdshape/tabular_rl.hpp"

namespace crowdshape {

struct AgentConfig {
  QLearningParams ql_params{};
  bool estimate_consistency = true;
  std::optional<double> fixed_c;  // required iff estimation is off
  EmConfig em_config{};
  double zeta = 0.98;
  int max_steps_per_episode = 200;

  void validate() const;
};

/// Everything the agent keeps about one trainer.
struct TrainerState {
  TrainerProfile profile;
  ReliabilityTracker tracker;
  FeedbackTally tally;
};

/// Fresh per-trainer state: c_hat 0.5 (or fixed_c when estimation is off), lambda 0.
TrainerState make_trainer_state(const std::string& trainer_id, const AgentConfig& config,
                                std::optional<double> true_c = std::nullopt);

struct SimulatedTrainer {
  OracleTrainerConfig config;
  Rng rng;
};

struct EpisodeResult {
  double total_reward = 0.0;
  int steps = 0;
  TerminalKind terminal_kind = TerminalKind::None;
  std::vector<double> c_hat;  // per trainer, at episode end
  std::uint64_t feedback_events = 0;

  friend bool operator==(const EpisodeResult&, const EpisodeResult&) = default;
};

/// Optional per-event outputs of a training run.
struct EpisodeSinks {
  std::ostream* feedback_log = nullptr;
  std::ostream* diagnostics = nullptr;
  std::uint64_t trial = 0;
};

/// The policy the agent samples from at `state`: pi_R alone when there are no
/// trainers, otherwise combine_policies(multi_trainer_policy, pi_R).
ActionDistribution shaped_policy(StateId s, const ActionSet& legal, const QTable& q,
                                 std::span<const TrainerState> trainers, const AgentConfig& config);

Action select_action(StateId s, const ActionSet& legal, const QTable& q, std::span<const TrainerState> trainers,
                     const AgentConfig& config, Rng& rng);

/// Applies one right/wrong label for (s,a) to a trainer: tally first, then the
/// reliability update when estimation is on. Returns diagnostics when an
/// update ran.
std::optional<FeedbackEventDiagnostics> apply_feedback(TrainerState& trainer, StateId s, Action a, FeedbackLabel label,
                                                       const ActionSet& legal, const QTable& q,
                                                       const AgentConfig& config);

/// One episode: select, step, Q-update, then feedback from every simulated
/// trainer on the executed pair. `simulated` is index-aligned with `trainers`.
EpisodeResult run_episode(const GridWorld& world, const OraclePolicy* oracle, std::span<SimulatedTrainer> simulated,
                          QTable& q, std::span<TrainerState> trainers, const AgentConfig& config, Rng& agent_rng,
                          Rng& env_rng, std::uint64_t episode = 0, const EpisodeSinks* sinks = nullptr);

/// Streams of one trial, all derived from (master_seed, trial).
struct TrialSeeds {
  std::uint64_t master_seed = 0;
  std::uint64_t trial = 0;
};

/// Fresh Q-table, tallies and trackers; n_episodes episodes in order.
std::vector<EpisodeResult> train(const GridWorld& world, const OraclePolicy* oracle, const AgentConfig& config,
                                 std::uint64_t n_episodes, std::span<const OracleTrainerConfig> trainer_configs,
                                 TrialSeeds seeds, const EpisodeSinks* sinks = nullptr);

/// Per-trial result CSV: episode,total_reward,steps,terminal_kind,c_hat_1..c_hat_N
void write_trial_csv(std::ostream& out, std::span<const EpisodeResult> results, std::size_t n_trainers);
std::vector<EpisodeResult> read_trial_csv(std::istream& in);

}  // namespace crowdshape
