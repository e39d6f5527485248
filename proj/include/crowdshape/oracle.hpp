#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "crowdshape/feedback.hpp"
#include "crowdshape/gridworld.hpp"
#include "crowdshape/tabular_rl.hpp"

namespace crowdshape {

struct OracleBuildOptions {
  std::uint64_t episodes = 10000;
  QLearningParams params{};
  int max_steps_per_episode = 200;
  /// Greedy rollouts from the start state that must all clear the board.
  int verification_rollouts = 100;
  std::uint64_t seed = 7;
};

struct OracleVerification {
  int rollouts = 0;
  int cleared = 0;
  double mean_return = 0.0;
};

/// Frozen Q-table plus the greedy policy read off it (ties to lowest ActionId).
class OraclePolicy {
 public:
  OraclePolicy(GridWorld world, QTable table);

  [[nodiscard]] Action optimal_action(StateId s) const;
  [[nodiscard]] const QTable& q_table() const { return table_; }
  [[nodiscard]] const GridWorld& world() const { return world_; }

 private:
  GridWorld world_;
  QTable table_;
};

/// Plays `rollouts` greedy episodes from the start state with ghost streams
/// derived from `seed`.
OracleVerification verify_oracle(const OraclePolicy& oracle, int rollouts, int max_steps, std::uint64_t seed);

/// Tabular Q-learning with Boltzmann exploration for `options.episodes`
/// episodes, then a greedy verification. Throws OracleQualityError when any
/// verification rollout fails to clear the board.
OraclePolicy build_oracle(const GridWorld& world, const OracleBuildOptions& options,
                          OracleVerification* verification = nullptr);

struct OracleManifest {
  std::string layout_hash;  // hex FNV-1a of Layout::to_text()
  std::string ghost_policy = "random";
  bool allow_stay = true;
  std::uint64_t episodes = 0;
  std::uint64_t seed = 0;
  QLearningParams params{};
  int max_steps_per_episode = 200;
  int verification_rollouts = 0;
  int verification_cleared = 0;
};

std::string layout_fingerprint(const Layout& layout);

/// Writes `<path>` (Q-table CSV) and `<path>.manifest.json`.
void save_oracle(const OraclePolicy& oracle, const OracleManifest& manifest, const std::string& path);

/// Loads a persisted oracle, rejecting it when the manifest does not match `world`.
OraclePolicy load_oracle(const GridWorld& world, const std::string& path, OracleManifest* manifest = nullptr);

struct OracleTrainerConfig {
  std::string trainer_id;
  double likelihood = 0.2;   // L
  double consistency = 0.8;  // C*
  std::uint64_t seed = 0;

  void validate() const;
};

/// Simulated trainer. Each query draws two uniforms from the trainer's own
/// stream: u1 decides emission (u1 < L), u2 decides corruption. The draw is
/// compared against max(C*, 1 - C*) so that trainers at C* and 1 - C* sharing a
/// stream emit exactly inverted labels.
std::optional<FeedbackSignal> oracle_feedback(const OraclePolicy& oracle, const OracleTrainerConfig& config,
                                              StateId s, Action a, Rng& rng);

}  // namespace crowdshape
