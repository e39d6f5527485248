#include "crowdshape/agent.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace crowdshape {

void AgentConfig::validate() const {
  ql_params.validate();
  em_config.validate();
  if (estimate_consistency == fixed_c.has_value()) {
    throw ConfigError("fixed_c must be set exactly when consistency estimation is off");
  }
  if (fixed_c && !(*fixed_c >= em_config.eps && *fixed_c <= 1.0 - em_config.eps)) {
    throw ConfigError("fixed_c outside the consistency clamp range");
  }
  if (!(zeta > 0.0 && zeta <= 1.0)) throw ConfigError("zeta must lie in (0,1]");
  if (max_steps_per_episode < 1) throw ConfigError("max_steps_per_episode must be positive");
}

TrainerState make_trainer_state(const std::string& trainer_id, const AgentConfig& config,
                                std::optional<double> true_c) {
  TrainerState t;
  t.profile.trainer_id = trainer_id;
  t.profile.true_c = true_c;
  t.tracker.zeta = config.zeta;
  t.tracker.eps = config.em_config.eps;
  t.tracker.c = config.em_config.c_init;
  t.profile.c_hat = config.fixed_c.value_or(t.tracker.c);
  t.profile.lambda = 0.0;
  return t;
}

ActionDistribution shaped_policy(StateId s, const ActionSet& legal, const QTable& q,
                                 std::span<const TrainerState> trainers, const AgentConfig& config) {
  const ActionDistribution pi_r = boltzmann_policy(q.row(s, legal), config.ql_params.tau);
  if (trainers.empty()) return pi_r;

  std::vector<TrainerEvidence> evidence;
  evidence.reserve(trainers.size());
  bool any_feedback = false;
  for (const auto& t : trainers) {
    if (t.tally.has_state(s)) any_feedback = true;
    evidence.push_back({t.tally.delta_row(s, legal), t.profile.c_hat});
  }
  if (!any_feedback) return pi_r;
  return combine_policies(multi_trainer_policy(evidence, config.em_config.eps), pi_r);
}

Action select_action(StateId s, const ActionSet& legal, const QTable& q, std::span<const TrainerState> trainers,
                     const AgentConfig& config, Rng& rng) {
  require(!legal.empty(), "no legal actions to select from");
  return sample_action(shaped_policy(s, legal, q, trainers, config), rng);
}

std::optional<FeedbackEventDiagnostics> apply_feedback(TrainerState& trainer, StateId s, Action a, FeedbackLabel label,
                                                       const ActionSet& legal, const QTable& q,
                                                       const AgentConfig& config) {
  require(legal.contains(a), "feedback on an action that is not legal in the state");
  trainer.tally.record(s, a, label);
  if (!config.estimate_consistency) return std::nullopt;
  const QRow q_row = q.row(s, legal);
  const ActionDistribution p1q = optimality_belief(q_row, config.ql_params.tau);
  return observe_feedback_event(trainer.profile, trainer.tracker, s, a, q_row, p1q, trainer.tally.slice(s, legal),
                                config.em_config);
}

EpisodeResult run_episode(const GridWorld& world, const OraclePolicy* oracle, std::span<SimulatedTrainer> simulated,
                          QTable& q, std::span<TrainerState> trainers, const AgentConfig& config, Rng& agent_rng,
                          Rng& env_rng, std::uint64_t episode, const EpisodeSinks* sinks) {
  require(simulated.size() == trainers.size(), "simulated trainers and trainer states are not aligned");
  require(simulated.empty() || oracle != nullptr, "simulated trainers need an oracle");

  EpisodeResult result;
  GridState state = world.reset();
  for (int t = 0; t < config.max_steps_per_episode; ++t) {
    const StateId s = world.encode(state);
    const ActionSet legal = world.legal_actions(state);
    const Action a = select_action(s, legal, q, trainers, config, agent_rng);
    const StepOutcome out = world.step(state, a, env_rng);
    const StateId s_next = world.encode(out.next_state);
    q_update(q, s, a, out.reward, s_next, world.legal_actions(out.next_state), out.terminal, config.ql_params);
    result.total_reward += out.reward;
    result.steps = t + 1;

    for (std::size_t n = 0; n < simulated.size(); ++n) {
      auto signal = oracle_feedback(*oracle, simulated[n].config, s, a, simulated[n].rng);
      if (!signal) continue;
      signal->timestep = static_cast<std::uint64_t>(t);
      ++result.feedback_events;
      auto diag = apply_feedback(trainers[n], s, a, signal->label, legal, q, config);
      if (sinks && sinks->feedback_log) {
        write_feedback_log_record(*sinks->feedback_log, FeedbackLogRecord{sinks->trial, episode, *signal});
      }
      if (diag && sinks && sinks->diagnostics) {
        diag->episode = episode;
        write_diagnostics_row(*sinks->diagnostics, *diag);
      }
    }

    state = out.next_state;
    if (out.terminal) {
      result.terminal_kind = out.terminal_kind;
      break;
    }
  }
  result.c_hat.reserve(trainers.size());
  for (const auto& tr : trainers) result.c_hat.push_back(tr.profile.c_hat);
  return result;
}

std::vector<EpisodeResult> train(const GridWorld& world, const OraclePolicy* oracle, const AgentConfig& config,
                                 std::uint64_t n_episodes, std::span<const OracleTrainerConfig> trainer_configs,
                                 TrialSeeds seeds, const EpisodeSinks* sinks) {
  require(n_episodes >= 1, "train needs at least one episode");
  config.validate();

  QTable q;
  std::vector<TrainerState> trainers;
  std::vector<SimulatedTrainer> simulated;
  for (std::size_t n = 0; n < trainer_configs.size(); ++n) {
    trainer_configs[n].validate();
    trainers.push_back(make_trainer_state(trainer_configs[n].trainer_id, config, trainer_configs[n].consistency));
    simulated.push_back({trainer_configs[n], Rng(derive_seed(seeds.master_seed, seeds.trial, kTrainerStreamBase + n))});
  }
  Rng env_rng(derive_seed(seeds.master_seed, seeds.trial, kEnvStream));
  Rng agent_rng(derive_seed(seeds.master_seed, seeds.trial, kAgentStream));

  std::vector<EpisodeResult> results;
  results.reserve(n_episodes);
  for (std::uint64_t ep = 0; ep < n_episodes; ++ep) {
    results.push_back(run_episode(world, oracle, simulated, q, trainers, config, agent_rng, env_rng, ep, sinks));
  }
  return results;
}

void write_trial_csv(std::ostream& out, std::span<const EpisodeResult> results, std::size_t n_trainers) {
  out << "episode,total_reward,steps,terminal_kind";
  for (std::size_t n = 1; n <= n_trainers; ++n) out << ",c_hat_" << n;
  out << '\n';
  for (std::size_t ep = 0; ep < results.size(); ++ep) {
    const auto& r = results[ep];
    require(r.c_hat.size() == n_trainers, "episode result has the wrong trainer count");
    out << ep << ',' << format_double(r.total_reward) << ',' << r.steps << ',' << to_string(r.terminal_kind);
    for (double c : r.c_hat) out << ',' << format_double(c);
    out << '\n';
  }
}

std::vector<EpisodeResult> read_trial_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty trial file");
  std::size_t n_trainers = 0;
  for (std::size_t pos = 0; (pos = line.find("c_hat_", pos)) != std::string::npos; ++pos) ++n_trainers;

  std::vector<EpisodeResult> results;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 4 + n_trainers) throw IoError("malformed trial row: " + line);
    EpisodeResult r;
    r.total_reward = parse_double(f[1]);
    r.steps = std::stoi(f[2]);
    r.terminal_kind = terminal_kind_from_string(f[3]);
    for (std::size_t n = 0; n < n_trainers; ++n) r.c_hat.push_back(parse_double(f[4 + n]));
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace crowdshape
