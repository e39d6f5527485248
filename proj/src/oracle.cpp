#include "crowdshape/oracle.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace crowdshape {

using nlohmann::json;

OraclePolicy::OraclePolicy(GridWorld world, QTable table) : world_(std::move(world)), table_(std::move(table)) {}

Action OraclePolicy::optimal_action(StateId s) const {
  const ActionSet legal = world_.legal_actions(s);
  return greedy_action(table_.row(s, legal));
}

OracleVerification verify_oracle(const OraclePolicy& oracle, int rollouts, int max_steps, std::uint64_t seed) {
  const GridWorld& world = oracle.world();
  OracleVerification v;
  double total = 0.0;
  for (int k = 0; k < rollouts; ++k) {
    Rng ghost(derive_seed(seed, static_cast<std::uint64_t>(k), kEnvStream));
    GridState state = world.reset();
    double ret = 0.0;
    TerminalKind kind = TerminalKind::None;
    for (int t = 0; t < max_steps; ++t) {
      const Action a = oracle.optimal_action(world.encode(state));
      const StepOutcome out = world.step(state, a, ghost);
      ret += out.reward;
      state = out.next_state;
      if (out.terminal) {
        kind = out.terminal_kind;
        break;
      }
    }
    ++v.rollouts;
    if (kind == TerminalKind::Cleared) ++v.cleared;
    total += ret;
  }
  v.mean_return = rollouts > 0 ? total / rollouts : 0.0;
  return v;
}

OraclePolicy build_oracle(const GridWorld& world, const OracleBuildOptions& options,
                          OracleVerification* verification) {
  require(options.episodes >= 1, "oracle needs at least one training episode");
  require(options.max_steps_per_episode >= 1, "oracle step cap must be positive");
  options.params.validate();

  QTable q;
  Rng env(derive_seed(options.seed, 0, kEnvStream));
  Rng agent(derive_seed(options.seed, 0, kAgentStream));
  for (std::uint64_t ep = 0; ep < options.episodes; ++ep) {
    GridState state = world.reset();
    for (int t = 0; t < options.max_steps_per_episode; ++t) {
      const StateId s = world.encode(state);
      const ActionSet legal = world.legal_actions(state);
      const Action a = sample_action(boltzmann_policy(q.row(s, legal), options.params.tau), agent);
      const StepOutcome out = world.step(state, a, env);
      const StateId s_next = world.encode(out.next_state);
      q_update(q, s, a, out.reward, s_next, world.legal_actions(out.next_state), out.terminal, options.params);
      state = out.next_state;
      if (out.terminal) break;
    }
  }

  OraclePolicy oracle(world, std::move(q));
  const OracleVerification v = verify_oracle(oracle, options.verification_rollouts, options.max_steps_per_episode,
                                             derive_seed(options.seed, 1, kEnvStream));
  if (verification) *verification = v;
  if (v.cleared < v.rollouts) {
    throw OracleQualityError("oracle greedy policy cleared " + std::to_string(v.cleared) + "/" +
                             std::to_string(v.rollouts) + " verification rollouts after " +
                             std::to_string(options.episodes) + " episodes (mean return " +
                             format_double(v.mean_return) + ")");
  }
  return oracle;
}

std::string layout_fingerprint(const Layout& layout) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(layout.to_text())));
  return buf;
}

void save_oracle(const OraclePolicy& oracle, const OracleManifest& manifest, const std::string& path) {
  save_qtable(oracle.q_table(), path);
  json j = {
      {"layout_hash", manifest.layout_hash},
      {"ghost_policy", manifest.ghost_policy},
      {"allow_stay", manifest.allow_stay},
      {"episodes", manifest.episodes},
      {"seed", manifest.seed},
      {"alpha_q", manifest.params.alpha_q},
      {"gamma", manifest.params.gamma},
      {"tau", manifest.params.tau},
      {"max_steps_per_episode", manifest.max_steps_per_episode},
      {"verification_rollouts", manifest.verification_rollouts},
      {"verification_cleared", manifest.verification_cleared},
  };
  std::ofstream out(path + ".manifest.json");
  if (!out) throw IoError("cannot write oracle manifest: " + path + ".manifest.json");
  out << j.dump(2) << '\n';
}

OraclePolicy load_oracle(const GridWorld& world, const std::string& path, OracleManifest* manifest) {
  std::ifstream in(path + ".manifest.json");
  if (!in) throw IoError("cannot open oracle manifest: " + path + ".manifest.json");
  OracleManifest m;
  try {
    const json j = json::parse(in);
    m.layout_hash = j.at("layout_hash").get<std::string>();
    m.ghost_policy = j.at("ghost_policy").get<std::string>();
    m.allow_stay = j.at("allow_stay").get<bool>();
    m.episodes = j.at("episodes").get<std::uint64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.params.alpha_q = j.at("alpha_q").get<double>();
    m.params.gamma = j.at("gamma").get<double>();
    m.params.tau = j.at("tau").get<double>();
    m.max_steps_per_episode = j.at("max_steps_per_episode").get<int>();
    m.verification_rollouts = j.value("verification_rollouts", 0);
    m.verification_cleared = j.value("verification_cleared", 0);
  } catch (const json::exception& e) {
    throw IoError("malformed oracle manifest: " + std::string(e.what()));
  }
  if (m.layout_hash != layout_fingerprint(world.layout())) {
    throw ConfigError("oracle " + path + " was built for a different layout");
  }
  if (m.ghost_policy != to_string(world.options().ghost_policy) || m.allow_stay != world.options().allow_stay) {
    throw ConfigError("oracle " + path + " was built with different environment options");
  }
  if (manifest) *manifest = m;
  return OraclePolicy(world, load_qtable(path));
}

void OracleTrainerConfig::validate() const {
  if (!(likelihood >= 0.0 && likelihood <= 1.0)) throw ConfigError("feedback likelihood must lie in [0,1]");
  if (!(consistency >= 0.0 && consistency <= 1.0)) throw ConfigError("trainer consistency must lie in [0,1]");
}

std::optional<FeedbackSignal> oracle_feedback(const OraclePolicy& oracle, const OracleTrainerConfig& config,
                                              StateId s, Action a, Rng& rng) {
  const double u_emit = uniform01(rng);
  const double u_corrupt = uniform01(rng);
  if (!(u_emit < config.likelihood)) return std::nullopt;

  const bool optimal = oracle.optimal_action(s) == a;
  const double c = config.consistency;
  const bool agree = c >= 0.5 ? u_corrupt < c : u_corrupt < 1.0 - c;
  const bool truthful = agree == (c >= 0.5);
  const bool right = truthful ? optimal : !optimal;

  FeedbackSignal sig;
  sig.trainer_id = config.trainer_id;
  sig.state = s;
  sig.action = a;
  sig.label = right ? FeedbackLabel::Right : FeedbackLabel::Wrong;
  return sig;
}

}  // namespace crowdshape
