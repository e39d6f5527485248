#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "crowdshape/agent.hpp"

namespace crowdshape::gateway {

using nlohmann::json;

enum class ErrorCode { NotFound, Conflict, Validation, WindowExpired, Unauthorized };

std::string_view to_string(ErrorCode code);
/// HTTP status used for each error code.
int http_status(ErrorCode code);

class GatewayError : public std::runtime_error {
 public:
  GatewayError(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
  [[nodiscard]] ErrorCode code() const { return code_; }
  [[nodiscard]] json to_json() const;

 private:
  ErrorCode code_;
};

enum class SessionState { Created, Running, Paused, Finished };
std::string_view to_string(SessionState s);

enum class TrainerKind { Human, Simulated };
std::string_view to_string(TrainerKind k);

struct SessionOptions {
  Layout layout = default_layout();
  GridWorldOptions world_options{};
  AgentConfig agent{};
  /// Agent steps per second; 0 means the session only advances on explicit step requests.
  double pace = 2.0;
  /// Number of most recent steps that accept feedback.
  std::size_t window = 5;
  std::uint64_t seed = 1;
  /// 0 means unbounded.
  std::uint64_t max_episodes = 0;
  /// A snapshot message goes out every this many ticks or manual steps.
  int snapshot_every = 4;
  std::uint64_t oracle_episodes = 20000;
  std::uint64_t oracle_seed = 7;
};

/// Builds SessionOptions from a create_session_request body. Throws
/// GatewayError(Validation).
SessionOptions parse_create_request(const json& request);

/// Supplies the oracle behind simulated trainers; may be called concurrently.
using OracleProvider =
    std::function<std::shared_ptr<const OraclePolicy>(const GridWorld&, std::uint64_t episodes, std::uint64_t seed)>;

/// Builds (and caches) verified oracles with build_oracle.
OracleProvider caching_oracle_provider();

/// One live training session: a single agent loop plus its trainers. All
/// mutating calls are serialized by one mutex, so feedback lands between agent
/// steps in a total order. stats() reads a published snapshot and never waits
/// on the loop.
class Session {
 public:
  using Sink = std::function<void(const std::string& message)>;

  Session(std::string id, SessionOptions options, OracleProvider oracles, std::function<std::string()> token_source);

  [[nodiscard]] const std::string& id() const { return id_; }
  [[nodiscard]] double pace() const { return options_.pace; }
  [[nodiscard]] SessionState state() const;

  json descriptor() const;
  json start();
  json pause();
  json stop();
  json register_trainer(const json& request);
  json submit_feedback(const json& request);
  json stats() const;
  /// Manual stepping (pace 0 only). Returns the step message.
  json step();
  /// Timer entry point for paced sessions: steps when running, and emits a
  /// snapshot every snapshot_every ticks whatever the state.
  void tick();

  /// Sends a hello message (descriptor and stats) to `sink` and then every
  /// subsequent stream message. Sinks run under the session lock and must not block.
  std::uint64_t subscribe(Sink sink);
  void unsubscribe(std::uint64_t handle);

 private:
  struct Trainer {
    TrainerKind kind = TrainerKind::Human;
    std::string token;
    std::optional<OracleTrainerConfig> oracle_config;
    std::optional<Rng> rng;
  };
  struct WindowEntry {
    std::uint64_t seq = 0;
    StateId state = 0;
    Action action = Action::North;
    ActionSet legal;
  };

  json lifecycle_locked(SessionState next);
  json step_locked();
  json descriptor_locked() const;
  json stats_locked() const;
  void publish_locked(const json& message);
  void publish_snapshot_locked();
  void refresh_stats_locked();
  std::size_t trainer_index_locked(const std::string& trainer_id) const;
  std::string token_for(std::uint64_t seq) const;

  const std::string id_;
  const SessionOptions options_;
  const GridWorld world_;
  OracleProvider oracles_;
  std::function<std::string()> token_source_;

  mutable std::mutex mu_;
  SessionState state_ = SessionState::Created;
  std::shared_ptr<const OraclePolicy> oracle_;
  QTable q_;
  std::vector<TrainerState> trainers_;
  std::vector<Trainer> trainer_meta_;
  Rng env_rng_;
  Rng agent_rng_;
  GridState grid_;
  std::uint64_t episode_ = 0;
  int t_ = 0;
  double episode_return_ = 0.0;
  std::uint64_t episodes_completed_ = 0;
  std::uint64_t steps_issued_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t ticks_ = 0;
  std::deque<WindowEntry> window_;
  std::map<std::uint64_t, Sink> sinks_;
  std::uint64_t next_sink_ = 1;

  mutable std::mutex snapshot_mu_;
  std::shared_ptr<const json> snapshot_;
};

struct ManagerOptions {
  /// Seeds trainer-token generation; unset draws from std::random_device.
  std::optional<std::uint64_t> token_seed;
  OracleProvider oracles;
};

/// Registry of sessions; ids are "s1", "s2", ... in creation order.
class SessionManager {
 public:
  explicit SessionManager(ManagerOptions options = {});

  std::shared_ptr<Session> create(const json& request);
  /// Throws GatewayError(NotFound).
  std::shared_ptr<Session> get(const std::string& id) const;
  std::vector<std::shared_ptr<Session>> list() const;

 private:
  std::string next_token();

  ManagerOptions options_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  Rng token_rng_;
};

/// Lower-case wire names for actions.
std::string action_wire_name(Action a);
Action action_from_wire(std::string_view name);

}  // namespace crowdshape::gateway
