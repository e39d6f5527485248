#include "crowdshape/gateway/session.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>

#include "crowdshape/gateway/schema.hpp"

namespace crowdshape::gateway {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::WindowExpired: return "window_expired";
    case ErrorCode::Unauthorized: return "unauthorized";
  }
  return "validation";
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Conflict: return 409;
    case ErrorCode::Validation: return 400;
    case ErrorCode::WindowExpired: return 410;
    case ErrorCode::Unauthorized: return 401;
  }
  return 400;
}

json GatewayError::to_json() const { return {{"error", {{"code", to_string(code_)}, {"message", what()}}}}; }

std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::Created: return "created";
    case SessionState::Running: return "running";
    case SessionState::Paused: return "paused";
    case SessionState::Finished: return "finished";
  }
  return "created";
}

std::string_view to_string(TrainerKind k) { return k == TrainerKind::Human ? "human" : "simulated"; }

std::string action_wire_name(Action a) {
  std::string s(crowdshape::to_string(a));
  for (char& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

Action action_from_wire(std::string_view name) {
  for (Action a : kAllActions) {
    if (action_wire_name(a) == name) return a;
  }
  throw GatewayError(ErrorCode::Validation, "unknown action: " + std::string(name));
}

namespace {

void check_schema(std::string_view message, const json& value) {
  const auto errors = SchemaChecker::builtin().check_message(message, value);
  if (errors.empty()) return;
  std::string text;
  for (const auto& e : errors) text += (text.empty() ? "" : "; ") + e;
  throw GatewayError(ErrorCode::Validation, text);
}

json cell_json(Cell c) { return {{"row", c.row}, {"col", c.col}}; }

std::vector<std::string> grid_lines(const std::string& rendered) {
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : rendered) {
    if (ch == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

}  // namespace

SessionOptions parse_create_request(const json& request) {
  check_schema("create_session_request", request);
  SessionOptions o;
  try {
    if (request.contains("layout")) o.layout = parse_layout(request.at("layout").get<std::string>());
    if (request.contains("ghost_policy")) {
      o.world_options.ghost_policy = ghost_policy_from_string(request.at("ghost_policy").get<std::string>());
    }
    o.world_options.allow_stay = request.value("allow_stay", o.world_options.allow_stay);
    o.pace = request.value("pace", o.pace);
    const auto window = request.value("window", static_cast<std::int64_t>(o.window));
    const auto every = request.value("snapshot_every", static_cast<std::int64_t>(o.snapshot_every));
    if (!(std::isfinite(o.pace) && o.pace >= 0.0)) throw ConfigError("pace must be finite and non-negative");
    if (window < 1) throw ConfigError("window must be at least 1");
    if (every < 1) throw ConfigError("snapshot_every must be at least 1");
    o.window = static_cast<std::size_t>(window);
    o.snapshot_every = static_cast<int>(every);
    o.seed = request.value("seed", o.seed);
    o.max_episodes = request.value("max_episodes", o.max_episodes);
    o.agent.max_steps_per_episode = request.value("max_steps_per_episode", o.agent.max_steps_per_episode);
    o.agent.estimate_consistency = request.value("estimate_consistency", true);
    if (request.contains("fixed_c")) o.agent.fixed_c = request.at("fixed_c").get<double>();
    o.oracle_episodes = request.value("oracle_episodes", o.oracle_episodes);
    o.oracle_seed = request.value("oracle_seed", o.oracle_seed);
    if (o.oracle_episodes < 1) throw ConfigError("oracle_episodes must be at least 1");
    o.layout.validate();
    o.agent.validate();
  } catch (const ConfigError& e) {
    throw GatewayError(ErrorCode::Validation, e.what());
  } catch (const json::exception& e) {
    throw GatewayError(ErrorCode::Validation, e.what());
  }
  return o;
}

OracleProvider caching_oracle_provider() {
  struct Cache {
    std::mutex mu;
    std::map<std::string, std::shared_ptr<const OraclePolicy>> oracles;
  };
  auto cache = std::make_shared<Cache>();
  return [cache](const GridWorld& world, std::uint64_t episodes, std::uint64_t seed) {
    const std::string key = layout_fingerprint(world.layout()) + "/" +
                            std::string(to_string(world.options().ghost_policy)) + "/" +
                            (world.options().allow_stay ? "stay" : "nostay") + "/" + std::to_string(episodes) + "/" +
                            std::to_string(seed);
    std::lock_guard lock(cache->mu);
    auto& slot = cache->oracles[key];
    if (!slot) {
      OracleBuildOptions options;
      options.episodes = episodes;
      options.seed = seed;
      slot = std::make_shared<const OraclePolicy>(build_oracle(world, options));
    }
    return slot;
  };
}

// ---------------------------------------------------------------------------

namespace {

GridWorld make_world(const SessionOptions& o) {
  try {
    return GridWorld(o.layout, o.world_options);
  } catch (const ConfigError& e) {
    throw GatewayError(ErrorCode::Validation, e.what());
  }
}

}  // namespace

Session::Session(std::string id, SessionOptions options, OracleProvider oracles,
                 std::function<std::string()> token_source)
    : id_(std::move(id)),
      options_(std::move(options)),
      world_(make_world(options_)),
      oracles_(std::move(oracles)),
      token_source_(std::move(token_source)),
      env_rng_(derive_seed(options_.seed, 0, kEnvStream)),
      agent_rng_(derive_seed(options_.seed, 0, kAgentStream)),
      grid_(world_.reset()) {
  std::lock_guard lock(mu_);
  refresh_stats_locked();
}

SessionState Session::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

json Session::descriptor() const {
  std::lock_guard lock(mu_);
  return descriptor_locked();
}

json Session::descriptor_locked() const {
  json trainers = json::array();
  for (std::size_t n = 0; n < trainers_.size(); ++n) {
    json t = {{"trainer_id", trainers_[n].profile.trainer_id}, {"kind", to_string(trainer_meta_[n].kind)}};
    if (trainer_meta_[n].oracle_config) {
      t["likelihood"] = trainer_meta_[n].oracle_config->likelihood;
      t["consistency"] = trainer_meta_[n].oracle_config->consistency;
    }
    trainers.push_back(std::move(t));
  }
  json actions = json::array();
  for (Action a : kAllActions) {
    if (a != Action::Stay || world_.options().allow_stay) actions.push_back(action_wire_name(a));
  }
  json d = {{"session_id", id_},
            {"state", to_string(state_)},
            {"pace", options_.pace},
            {"window", options_.window},
            {"seed", options_.seed},
            {"episode", episode_},
            {"step", t_},
            {"max_episodes", options_.max_episodes},
            {"max_steps_per_episode", options_.agent.max_steps_per_episode},
            {"estimate_consistency", options_.agent.estimate_consistency},
            {"layout", world_.layout().to_text()},
            {"actions", std::move(actions)},
            {"trainers", std::move(trainers)}};
  if (options_.agent.fixed_c) d["fixed_c"] = *options_.agent.fixed_c;
  return d;
}

json Session::stats_locked() const {
  json trainers = json::array();
  for (std::size_t n = 0; n < trainers_.size(); ++n) {
    const auto& t = trainers_[n];
    trainers.push_back({{"trainer_id", t.profile.trainer_id},
                        {"kind", to_string(trainer_meta_[n].kind)},
                        {"c_hat", t.profile.c_hat},
                        {"lambda", t.profile.lambda},
                        {"right", t.tally.total_right()},
                        {"wrong", t.tally.total_wrong()}});
  }
  return {{"session_id", id_},
          {"state", to_string(state_)},
          {"episode", episode_},
          {"step", t_},
          {"trainers", std::move(trainers)}};
}

void Session::refresh_stats_locked() {
  auto snap = std::make_shared<const json>(stats_locked());
  std::lock_guard lock(snapshot_mu_);
  snapshot_ = std::move(snap);
}

json Session::stats() const {
  std::shared_ptr<const json> snap;
  {
    std::lock_guard lock(snapshot_mu_);
    snap = snapshot_;
  }
  return *snap;
}

void Session::publish_locked(const json& message) {
  if (sinks_.empty()) return;
  const std::string text = message.dump();
  for (const auto& [_, sink] : sinks_) sink(text);
}

void Session::publish_snapshot_locked() {
  json m = stats_locked();
  m["kind"] = "snapshot";
  m["seq"] = seq_++;
  publish_locked(m);
}

json Session::lifecycle_locked(SessionState next) {
  state_ = next;
  refresh_stats_locked();
  publish_locked({{"kind", "lifecycle"}, {"session_id", id_}, {"seq", seq_++}, {"state", to_string(state_)}});
  return {{"session_id", id_}, {"state", to_string(state_)}};
}

json Session::start() {
  std::lock_guard lock(mu_);
  if (state_ != SessionState::Created && state_ != SessionState::Paused) {
    throw GatewayError(ErrorCode::Conflict, "cannot start a " + std::string(to_string(state_)) + " session");
  }
  return lifecycle_locked(SessionState::Running);
}

json Session::pause() {
  std::lock_guard lock(mu_);
  if (state_ != SessionState::Running) {
    throw GatewayError(ErrorCode::Conflict, "cannot pause a " + std::string(to_string(state_)) + " session");
  }
  return lifecycle_locked(SessionState::Paused);
}

json Session::stop() {
  std::lock_guard lock(mu_);
  if (state_ == SessionState::Finished) throw GatewayError(ErrorCode::Conflict, "session already finished");
  return lifecycle_locked(SessionState::Finished);
}

json Session::register_trainer(const json& request) {
  check_schema("register_trainer_request", request);
  std::lock_guard lock(mu_);
  if (state_ == SessionState::Finished) throw GatewayError(ErrorCode::Conflict, "session finished");
  const std::string trainer_id = request.at("trainer_id").get<std::string>();
  if (trainer_id.empty()) throw GatewayError(ErrorCode::Validation, "trainer_id must not be empty");
  for (const auto& t : trainers_) {
    if (t.profile.trainer_id == trainer_id) throw GatewayError(ErrorCode::Conflict, "trainer already registered: " + trainer_id);
  }
  Trainer meta;
  meta.kind = request.at("kind") == "human" ? TrainerKind::Human : TrainerKind::Simulated;
  const bool has_params = request.contains("likelihood") || request.contains("consistency");
  std::optional<double> true_c;
  if (meta.kind == TrainerKind::Human) {
    if (has_params) throw GatewayError(ErrorCode::Validation, "likelihood/consistency apply to simulated trainers only");
  } else {
    if (!request.contains("likelihood") || !request.contains("consistency")) {
      throw GatewayError(ErrorCode::Validation, "simulated trainers need likelihood and consistency");
    }
    OracleTrainerConfig cfg{trainer_id, request.at("likelihood").get<double>(), request.at("consistency").get<double>(), 0};
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      throw GatewayError(ErrorCode::Validation, e.what());
    }
    if (!oracle_) oracle_ = oracles_(world_, options_.oracle_episodes, options_.oracle_seed);
    meta.oracle_config = cfg;
    meta.rng.emplace(derive_seed(options_.seed, 0, kTrainerStreamBase + trainers_.size()));
    true_c = cfg.consistency;
  }
  meta.token = token_source_();
  trainers_.push_back(make_trainer_state(trainer_id, options_.agent, true_c));
  trainer_meta_.push_back(meta);
  refresh_stats_locked();
  return {{"session_id", id_}, {"trainer_id", trainer_id}, {"kind", to_string(meta.kind)}, {"trainer_token", meta.token}};
}

std::string Session::token_for(std::uint64_t seq) const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%llx", static_cast<unsigned long long>(seq));
  return id_ + ":" + buf;
}

std::size_t Session::trainer_index_locked(const std::string& trainer_id) const {
  for (std::size_t n = 0; n < trainers_.size(); ++n) {
    if (trainers_[n].profile.trainer_id == trainer_id) return n;
  }
  throw GatewayError(ErrorCode::NotFound, "unknown trainer: " + trainer_id);
}

json Session::submit_feedback(const json& request) {
  json body = request;
  if (body.contains("kind")) body.erase("kind");
  check_schema("feedback_request", body);
  if (body.contains("session_id") && body.at("session_id") != id_) {
    throw GatewayError(ErrorCode::Validation, "feedback addressed to another session");
  }
  std::lock_guard lock(mu_);
  if (state_ != SessionState::Running) {
    throw GatewayError(ErrorCode::Conflict, "feedback is accepted only while running");
  }
  const std::string trainer_id = body.at("trainer_id").get<std::string>();
  const std::size_t n = trainer_index_locked(trainer_id);
  if (body.at("trainer_token") != trainer_meta_[n].token) {
    throw GatewayError(ErrorCode::Unauthorized, "trainer token does not match " + trainer_id);
  }

  const std::string step_token = body.at("step_token").get<std::string>();
  const std::string prefix = id_ + ":";
  std::uint64_t seq = 0;
  const char* first = step_token.data() + prefix.size();
  const char* last = step_token.data() + step_token.size();
  if (step_token.rfind(prefix, 0) != 0 || first == last || std::from_chars(first, last, seq, 16).ptr != last ||
      seq >= steps_issued_) {
    throw GatewayError(ErrorCode::Validation, "unknown step token: " + step_token);
  }
  if (window_.empty() || seq < window_.front().seq) {
    throw GatewayError(ErrorCode::WindowExpired, "step token is outside the feedback window: " + step_token);
  }
  const WindowEntry& e = window_[seq - window_.front().seq];
  const FeedbackLabel label = feedback_label_from_string(body.at("label").get<std::string>());
  apply_feedback(trainers_[n], e.state, e.action, label, e.legal, q_, options_.agent);
  refresh_stats_locked();
  return {{"session_id", id_},
          {"trainer_id", trainer_id},
          {"step_token", step_token},
          {"label", to_string(label)},
          {"state_id", e.state},
          {"action", action_wire_name(e.action)},
          {"c_hat", trainers_[n].profile.c_hat},
          {"lambda", trainers_[n].profile.lambda}};
}

json Session::step_locked() {
  const AgentConfig& config = options_.agent;
  const StateId s = world_.encode(grid_);
  const ActionSet legal = world_.legal_actions(grid_);
  const Action a = select_action(s, legal, q_, trainers_, config, agent_rng_);
  const StepOutcome out = world_.step(grid_, a, env_rng_);
  q_update(q_, s, a, out.reward, world_.encode(out.next_state), world_.legal_actions(out.next_state), out.terminal,
           config.ql_params);
  episode_return_ += out.reward;
  const int step_index = t_++;

  const std::uint64_t seq = steps_issued_++;
  window_.push_back({seq, s, a, legal});
  while (window_.size() > options_.window) window_.pop_front();

  for (std::size_t n = 0; n < trainers_.size(); ++n) {
    auto& meta = trainer_meta_[n];
    if (meta.kind != TrainerKind::Simulated) continue;
    const auto signal = oracle_feedback(*oracle_, *meta.oracle_config, s, a, *meta.rng);
    if (signal) apply_feedback(trainers_[n], s, a, signal->label, legal, q_, config);
  }

  const bool episode_done = out.terminal || t_ >= config.max_steps_per_episode;
  if (episode_done) ++episodes_completed_;
  const GridState& g = out.next_state;
  json m = {{"kind", "step"},
            {"session_id", id_},
            {"seq", seq_++},
            {"step_token", token_for(seq)},
            {"episode", episode_},
            {"step", step_index},
            {"state_id", s},
            {"action", action_wire_name(a)},
            {"reward", out.reward},
            {"terminal", out.terminal},
            {"terminal_kind", to_string(out.terminal_kind)},
            {"episode_done", episode_done},
            {"episode_return", episode_return_},
            {"pacman", cell_json(g.pacman)},
            {"ghost", cell_json(g.ghost)},
            {"ghost_orientation", action_wire_name(static_cast<Action>(g.ghost_orientation))},
            {"pellets_remaining", std::popcount(g.pellets_remaining)},
            {"grid", grid_lines(world_.render(g))},
            {"episodes_completed", episodes_completed_},
            {"window", options_.window}};

  if (episode_done) {
    ++episode_;
    t_ = 0;
    episode_return_ = 0.0;
    grid_ = world_.reset();
  } else {
    grid_ = out.next_state;
  }
  publish_locked(m);
  if (episode_done && options_.max_episodes > 0 && episodes_completed_ >= options_.max_episodes) {
    lifecycle_locked(SessionState::Finished);
  }
  refresh_stats_locked();
  return m;
}

json Session::step() {
  std::lock_guard lock(mu_);
  if (options_.pace > 0.0) throw GatewayError(ErrorCode::Conflict, "paced sessions advance on their own");
  if (state_ != SessionState::Running) {
    throw GatewayError(ErrorCode::Conflict, "cannot step a " + std::string(to_string(state_)) + " session");
  }
  json m = step_locked();
  if (++ticks_ % static_cast<std::uint64_t>(options_.snapshot_every) == 0) publish_snapshot_locked();
  return m;
}

void Session::tick() {
  std::lock_guard lock(mu_);
  if (state_ == SessionState::Running) step_locked();
  if (++ticks_ % static_cast<std::uint64_t>(options_.snapshot_every) == 0) publish_snapshot_locked();
}

std::uint64_t Session::subscribe(Sink sink) {
  std::lock_guard lock(mu_);
  const json hello = {{"kind", "hello"}, {"session", descriptor_locked()}, {"stats", stats_locked()}};
  sink(hello.dump());
  const std::uint64_t handle = next_sink_++;
  sinks_.emplace(handle, std::move(sink));
  return handle;
}

void Session::unsubscribe(std::uint64_t handle) {
  std::lock_guard lock(mu_);
  sinks_.erase(handle);
}

// ---------------------------------------------------------------------------

SessionManager::SessionManager(ManagerOptions options)
    : options_(std::move(options)), token_rng_(options_.token_seed.value_or(std::random_device{}())) {
  if (!options_.oracles) options_.oracles = caching_oracle_provider();
}

std::string SessionManager::next_token() {
  std::lock_guard lock(mu_);
  char buf[33];
  const auto hi = static_cast<unsigned long long>(token_rng_());
  const auto lo = static_cast<unsigned long long>(token_rng_());
  std::snprintf(buf, sizeof(buf), "%016llx%016llx", hi, lo);
  return buf;
}

std::shared_ptr<Session> SessionManager::create(const json& request) {
  SessionOptions options = parse_create_request(request);
  std::string id;
  {
    std::lock_guard lock(mu_);
    id = "s" + std::to_string(next_id_++);
  }
  auto session = std::make_shared<Session>(id, std::move(options), options_.oracles, [this] { return next_token(); });
  std::lock_guard lock(mu_);
  sessions_.emplace(id, session);
  return session;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw GatewayError(ErrorCode::NotFound, "unknown session: " + id);
  return it->second;
}

std::vector<std::shared_ptr<Session>> SessionManager::list() const {
  std::lock_guard lock(mu_);
  std::vector<std::shared_ptr<Session>> out;
  for (const auto& [_, s] : sessions_) out.push_back(s);
  return out;
}

}  // namespace crowdshape::gateway
