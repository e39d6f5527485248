#include <doctest.h>

#include <numeric>
#include <sstream>

#include "crowdshape/agent.hpp"

using namespace crowdshape;

namespace {

const GridWorld& world() {
  static const GridWorld w(default_layout());
  return w;
}

const OraclePolicy& oracle() {
  static const OraclePolicy o = [] {
    OracleBuildOptions opt;
    opt.verification_rollouts = 0;
    return build_oracle(world(), opt);
  }();
  return o;
}

AgentConfig fixed(double c) {
  AgentConfig cfg;
  cfg.estimate_consistency = false;
  cfg.fixed_c = c;
  return cfg;
}

std::vector<OracleTrainerConfig> crowd(std::initializer_list<double> cs, double likelihood = 0.2) {
  std::vector<OracleTrainerConfig> out;
  for (double c : cs) out.push_back({"t" + std::to_string(out.size() + 1), likelihood, c, 0});
  return out;
}

double mean_reward(const std::vector<EpisodeResult>& r, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += r[i].total_reward;
  return s / static_cast<double>(to - from);
}

}  // namespace

TEST_SUITE("agent") {
  TEST_CASE("without feedback the shaped policy is the Boltzmann policy") {
    QTable q;
    q.set(799, Action::East, 3.0);
    const ActionSet legal = world().legal_actions(799);
    const AgentConfig cfg;
    const std::vector<TrainerState> trainers{make_trainer_state("a", cfg), make_trainer_state("b", cfg)};
    const ActionDistribution shaped = shaped_policy(799, legal, q, trainers, cfg);
    const ActionDistribution plain = boltzmann_policy(q.row(799, legal), cfg.ql_params.tau);
    for (std::size_t i = 0; i < legal.size(); ++i) CHECK(shaped.value(i) == plain.value(i));
    const ActionDistribution none = shaped_policy(799, legal, q, {}, cfg);
    for (std::size_t i = 0; i < legal.size(); ++i) CHECK(none.value(i) == plain.value(i));
  }

  TEST_CASE("overwhelming consistent feedback dominates the policy") {
    const AgentConfig cfg = fixed(0.999);
    TrainerState t = make_trainer_state("a", cfg);
    CHECK(t.profile.c_hat == 0.999);
    const ActionSet legal = world().legal_actions(799);
    for (int i = 0; i < 50; ++i) t.tally.record(799, Action::South, FeedbackLabel::Right);
    const QTable q;
    const ActionDistribution d = shaped_policy(799, legal, q, std::span<const TrainerState>(&t, 1), cfg);
    CHECK(d.at(Action::South) > 0.99);
  }

  TEST_CASE("a fixed consistency of one half leaves the policy untouched") {
    const AgentConfig cfg = fixed(0.5);
    TrainerState t = make_trainer_state("a", cfg);
    for (int i = 0; i < 9; ++i) t.tally.record(799, Action::East, FeedbackLabel::Wrong);
    QTable q;
    q.set(799, Action::South, 1.0);
    const ActionSet legal = world().legal_actions(799);
    const ActionDistribution d = shaped_policy(799, legal, q, std::span<const TrainerState>(&t, 1), cfg);
    const ActionDistribution plain = boltzmann_policy(q.row(799, legal), cfg.ql_params.tau);
    for (std::size_t i = 0; i < legal.size(); ++i) CHECK(d.value(i) == doctest::Approx(plain.value(i)).epsilon(1e-12));
  }

  TEST_CASE("apply_feedback tallies and, when estimating, updates the tracker") {
    const AgentConfig est;
    TrainerState t = make_trainer_state("a", est, 0.8);
    QTable q;
    q.set(799, Action::East, 1.0);
    const ActionSet legal = world().legal_actions(799);
    const auto diag = apply_feedback(t, 799, Action::East, FeedbackLabel::Right, legal, q, est);
    REQUIRE(diag.has_value());
    CHECK(t.tally.delta(799, Action::East) == 1);
    CHECK(diag->alpha == 1.0);
    CHECK(t.profile.c_hat == doctest::Approx(diag->c_sa).epsilon(1e-15));
    CHECK_THROWS_AS(apply_feedback(t, 799, Action::West, FeedbackLabel::Right, legal, q, est), ContractViolation);

    const AgentConfig fx = fixed(0.8);
    TrainerState f = make_trainer_state("b", fx);
    CHECK_FALSE(apply_feedback(f, 799, Action::East, FeedbackLabel::Wrong, legal, q, fx).has_value());
    CHECK(f.profile.c_hat == 0.8);
    CHECK(f.tally.delta(799, Action::East) == -1);
  }

  TEST_CASE("training is deterministic in the seeds") {
    const auto trainers = crowd({0.3, 0.9});
    const AgentConfig cfg;
    const auto a = train(world(), &oracle(), cfg, 40, trainers, {11, 2});
    const auto b = train(world(), &oracle(), cfg, 40, trainers, {11, 2});
    const auto c = train(world(), &oracle(), cfg, 40, trainers, {11, 3});
    CHECK(a == b);
    CHECK_FALSE(a == c);
  }

  TEST_CASE("eight trainers at likelihood 0.2 emit about 1.6 labels per step") {
    const auto trainers = crowd({0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});
    const auto r = train(world(), &oracle(), AgentConfig{}, 200, trainers, {5, 0});
    std::uint64_t events = 0, steps = 0;
    for (const auto& e : r) {
      events += e.feedback_events;
      steps += static_cast<std::uint64_t>(e.steps);
      CHECK(e.c_hat.size() == 8);
    }
    const double rate = static_cast<double>(events) / static_cast<double>(steps);
    MESSAGE("events per step = " << rate);
    CHECK(rate == doctest::Approx(1.6).epsilon(0.0625));
  }

  TEST_CASE("plain Q-learning improves with experience") {
    const auto r = train(world(), nullptr, AgentConfig{}, 2000, {}, {3, 0});
    const double early = mean_reward(r, 0, 200);
    const double late = mean_reward(r, 1800, 2000);
    MESSAGE("early " << early << " late " << late);
    CHECK(late > early);
    for (const auto& e : r) {
      CHECK(e.steps >= 1);
      CHECK(e.steps <= 200);
      CHECK(e.c_hat.empty());
    }
  }

  TEST_CASE("a reliable trainer speeds up learning") {
    const auto shaped = train(world(), &oracle(), AgentConfig{}, 300, crowd({0.9}, 1.0), {3, 0});
    const auto plain = train(world(), nullptr, AgentConfig{}, 300, {}, {3, 0});
    CHECK(mean_reward(shaped, 0, 300) > mean_reward(plain, 0, 300));
  }

  TEST_CASE("sinks receive one log line per feedback event") {
    std::stringstream log, diag;
    EpisodeSinks sinks{&log, &diag, 4};
    const auto r = train(world(), &oracle(), AgentConfig{}, 10, crowd({0.8, 0.4}), {1, 4}, &sinks);
    std::uint64_t events = 0;
    for (const auto& e : r) events += e.feedback_events;
    const auto lines = [](const std::string& s) { return static_cast<std::uint64_t>(std::count(s.begin(), s.end(), '\n')); };
    CHECK(lines(log.str()) == events);
    CHECK(lines(diag.str()) == events);
    if (events > 0) CHECK(log.str().rfind("4,", 0) == 0);
  }

  TEST_CASE("trial CSV round-trip") {
    const auto r = train(world(), &oracle(), AgentConfig{}, 20, crowd({0.7, 0.6, 0.1}), {8, 1});
    std::stringstream ss;
    write_trial_csv(ss, r, 3);
    const auto back = read_trial_csv(ss);
    REQUIRE(back.size() == r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(back[i].total_reward == r[i].total_reward);
      CHECK(back[i].steps == r[i].steps);
      CHECK(back[i].terminal_kind == r[i].terminal_kind);
      CHECK(back[i].c_hat == r[i].c_hat);
    }
    std::stringstream bad("episode,total_reward,steps,terminal_kind,c_hat_1\n0,1,2,none\n");
    CHECK_THROWS_AS(read_trial_csv(bad), IoError);
  }

  TEST_CASE("configuration errors") {
    AgentConfig cfg;
    cfg.fixed_c = 0.8;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = fixed(0.8);
    cfg.fixed_c.reset();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = fixed(1.0);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.zeta = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(train(world(), nullptr, AgentConfig{}, 0, {}, {}), ContractViolation);
    CHECK_THROWS_AS(train(world(), nullptr, AgentConfig{}, 5, crowd({0.8}), {}), ContractViolation);
  }
}
