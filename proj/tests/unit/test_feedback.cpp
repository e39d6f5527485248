#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "crowdshape/feedback.hpp"

using namespace crowdshape;

namespace {

DeltaRow deltas(std::initializer_list<std::int64_t> values) {
  DeltaRow d;
  std::size_t i = 0;
  for (auto v : values) d.insert(kAllActions[i++], v);
  return d;
}

ActionDistribution dist(std::initializer_list<double> values) {
  ActionDistribution d;
  std::size_t i = 0;
  for (double v : values) d.insert(kAllActions[i++], v);
  return d;
}

// Direct power-form evaluation, usable only for small |delta|.
std::vector<double> power_form(const std::vector<std::int64_t>& delta, double c) {
  std::int64_t total = 0;
  for (auto v : delta) total += v;
  std::vector<double> w;
  double z = 0.0;
  for (auto v : delta) {
    w.push_back(std::pow(c, static_cast<double>(v)) * std::pow(1.0 - c, static_cast<double>(total - v)));
    z += w.back();
  }
  for (double& x : w) x /= z;
  return w;
}

double sum(const ActionDistribution& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += d.value(i);
  return s;
}

}  // namespace

TEST_SUITE("feedback") {
  TEST_CASE("tally counts per state-action pair") {
    FeedbackTally t;
    t.record(4, Action::East, FeedbackLabel::Right);
    CHECK(t.counts(4, Action::East).plus == 1);
    CHECK(t.delta(4, Action::East) == 1);
    t.record(4, Action::East, FeedbackLabel::Right);
    t.record(4, Action::East, FeedbackLabel::Wrong);
    CHECK(t.delta(4, Action::East) == 1);
    CHECK(t.counts(4, Action::East).total() == 3);
    t.record(FeedbackSignal{"t1", 9, Action::East, FeedbackLabel::Wrong, 0});
    CHECK(t.delta(9, Action::East) == -1);
    CHECK(t.delta(4, Action::East) == 1);
    CHECK(t.counts(4, Action::North).total() == 0);
    CHECK(t.has_state(9));
    CHECK_FALSE(t.has_state(10));
    CHECK(t.total_right() == 2);
    CHECK(t.total_wrong() == 2);

    ActionSet legal;
    legal.insert(Action::North, true);
    legal.insert(Action::East, true);
    const DeltaRow row = t.delta_row(4, legal);
    CHECK(row.at(Action::North) == 0);
    CHECK(row.at(Action::East) == 1);
  }

  TEST_CASE("consistency one half is uninformative") {
    const ActionDistribution d = trainer_policy(deltas({5, -3, 2, 0}), 0.5);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.value(i) == doctest::Approx(0.25).epsilon(1e-12));
  }

  TEST_CASE("single approval at 0.8 gives (0.8, 0.2)") {
    const ActionDistribution d = trainer_policy(deltas({1, 0}), 0.8);
    CHECK(d.value(0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(d.value(1) == doctest::Approx(0.2).epsilon(1e-12));
  }

  TEST_CASE("three actions with mixed evidence") {
    const ActionDistribution d = trainer_policy(deltas({2, -1, 0}), 0.7);
    const auto expected = power_form({2, -1, 0}, 0.7);
    for (std::size_t i = 0; i < 3; ++i) CHECK(d.value(i) == doctest::Approx(expected[i]).epsilon(1e-12));
    CHECK(d.value(0) == doctest::Approx(0.792).epsilon(1e-3));
    CHECK(d.value(1) == doctest::Approx(0.062).epsilon(1e-2));
    CHECK(d.value(2) == doctest::Approx(0.146).epsilon(1e-2));
  }

  TEST_CASE("log-space evaluation agrees with the power form on random small inputs") {
    Rng rng(21);
    for (int i = 0; i < 500; ++i) {
      const std::size_t n = 2 + uniform_index(rng, 4);
      std::vector<std::int64_t> raw;
      DeltaRow row;
      for (std::size_t k = 0; k < n; ++k) {
        raw.push_back(static_cast<std::int64_t>(uniform_index(rng, 13)) - 6);
        row.insert(kAllActions[k], raw.back());
      }
      const double c = 0.05 + 0.9 * uniform01(rng);
      const auto expected = power_form(raw, c);
      const ActionDistribution d = trainer_policy(row, c);
      for (std::size_t k = 0; k < n; ++k) CHECK(d.value(k) == doctest::Approx(expected[k]).epsilon(1e-9));
    }
  }

  TEST_CASE("negating evidence and mirroring consistency is an exact symmetry") {
    Rng rng(22);
    for (int i = 0; i < 300; ++i) {
      DeltaRow row, neg;
      for (std::size_t k = 0; k < 4; ++k) {
        const auto v = static_cast<std::int64_t>(uniform_index(rng, 101)) - 50;
        row.insert(kAllActions[k], v);
        neg.insert(kAllActions[k], -v);
      }
      const double c = 0.01 + 0.98 * uniform01(rng);
      const ActionDistribution a = trainer_policy(row, c);
      const ActionDistribution b = trainer_policy(neg, 1.0 - c);
      for (std::size_t k = 0; k < 4; ++k) CHECK(a.value(k) == doctest::Approx(b.value(k)).epsilon(1e-12));
      CHECK(std::abs(sum(a) - 1.0) <= 1e-9);
    }
  }

  TEST_CASE("out-of-range consistency is rejected") {
    CHECK_THROWS_AS(trainer_policy(deltas({1, 0}), 0.0), ContractViolation);
    CHECK_THROWS_AS(trainer_policy(deltas({1, 0}), 1.0), ContractViolation);
    CHECK(clamp_consistency(1.0) == 1.0 - kDefaultConsistencyEpsilon);
    CHECK(clamp_consistency(-3.0) == kDefaultConsistencyEpsilon);
  }

  TEST_CASE("a single trainer fuses to its own policy") {
    const TrainerEvidence e{deltas({3, -1, 0}), 0.65};
    const ActionDistribution single = trainer_policy(e.delta_row, e.c);
    const ActionDistribution fused = multi_trainer_policy(std::span<const TrainerEvidence>(&e, 1));
    for (std::size_t k = 0; k < 3; ++k) CHECK(fused.value(k) == doctest::Approx(single.value(k)).epsilon(1e-15));
  }

  TEST_CASE("adversarial trainer with negated evidence equals a consistent one") {
    const std::vector<TrainerEvidence> mixed{{deltas({1, 0}), 0.8}, {deltas({-1, 0}), 0.2}};
    const std::vector<TrainerEvidence> twin{{deltas({1, 0}), 0.8}, {deltas({1, 0}), 0.8}};
    const ActionDistribution a = multi_trainer_policy(mixed);
    const ActionDistribution b = multi_trainer_policy(twin);
    // Two independent approvals at 0.8: 0.64 / (0.64 + 0.04).
    CHECK(b.value(0) == doctest::Approx(0.64 / 0.68).epsilon(1e-12));
    for (std::size_t k = 0; k < 2; ++k) CHECK(a.value(k) == doctest::Approx(b.value(k)).epsilon(1e-12));
  }

  TEST_CASE("all uninformative trainers give a uniform fusion") {
    const std::vector<TrainerEvidence> t{{deltas({4, -2, 1}), 0.5}, {deltas({-3, 0, 9}), 0.5}};
    const ActionDistribution d = multi_trainer_policy(t);
    for (std::size_t k = 0; k < 3; ++k) CHECK(d.value(k) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  TEST_CASE("fusion is order invariant and equals iterated products") {
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
      std::vector<TrainerEvidence> t;
      const std::size_t n = 1 + uniform_index(rng, 6);
      for (std::size_t j = 0; j < n; ++j) {
        DeltaRow row;
        for (std::size_t k = 0; k < 4; ++k) row.insert(kAllActions[k], static_cast<std::int64_t>(uniform_index(rng, 101)) - 50);
        t.push_back({row, 0.01 + 0.98 * uniform01(rng)});
      }
      const ActionDistribution fused = multi_trainer_policy(t);
      CHECK(std::abs(sum(fused) - 1.0) <= 1e-9);

      std::vector<TrainerEvidence> reversed(t.rbegin(), t.rend());
      const ActionDistribution back = multi_trainer_policy(reversed);
      for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(fused.value(k) - back.value(k)) <= 1e-12);

      ActionDistribution iter = trainer_policy(t[0].delta_row, t[0].c);
      for (std::size_t j = 1; j < n; ++j) iter = combine_policies(iter, trainer_policy(t[j].delta_row, t[j].c));
      for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(fused.value(k) - iter.value(k)) <= 1e-9);
    }
  }

  TEST_CASE("fusion input errors") {
    CHECK_THROWS_AS(multi_trainer_policy(std::span<const TrainerEvidence>{}), ContractViolation);
    const std::vector<TrainerEvidence> mismatched{{deltas({1, 0}), 0.8}, {deltas({1, 0, 0}), 0.8}};
    CHECK_THROWS_AS(multi_trainer_policy(mismatched), ContractViolation);
  }

  TEST_CASE("tally overload matches the evidence form") {
    std::vector<FeedbackTally> tallies(2);
    tallies[0].record(3, Action::North, FeedbackLabel::Right);
    tallies[0].record(3, Action::North, FeedbackLabel::Right);
    tallies[1].record(3, Action::East, FeedbackLabel::Wrong);
    std::vector<TrainerProfile> profiles{{"a", 0.9, 0.0, {}}, {"b", 0.3, 0.0, {}}};
    ActionSet legal;
    legal.insert(Action::North, true);
    legal.insert(Action::East, true);
    const ActionDistribution d = multi_trainer_policy(tallies, profiles, 3, legal);
    const std::vector<TrainerEvidence> ev{{deltas({2, 0}), 0.9}, {deltas({0, -1}), 0.3}};
    const ActionDistribution e = multi_trainer_policy(ev);
    for (std::size_t k = 0; k < 2; ++k) CHECK(d.value(k) == doctest::Approx(e.value(k)).epsilon(1e-15));
    CHECK_THROWS_AS(multi_trainer_policy(tallies, std::span<const TrainerProfile>(profiles.data(), 1), 3, legal),
                    ContractViolation);
  }

  TEST_CASE("combining with the RL policy") {
    const ActionDistribution pf = dist({0.8, 0.2});
    const ActionDistribution half = dist({0.5, 0.5});
    const ActionDistribution a = combine_policies(pf, half);
    CHECK(a.value(0) == doctest::Approx(0.8).epsilon(1e-12));
    const ActionDistribution b = combine_policies(pf, dist({0.25, 0.75}));
    CHECK(b.value(0) == doctest::Approx(0.2 / 0.35).epsilon(1e-12));
    CHECK(b.value(1) == doctest::Approx(0.15 / 0.35).epsilon(1e-12));
    const ActionDistribution pr = dist({0.1, 0.6, 0.3});
    const ActionDistribution c = combine_policies(dist({1.0 / 3, 1.0 / 3, 1.0 / 3}), pr);
    for (std::size_t k = 0; k < 3; ++k) CHECK(c.value(k) == doctest::Approx(pr.value(k)).epsilon(1e-12));
  }

  TEST_CASE("a vanishing product falls back to the RL policy") {
    const ActionDistribution pr = dist({0.0, 1.0});
    const ActionDistribution c = combine_policies(dist({1.0, 0.0}), pr);
    CHECK(c.value(0) == 0.0);
    CHECK(c.value(1) == 1.0);
  }

  TEST_CASE("feedback log lines round-trip") {
    std::stringstream ss;
    write_feedback_log_header(ss);
    const FeedbackLogRecord r{3, 41, {"t7", 799, Action::Stay, FeedbackLabel::Wrong, 12}};
    write_feedback_log_record(ss, r);
    std::string header, line;
    std::getline(ss, header);
    std::getline(ss, line);
    CHECK(header == "trial,episode,timestep,trainer_id,state_id,action_id,label");
    const FeedbackLogRecord back = parse_feedback_log_record(line);
    CHECK(back.trial == 3);
    CHECK(back.episode == 41);
    CHECK(back.signal.trainer_id == "t7");
    CHECK(back.signal.state == 799);
    CHECK(back.signal.action == Action::Stay);
    CHECK(back.signal.label == FeedbackLabel::Wrong);
    CHECK(back.signal.timestep == 12);
    CHECK_THROWS(parse_feedback_log_record("1,2,3"));
  }
}
