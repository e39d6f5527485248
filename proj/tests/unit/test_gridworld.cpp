#include <doctest.h>

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <set>

#include "crowdshape/gridworld.hpp"

using namespace crowdshape;

namespace {

GridWorld world_from(const char* text, bool allow_stay = true) {
  GridWorldOptions o;
  o.allow_stay = allow_stay;
  return GridWorld(parse_layout(text), o);
}

std::set<Action> as_set(const ActionSet& s) {
  std::set<Action> out;
  for (std::size_t i = 0; i < s.size(); ++i) out.insert(s.key(i));
  return out;
}

}  // namespace

TEST_SUITE("gridworld") {
  TEST_CASE("default layout matches the shipped layout file") {
    std::ifstream in(std::string(CROWDSHAPE_SOURCE_DIR) + "/layouts/default.txt");
    REQUIRE(in);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(parse_layout(ss.str()).to_text() == default_layout().to_text());
    const Layout l = default_layout();
    CHECK(l.width == 5);
    CHECK(l.height == 5);
    CHECK(l.walls.empty());
    CHECK(l.pacman_start == Cell{0, 0});
    CHECK(l.ghost_start == Cell{4, 4});
    CHECK(l.ghost_orientation == Orientation::West);
    CHECK(l.pellets == std::vector<Cell>{{0, 4}, {2, 2}, {4, 0}});
  }

  TEST_CASE("reset gives the start configuration with every pellet present") {
    const GridWorld w(default_layout());
    const GridState s = w.reset();
    CHECK(s.pacman == Cell{0, 0});
    CHECK(s.ghost == Cell{4, 4});
    CHECK(s.ghost_orientation == Orientation::West);
    CHECK(std::popcount(s.pellets_remaining) == 3);
  }

  TEST_CASE("invalid layouts are configuration errors") {
    Layout l = default_layout();
    l.ghost_start = l.pacman_start;
    CHECK_THROWS_AS(GridWorld{l}, ConfigError);
    CHECK_THROWS_AS(parse_layout("P___G\n"), ConfigError);        // no pellets
    CHECK_THROWS_AS(parse_layout("P__.\n____G\n"), ConfigError);  // ragged
    CHECK_THROWS_AS(parse_layout("P_x.G\n"), ConfigError);
    CHECK_THROWS_AS(parse_layout("_.__G\n"), ConfigError);        // no P
    Layout walled = default_layout();
    walled.walls.push_back({4, 0});
    CHECK_THROWS_AS(walled.validate(), ConfigError);  // pellet on a wall
  }

  TEST_CASE("step onto an empty cell costs one point") {
    const GridWorld w(default_layout());
    Rng rng(1);
    const StepOutcome out = w.step(w.reset(), Action::East, rng);
    CHECK(out.reward == -1.0);
    CHECK_FALSE(out.terminal);
    CHECK(out.terminal_kind == TerminalKind::None);
    CHECK(out.next_state.pacman == Cell{0, 1});
  }

  TEST_CASE("eating the last pellet scores -1 + 10 + 500 and clears") {
    const GridWorld w = world_from(
        "P.___\n"
        "_____\n"
        "_____\n"
        "_____\n"
        "____G\n");
    Rng rng(1);
    const StepOutcome out = w.step(w.reset(), Action::East, rng);
    CHECK(out.reward == -1.0 + 10.0 + 500.0);
    CHECK(out.terminal);
    CHECK(out.terminal_kind == TerminalKind::Cleared);
    CHECK(out.next_state.pellets_remaining == 0u);
  }

  TEST_CASE("eating a pellet that is not the last scores -1 + 10") {
    const GridWorld w = world_from(
        "P.__.\n"
        "_____\n"
        "_____\n"
        "_____\n"
        "____G\n");
    Rng rng(1);
    const StepOutcome out = w.step(w.reset(), Action::East, rng);
    CHECK(out.reward == 9.0);
    CHECK_FALSE(out.terminal);
  }

  TEST_CASE("moving into the ghost's cell is caught: -1 - 500") {
    // The ghost faces West with no other non-reversing move, so both agents
    // land on (0,1).
    const GridWorld w = world_from("P_G.\n");
    Rng rng(3);
    const StepOutcome out = w.step(w.reset(), Action::East, rng);
    CHECK(out.next_state.pacman == Cell{0, 1});
    CHECK(out.next_state.ghost == Cell{0, 1});
    CHECK(out.reward == -501.0);
    CHECK(out.terminal_kind == TerminalKind::Caught);
  }

  TEST_CASE("swapping cells with the ghost is caught and eats nothing") {
    const GridWorld w = world_from("PG.\n");
    Rng rng(3);
    const StepOutcome out = w.step(w.reset(), Action::East, rng);
    CHECK(out.next_state.pacman == Cell{0, 1});
    CHECK(out.next_state.ghost == Cell{0, 0});
    CHECK(out.reward == -501.0);
    CHECK(out.terminal_kind == TerminalKind::Caught);
    CHECK(out.next_state.pellets_remaining == 1u);
  }

  TEST_CASE("illegal actions are contract violations") {
    const GridWorld w(default_layout());
    Rng rng(1);
    CHECK_THROWS_AS(w.step(w.reset(), Action::West, rng), ContractViolation);
    const GridWorld no_stay(default_layout(), GridWorldOptions{GhostPolicy::Random, false, {}});
    CHECK_THROWS_AS(no_stay.step(no_stay.reset(), Action::Stay, rng), ContractViolation);
  }

  TEST_CASE("legal actions follow the geometry") {
    const GridWorld w(default_layout(), GridWorldOptions{GhostPolicy::Random, false, {}});
    GridState s = w.reset();
    CHECK(as_set(w.legal_actions(s)) == std::set<Action>{Action::East, Action::South});
    s.pacman = {2, 2};
    CHECK(as_set(w.legal_actions(s)) == std::set<Action>{Action::North, Action::East, Action::South, Action::West});

    const GridWorld with_stay(default_layout());
    CHECK(as_set(with_stay.legal_actions(with_stay.reset())) ==
          std::set<Action>{Action::East, Action::South, Action::Stay});

    const GridWorld corridor = world_from(
        "#P#__\n"
        "#.___\n"
        "_____\n"
        "_____\n"
        "____G\n",
        false);
    CHECK(as_set(corridor.legal_actions(corridor.reset())) == std::set<Action>{Action::South});
  }

  TEST_CASE("legal action sets come in ActionId order") {
    const GridWorld w(default_layout());
    GridState s = w.reset();
    s.pacman = {2, 2};
    const ActionSet legal = w.legal_actions(s);
    for (std::size_t i = 1; i < legal.size(); ++i) CHECK(index_of(legal.key(i - 1)) < index_of(legal.key(i)));
  }

  TEST_CASE("start state of the default layout has id 799") {
    const GridWorld w(default_layout());
    // Open cells are indexed row-major: Pac-Man 0, ghost 24 of 25; West = 3;
    // full mask 0b111 over 3 pellets.
    const StateId expected = ((0 * 25 + 24) * 4 + 3) * 8 + 7;
    CHECK(expected == 799);
    CHECK(w.encode(w.reset()) == 799);
    CHECK(w.state_count() == 25u * 25u * 4u * 8u);
  }

  TEST_CASE("decode rejects ids past the radix product") {
    const GridWorld w(default_layout());
    CHECK_THROWS_AS(static_cast<void>(w.decode(w.state_count())), ContractViolation);
    CHECK_NOTHROW(static_cast<void>(w.decode(w.state_count() - 1)));
  }

  TEST_CASE("encode and decode are inverse on reachable states") {
    const GridWorld w = world_from(
        "P_#_.\n"
        "_____\n"
        "_#.__\n"
        "_____\n"
        ".___G\n");
    Rng rng(11);
    int checked = 0;
    std::set<StateId> distinct;
    while (checked < 1000) {
      GridState s = w.reset();
      for (int t = 0; t < 60 && checked < 1000; ++t) {
        const StateId id = w.encode(s);
        CHECK(w.decode(id) == s);
        CHECK(id < w.state_count());
        distinct.insert(id);
        ++checked;
        const ActionSet legal = w.legal_actions(s);
        const StepOutcome out = w.step(s, legal.key(uniform_index(rng, legal.size())), rng);
        if (out.terminal) break;
        s = out.next_state;
      }
    }
    CHECK(distinct.size() > 100);
  }

  TEST_CASE("episode rewards stay inside the documented bounds and pellets never reappear") {
    const GridWorld w(default_layout());
    Rng rng(5);
    for (int ep = 0; ep < 300; ++ep) {
      GridState s = w.reset();
      double total = 0.0;
      int steps = 0;
      for (; steps < 200; ++steps) {
        const ActionSet legal = w.legal_actions(s);
        const StepOutcome out = w.step(s, legal.key(uniform_index(rng, legal.size())), rng);
        CHECK((out.next_state.pellets_remaining & ~s.pellets_remaining) == 0u);
        CHECK(out.terminal == (out.terminal_kind != TerminalKind::None));
        total += out.reward;
        s = out.next_state;
        if (out.terminal) {
          ++steps;
          break;
        }
      }
      CHECK(total <= 10.0 * 3 + 500.0 - steps);
      CHECK(total >= -500.0 - steps);
    }
  }

  TEST_CASE("step is a pure function of state, action and rng") {
    const GridWorld w(default_layout());
    Rng a(77), b(77), pick(1);
    GridState s = w.reset();
    for (int t = 0; t < 500; ++t) {
      const ActionSet legal = w.legal_actions(s);
      const Action act = legal.key(uniform_index(pick, legal.size()));
      const StepOutcome x = w.step(s, act, a);
      const StepOutcome y = w.step(s, act, b);
      CHECK(x.next_state == y.next_state);
      CHECK(x.reward == y.reward);
      s = x.terminal ? w.reset() : x.next_state;
    }
  }

  TEST_CASE("random ghost never reverses when it has another move") {
    const GridWorld w(default_layout());
    Rng rng(8);
    for (int i = 0; i < 2000; ++i) {
      GridState s = w.reset();
      s.pacman = {0, 0};
      s.ghost = {2, 2};
      s.ghost_orientation = Orientation::West;
      const StepOutcome out = w.step(s, Action::Stay, rng);
      CHECK(out.next_state.ghost != Cell{2, 3});
      CHECK(out.next_state.ghost_orientation != Orientation::East);
    }
  }

  TEST_CASE("ghost in a dead end reverses") {
    const GridWorld w = world_from(
        "P____\n"
        "_____\n"
        "_____\n"
        "_.###\n"
        "____G\n");
    Rng rng(2);
    GridState s = w.reset();
    s.ghost = {4, 4};
    s.ghost_orientation = Orientation::East;
    const StepOutcome out = w.step(s, Action::Stay, rng);
    CHECK(out.next_state.ghost == Cell{4, 3});
    CHECK(out.next_state.ghost_orientation == Orientation::West);
  }

  TEST_CASE("chasing ghost closes the distance") {
    GridWorldOptions o;
    o.ghost_policy = GhostPolicy::Chase;
    const GridWorld w(default_layout(), o);
    Rng rng(4);
    GridState s = w.reset();
    s.ghost = {2, 2};
    s.ghost_orientation = Orientation::South;
    const StepOutcome out = w.step(s, Action::Stay, rng);
    const int d = std::abs(out.next_state.ghost.row) + std::abs(out.next_state.ghost.col);
    CHECK(d == 3);
  }

  TEST_CASE("layout text round-trips and ghost policy names parse") {
    const Layout l = default_layout();
    CHECK(parse_layout(l.to_text()).to_text() == l.to_text());
    CHECK(ghost_policy_from_string("chase") == GhostPolicy::Chase);
    CHECK_THROWS_AS(ghost_policy_from_string("smart"), ConfigError);
    CHECK(terminal_kind_from_string("caught") == TerminalKind::Caught);
  }

  TEST_CASE("render shows both agents") {
    const GridWorld w(default_layout());
    const std::string pic = w.render(w.reset());
    CHECK(pic.find('P') != std::string::npos);
    CHECK(pic.find('G') != std::string::npos);
  }
}
