#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crowdshape/common.hpp"

namespace crowdshape {

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Ghost heading. Shares numbering with the four move actions.
enum class Orientation : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

std::string_view to_string(Orientation o);

using StateId = std::uint64_t;

/// Static description of a maze. Pellet slot i is the i-th pellet in
/// row-major order; bit i of a pellet mask refers to that slot.
struct Layout {
  int width = 5;
  int height = 5;
  std::vector<Cell> walls;
  Cell pacman_start{};
  Cell ghost_start{};
  Orientation ghost_orientation = Orientation::West;
  std::vector<Cell> pellets;

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;

  [[nodiscard]] bool in_bounds(Cell c) const;
  [[nodiscard]] bool is_wall(Cell c) const;
  [[nodiscard]] bool is_open(Cell c) const { return in_bounds(c) && !is_wall(c); }

  /// Canonical ASCII rendering (same format parse_layout accepts).
  [[nodiscard]] std::string to_text() const;
};

/// Parses the ASCII layout format: one row per line; `P` Pac-Man start, `G`
/// ghost start (facing West), `.` pellet, `#` wall, `_` empty. Blank lines and
/// trailing whitespace are ignored.
Layout parse_layout(std::string_view text);
Layout load_layout(const std::string& path);

/// The shipped 5x5 layout: open board, Pac-Man top-left, ghost bottom-right,
/// pellets in the two free corners and the centre.
Layout default_layout();

struct GridState {
  Cell pacman{};
  Cell ghost{};
  Orientation ghost_orientation = Orientation::West;
  std::uint32_t pellets_remaining = 0;
  friend bool operator==(const GridState&, const GridState&) = default;
};

enum class TerminalKind : std::uint8_t { None = 0, Cleared = 1, Caught = 2 };

std::string_view to_string(TerminalKind k);
TerminalKind terminal_kind_from_string(std::string_view name);

struct StepOutcome {
  GridState next_state;
  double reward = 0.0;
  bool terminal = false;
  TerminalKind terminal_kind = TerminalKind::None;
};

enum class GhostPolicy : std::uint8_t { Random, Chase };

GhostPolicy ghost_policy_from_string(std::string_view name);
std::string_view to_string(GhostPolicy p);

struct Rewards {
  double step = -1.0;
  double pellet = 10.0;
  double clear = 500.0;
  double caught = -500.0;
};

struct GridWorldOptions {
  GhostPolicy ghost_policy = GhostPolicy::Random;
  bool allow_stay = true;
  Rewards rewards{};
};

/// One-ghost Pac-Man on a rectangular grid. Immutable after construction;
/// all episode state lives in GridState so instances can be shared freely.
class GridWorld {
 public:
  explicit GridWorld(Layout layout, GridWorldOptions options = {});

  [[nodiscard]] const Layout& layout() const { return layout_; }
  [[nodiscard]] const GridWorldOptions& options() const { return options_; }

  [[nodiscard]] GridState reset() const;

  /// Advances one tick: Pac-Man moves, then the ghost, then collisions and
  /// pellets are resolved (a caught Pac-Man eats nothing). Throws
  /// ContractViolation for an illegal action.
  StepOutcome step(const GridState& state, Action action, Rng& rng) const;

  [[nodiscard]] ActionSet legal_actions(const GridState& state) const;
  [[nodiscard]] ActionSet legal_actions(StateId id) const { return legal_actions(decode(id)); }

  /// Mixed-radix id: ((pacman * open + ghost) * 4 + orientation) * 2^pellets + mask,
  /// where cells are indexed over open (non-wall) cells in row-major order.
  [[nodiscard]] StateId encode(const GridState& state) const;
  [[nodiscard]] GridState decode(StateId id) const;
  [[nodiscard]] StateId state_count() const { return state_count_; }

  [[nodiscard]] std::size_t pellet_count() const { return layout_.pellets.size(); }
  [[nodiscard]] std::uint32_t full_pellet_mask() const;

  /// Multi-line ASCII picture of a state (P, G, ., #, _).
  [[nodiscard]] std::string render(const GridState& state) const;

 private:
  [[nodiscard]] int open_index(Cell c) const;
  [[nodiscard]] std::optional<int> pellet_slot(Cell c) const;
  [[nodiscard]] Orientation move_ghost(const GridState& state, Cell pacman_after, Cell& ghost_after,
                                       Rng& rng) const;

  Layout layout_;
  GridWorldOptions options_;
  std::vector<int> open_index_;  // row-major cell -> open index, -1 for walls
  std::vector<Cell> open_cells_;
  std::vector<int> pellet_slot_;  // row-major cell -> pellet slot, -1 if none
  StateId state_count_ = 0;
};

Cell neighbour(Cell c, Action a);

}  // namespace crowdshape
