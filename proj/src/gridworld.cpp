#include "crowdshape/gridworld.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace crowdshape {

namespace {

constexpr Orientation reverse(Orientation o) {
  return static_cast<Orientation>((static_cast<int>(o) + 2) % 4);
}

constexpr int manhattan(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

std::string cell_str(Cell c) {
  return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

}  // namespace

std::string_view to_string(Orientation o) { return to_string(static_cast<Action>(o)); }

std::string_view to_string(TerminalKind k) {
  switch (k) {
    case TerminalKind::None: return "none";
    case TerminalKind::Cleared: return "cleared";
    case TerminalKind::Caught: return "caught";
  }
  return "?";
}

TerminalKind terminal_kind_from_string(std::string_view name) {
  if (name == "none") return TerminalKind::None;
  if (name == "cleared") return TerminalKind::Cleared;
  if (name == "caught") return TerminalKind::Caught;
  throw IoError("unknown terminal kind: " + std::string(name));
}

GhostPolicy ghost_policy_from_string(std::string_view name) {
  if (name == "random") return GhostPolicy::Random;
  if (name == "chase") return GhostPolicy::Chase;
  throw ConfigError("unknown ghost policy: " + std::string(name));
}

std::string_view to_string(GhostPolicy p) { return p == GhostPolicy::Random ? "random" : "chase"; }

Cell neighbour(Cell c, Action a) {
  switch (a) {
    case Action::North: return {c.row - 1, c.col};
    case Action::East: return {c.row, c.col + 1};
    case Action::South: return {c.row + 1, c.col};
    case Action::West: return {c.row, c.col - 1};
    case Action::Stay: return c;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Layout

bool Layout::in_bounds(Cell c) const { return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width; }

bool Layout::is_wall(Cell c) const { return std::find(walls.begin(), walls.end(), c) != walls.end(); }

void Layout::validate() const {
  if (width <= 0 || height <= 0) throw ConfigError("layout dimensions must be positive");
  for (Cell w : walls) {
    if (!in_bounds(w)) throw ConfigError("wall out of bounds at " + cell_str(w));
  }
  if (!in_bounds(pacman_start)) throw ConfigError("pacman start out of bounds");
  if (!in_bounds(ghost_start)) throw ConfigError("ghost start out of bounds");
  if (is_wall(pacman_start)) throw ConfigError("pacman start on a wall");
  if (is_wall(ghost_start)) throw ConfigError("ghost start on a wall");
  if (pacman_start == ghost_start) throw ConfigError("pacman and ghost share a start cell");
  if (pellets.empty()) throw ConfigError("layout has no pellets");
  if (pellets.size() > 24) throw ConfigError("at most 24 pellets are supported");
  for (std::size_t i = 0; i < pellets.size(); ++i) {
    if (!in_bounds(pellets[i])) throw ConfigError("pellet out of bounds at " + cell_str(pellets[i]));
    if (is_wall(pellets[i])) throw ConfigError("pellet on a wall at " + cell_str(pellets[i]));
    if (pellets[i] == pacman_start) throw ConfigError("pellet on the pacman start cell");
    for (std::size_t j = 0; j < i; ++j) {
      if (pellets[j] == pellets[i]) throw ConfigError("duplicate pellet at " + cell_str(pellets[i]));
    }
  }
}

std::string Layout::to_text() const {
  std::string out;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const Cell cell{r, c};
      char ch = '_';
      if (is_wall(cell)) ch = '#';
      else if (cell == pacman_start) ch = 'P';
      else if (cell == ghost_start) ch = 'G';
      else if (std::find(pellets.begin(), pellets.end(), cell) != pellets.end()) ch = '.';
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

Layout parse_layout(std::string_view text) {
  Layout layout;
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    if (line.empty()) continue;
    rows.push_back(line);
  }
  if (rows.empty()) throw ConfigError("layout is empty");
  layout.height = static_cast<int>(rows.size());
  layout.width = static_cast<int>(rows.front().size());
  bool saw_pacman = false;
  bool saw_ghost = false;
  for (int r = 0; r < layout.height; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (static_cast<int>(row.size()) != layout.width) {
      throw ConfigError("layout row " + std::to_string(r) + " has width " + std::to_string(row.size()) +
                        ", expected " + std::to_string(layout.width));
    }
    for (int c = 0; c < layout.width; ++c) {
      const Cell cell{r, c};
      switch (row[static_cast<std::size_t>(c)]) {
        case 'P':
          if (saw_pacman) throw ConfigError("layout has more than one P");
          layout.pacman_start = cell;
          saw_pacman = true;
          break;
        case 'G':
          if (saw_ghost) throw ConfigError("layout has more than one G");
          layout.ghost_start = cell;
          layout.ghost_orientation = Orientation::West;
          saw_ghost = true;
          break;
        case '.': layout.pellets.push_back(cell); break;
        case '#': layout.walls.push_back(cell); break;
        case '_': break;
        default:
          throw ConfigError(std::string("unexpected layout character '") + row[static_cast<std::size_t>(c)] +
                            "' at " + cell_str(cell));
      }
    }
  }
  if (!saw_pacman) throw ConfigError("layout has no P");
  if (!saw_ghost) throw ConfigError("layout has no G");
  layout.validate();
  return layout;
}

Layout load_layout(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open layout file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_layout(buf.str());
}

Layout default_layout() {
  return parse_layout(
      "P___.\n"
      "_____\n"
      "__.__\n"
      "_____\n"
      ".___G\n");
}

// ---------------------------------------------------------------------------
// GridWorld

GridWorld::GridWorld(Layout layout, GridWorldOptions options)
    : layout_(std::move(layout)), options_(options) {
  layout_.validate();
  const auto cells = static_cast<std::size_t>(layout_.width * layout_.height);
  open_index_.assign(cells, -1);
  pellet_slot_.assign(cells, -1);
  for (int r = 0; r < layout_.height; ++r) {
    for (int c = 0; c < layout_.width; ++c) {
      const Cell cell{r, c};
      if (layout_.is_wall(cell)) continue;
      open_index_[static_cast<std::size_t>(r * layout_.width + c)] = static_cast<int>(open_cells_.size());
      open_cells_.push_back(cell);
    }
  }
  for (std::size_t i = 0; i < layout_.pellets.size(); ++i) {
    const Cell p = layout_.pellets[i];
    pellet_slot_[static_cast<std::size_t>(p.row * layout_.width + p.col)] = static_cast<int>(i);
  }

  // Pac-Man must always have somewhere to go.
  if (!options_.allow_stay) {
    for (Cell c : open_cells_) {
      bool any = false;
      for (Action a : {Action::North, Action::East, Action::South, Action::West}) {
        any = any || layout_.is_open(neighbour(c, a));
      }
      if (!any) throw ConfigError("cell " + cell_str(c) + " has no legal move and Stay is disabled");
    }
  }

  const auto open = static_cast<StateId>(open_cells_.size());
  state_count_ = open * open * 4 * (StateId{1} << layout_.pellets.size());
}

std::uint32_t GridWorld::full_pellet_mask() const {
  return static_cast<std::uint32_t>((std::uint64_t{1} << layout_.pellets.size()) - 1);
}

int GridWorld::open_index(Cell c) const {
  if (!layout_.in_bounds(c)) return -1;
  return open_index_[static_cast<std::size_t>(c.row * layout_.width + c.col)];
}

std::optional<int> GridWorld::pellet_slot(Cell c) const {
  const int slot = pellet_slot_[static_cast<std::size_t>(c.row * layout_.width + c.col)];
  if (slot < 0) return std::nullopt;
  return slot;
}

GridState GridWorld::reset() const {
  return GridState{layout_.pacman_start, layout_.ghost_start, layout_.ghost_orientation, full_pellet_mask()};
}

ActionSet GridWorld::legal_actions(const GridState& state) const {
  ActionSet out;
  for (Action a : {Action::North, Action::East, Action::South, Action::West}) {
    if (layout_.is_open(neighbour(state.pacman, a))) out.insert(a, true);
  }
  if (options_.allow_stay) out.insert(Action::Stay, true);
  return out;
}

Orientation GridWorld::move_ghost(const GridState& state, Cell pacman_after, Cell& ghost_after, Rng& rng) const {
  ActionMap<Cell> moves;
  for (Action a : {Action::North, Action::East, Action::South, Action::West}) {
    const Cell next = neighbour(state.ghost, a);
    if (layout_.is_open(next)) moves.insert(a, next);
  }
  if (moves.empty()) {
    ghost_after = state.ghost;
    return state.ghost_orientation;
  }
  // No reversing unless it is the only way out.
  const auto back = static_cast<Action>(reverse(state.ghost_orientation));
  ActionMap<Cell> options;
  for (std::size_t i = 0; i < moves.size(); ++i) {
    if (moves.key(i) != back) options.insert(moves.key(i), moves.value(i));
  }
  if (options.empty()) options = moves;

  if (options_.ghost_policy == GhostPolicy::Chase) {
    int best = 1 << 30;
    for (std::size_t i = 0; i < options.size(); ++i) best = std::min(best, manhattan(options.value(i), pacman_after));
    ActionMap<Cell> closest;
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (manhattan(options.value(i), pacman_after) == best) closest.insert(options.key(i), options.value(i));
    }
    options = closest;
  }
  const std::size_t pick = uniform_index(rng, options.size());
  ghost_after = options.value(pick);
  return static_cast<Orientation>(options.key(pick));
}

StepOutcome GridWorld::step(const GridState& state, Action action, Rng& rng) const {
  const ActionSet legal = legal_actions(state);
  require(legal.contains(action), "illegal action " + std::string(to_string(action)) + " at " + cell_str(state.pacman));

  const Rewards& rw = options_.rewards;
  StepOutcome out;
  out.next_state = state;
  out.reward = rw.step;
  const Cell pacman_after = neighbour(state.pacman, action);
  out.next_state.pacman = pacman_after;

  Cell ghost_after{};
  out.next_state.ghost_orientation = move_ghost(state, pacman_after, ghost_after, rng);
  out.next_state.ghost = ghost_after;

  // Same cell after both moved, or the two swapped cells.
  const bool swapped = pacman_after == state.ghost && ghost_after == state.pacman;
  if (ghost_after == pacman_after || swapped) {
    out.reward += rw.caught;
    out.terminal = true;
    out.terminal_kind = TerminalKind::Caught;
    return out;
  }

  if (auto slot = pellet_slot(pacman_after)) {
    const std::uint32_t bit = std::uint32_t{1} << *slot;
    if (state.pellets_remaining & bit) {
      out.next_state.pellets_remaining &= ~bit;
      out.reward += rw.pellet;
      if (out.next_state.pellets_remaining == 0) {
        out.reward += rw.clear;
        out.terminal = true;
        out.terminal_kind = TerminalKind::Cleared;
      }
    }
  }
  return out;
}

StateId GridWorld::encode(const GridState& state) const {
  const int p = open_index(state.pacman);
  const int g = open_index(state.ghost);
  require(p >= 0 && g >= 0, "state has a cell outside the open board");
  require(state.pellets_remaining <= full_pellet_mask(), "pellet mask wider than the layout");
  const auto open = static_cast<StateId>(open_cells_.size());
  StateId id = static_cast<StateId>(p) * open + static_cast<StateId>(g);
  id = id * 4 + static_cast<StateId>(state.ghost_orientation);
  id = (id << layout_.pellets.size()) | state.pellets_remaining;
  return id;
}

GridState GridWorld::decode(StateId id) const {
  if (id >= state_count_) {
    throw ContractViolation("state id " + std::to_string(id) + " out of range (" + std::to_string(state_count_) + ")");
  }
  const auto open = static_cast<StateId>(open_cells_.size());
  GridState s;
  s.pellets_remaining = static_cast<std::uint32_t>(id & full_pellet_mask());
  id >>= layout_.pellets.size();
  s.ghost_orientation = static_cast<Orientation>(id % 4);
  id /= 4;
  s.ghost = open_cells_[static_cast<std::size_t>(id % open)];
  s.pacman = open_cells_[static_cast<std::size_t>(id / open)];
  return s;
}

std::string GridWorld::render(const GridState& state) const {
  std::string out;
  for (int r = 0; r < layout_.height; ++r) {
    for (int c = 0; c < layout_.width; ++c) {
      const Cell cell{r, c};
      char ch = '_';
      if (layout_.is_wall(cell)) ch = '#';
      else if (cell == state.ghost) ch = 'G';
      else if (cell == state.pacman) ch = 'P';
      else if (auto slot = pellet_slot(cell); slot && (state.pellets_remaining >> *slot & 1U)) ch = '.';
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace crowdshape
