#include "crowdshape/common.hpp"

#include <charconv>
#include <cmath>
#include <system_error>

namespace crowdshape {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::North: return "North";
    case Action::East: return "East";
    case Action::South: return "South";
    case Action::West: return "West";
    case Action::Stay: return "Stay";
  }
  return "?";
}

Action action_from_string(std::string_view name) {
  for (Action a : kAllActions) {
    if (to_string(a) == name) return a;
  }
  throw ContractViolation("unknown action: " + std::string(name));
}

Action action_from_index(std::size_t id) {
  require(id < kMaxActions, "action id out of range: " + std::to_string(id));
  return kAllActions[id];
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw IoError("cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    if (text == "nan") return std::nan("");
    throw IoError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace crowdshape
