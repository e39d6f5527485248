#include "crowdshape/tabular_rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <tuple>
#include <vector>

namespace crowdshape {

void QLearningParams::validate() const {
  if (!(alpha_q > 0.0 && alpha_q <= 1.0)) throw ConfigError("alpha_q must lie in (0,1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1]");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be positive");
}

double QTable::get(StateId s, Action a) const {
  const auto it = rows_.find(s);
  return it == rows_.end() ? 0.0 : it->second[index_of(a)];
}

void QTable::set(StateId s, Action a, double value) {
  require(std::isfinite(value), "Q values must be finite");
  auto [it, inserted] = rows_.try_emplace(s);
  if (inserted) it->second.fill(0.0);
  it->second[index_of(a)] = value;
}

QRow QTable::row(StateId s, const ActionSet& actions) const {
  QRow out;
  const auto it = rows_.find(s);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const Action a = actions.key(i);
    out.insert(a, it == rows_.end() ? 0.0 : it->second[index_of(a)]);
  }
  return out;
}

double QTable::max_value(StateId s, const ActionSet& actions) const {
  require(!actions.empty(), "max over an empty action set");
  const QRow r = row(s, actions);
  double best = r.value(0);
  for (std::size_t i = 1; i < r.size(); ++i) best = std::max(best, r.value(i));
  return best;
}

void q_update(QTable& q, StateId s, Action a, double reward, StateId s_next, const ActionSet& next_actions,
              bool terminal, const QLearningParams& params) {
  require(std::isfinite(reward), "reward must be finite");
  const double bootstrap = terminal ? 0.0 : params.gamma * q.max_value(s_next, next_actions);
  const double old = q.get(s, a);
  q.set(s, a, old + params.alpha_q * (reward + bootstrap - old));
}

ActionDistribution boltzmann_policy(const QRow& q_row, double tau) {
  require(!q_row.empty(), "boltzmann_policy needs at least one action");
  require(tau > 0.0, "temperature must be positive");
  double top = q_row.value(0);
  for (std::size_t i = 1; i < q_row.size(); ++i) top = std::max(top, q_row.value(i));
  std::array<double, kMaxActions> w{};
  double total = 0.0;
  for (std::size_t i = 0; i < q_row.size(); ++i) {
    w[i] = std::exp((q_row.value(i) - top) / tau);
    total += w[i];
  }
  ActionDistribution out;
  for (std::size_t i = 0; i < q_row.size(); ++i) out.insert(q_row.key(i), w[i] / total);
  return out;
}

ActionDistribution optimality_belief(const QRow& q_row, double tau) { return boltzmann_policy(q_row, tau); }

Action sample_action(const ActionDistribution& dist, Rng& rng) {
  require(!dist.empty(), "cannot sample from an empty distribution");
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    acc += dist.value(i);
    if (u < acc) return dist.key(i);
  }
  // Rounding left u above the accumulated mass: take the last supported action.
  for (std::size_t i = dist.size(); i-- > 0;) {
    if (dist.value(i) > 0.0) return dist.key(i);
  }
  return dist.key(dist.size() - 1);
}

Action greedy_action(const QRow& q_row) {
  require(!q_row.empty(), "greedy_action needs at least one action");
  std::size_t best = 0;
  for (std::size_t i = 1; i < q_row.size(); ++i) {
    const bool better = q_row.value(i) > q_row.value(best);
    const bool tie_lower = q_row.value(i) == q_row.value(best) && q_row.key(i) < q_row.key(best);
    if (better || tie_lower) best = i;
  }
  return q_row.key(best);
}

void write_qtable_csv(const QTable& q, std::ostream& out) {
  std::vector<std::tuple<StateId, std::size_t, double>> entries;
  for (const auto& [s, row] : q.rows()) {
    for (std::size_t a = 0; a < kMaxActions; ++a) {
      if (row[a] != 0.0) entries.emplace_back(s, a, row[a]);
    }
  }
  std::sort(entries.begin(), entries.end());
  out << "state_id,action_id,value\n";
  for (const auto& [s, a, v] : entries) out << s << ',' << a << ',' << format_double(v) << '\n';
}

QTable read_qtable_csv(std::istream& in) {
  QTable q;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty Q-table file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "state_id,action_id,value") throw IoError("unexpected Q-table header: " + line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw IoError("malformed Q-table row " + std::to_string(lineno));
    }
    try {
      const StateId s = std::stoull(line.substr(0, c1));
      const auto a = static_cast<std::size_t>(std::stoul(line.substr(c1 + 1, c2 - c1 - 1)));
      q.set(s, action_from_index(a), parse_double(std::string_view(line).substr(c2 + 1)));
    } catch (const std::logic_error& e) {
      throw IoError("malformed Q-table row " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return q;
}

void save_qtable(const QTable& q, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write Q-table: " + path);
  write_qtable_csv(q, out);
  if (!out) throw IoError("failed writing Q-table: " + path);
}

QTable load_qtable(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open Q-table: " + path);
  return read_qtable_csv(in);
}

}  // namespace crowdshape
