#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <unordered_map>

#include "crowdshape/common.hpp"
#include "crowdshape/gridworld.hpp"

namespace crowdshape {

struct QLearningParams {
  double alpha_q = 0.05;
  double gamma = 0.9;
  double tau = 1.5;

  void validate() const;
};

/// Sparse action-value table. Unseen pairs read as 0.0.
class QTable {
 public:
  using Row = std::array<double, kMaxActions>;

  [[nodiscard]] double get(StateId s, Action a) const;
  void set(StateId s, Action a, double value);

  /// Values of `actions` at `s`, in the order of `actions`.
  [[nodiscard]] QRow row(StateId s, const ActionSet& actions) const;
  [[nodiscard]] double max_value(StateId s, const ActionSet& actions) const;

  [[nodiscard]] std::size_t stored_states() const { return rows_.size(); }
  [[nodiscard]] const std::unordered_map<StateId, Row>& rows() const { return rows_; }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::unordered_map<StateId, Row> rows_;
};

/// One-step TD update. The bootstrap term is dropped when `terminal`.
void q_update(QTable& q, StateId s, Action a, double reward, StateId s_next, const ActionSet& next_actions,
              bool terminal, const QLearningParams& params);

/// Softmax of Q/tau over the row, max-shifted.
ActionDistribution boltzmann_policy(const QRow& q_row, double tau);

/// The learner's belief that each action is optimal (P1^Q). It is the
/// Boltzmann policy itself; P0^Q is its complement.
ActionDistribution optimality_belief(const QRow& q_row, double tau);

/// Inverse-CDF sample with a single uniform draw.
Action sample_action(const ActionDistribution& dist, Rng& rng);

/// Greedy argmax; ties go to the lowest ActionId.
Action greedy_action(const QRow& q_row);

/// CSV with header `state_id,action_id,value`, rows sorted by (state, action).
/// Only non-zero entries are written.
void write_qtable_csv(const QTable& q, std::ostream& out);
QTable read_qtable_csv(std::istream& in);
void save_qtable(const QTable& q, const std::string& path);
QTable load_qtable(const std::string& path);

}  // namespace crowdshape
